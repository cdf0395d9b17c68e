//! Flat `key=value` config format and its merge with command-line
//! overrides. Every parameter in this domain is a scalar or an enum, so a
//! nested format would buy nothing; flat text diffs trivially.

use crate::models::{Coefficient, Family, MaxDriftCoefficient};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value, got `{text}`")]
    BadLine { line: usize, text: String },
    #[error("line {line}: empty key")]
    EmptyKey { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("field `{field}`: {message}")]
    BadValue { field: String, message: String },
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
}

/// Parses the flat config text: one `key=value` per line, `#` starts a
/// comment (whole line, or trailing after whitespace), blank lines ignored,
/// later duplicates win. Values are kept as raw strings; typing happens in
/// [`RunConfig::from_map`].
pub fn parse_config_str(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let mut content = raw;
        if let Some(pos) = find_comment_start(content) {
            content = &content[..pos];
        }
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::BadLine {
                line,
                text: content.to_string(),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::EmptyKey { line });
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// `#` opens a comment at line start or after whitespace; a `#` glued to a
/// value is part of the value.
fn find_comment_start(line: &str) -> Option<usize> {
    let bytes = line.as_bytes();
    for (i, &b) in bytes.iter().enumerate() {
        if b == b'#' && (i == 0 || bytes[i - 1].is_ascii_whitespace()) {
            return Some(i);
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Fully typed run configuration. Field names equal config keys equal CLI
/// flag names (with `-` for `_`).
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub family: Family,
    pub sigma: Coefficient,
    pub b: Coefficient,
    pub max_drift_b: MaxDriftCoefficient,
    pub alpha: f64,
    pub beta: f64,
    pub xi: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
    pub sample_paths_out: usize,
    pub kind: String,
    pub levels: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Pass-threshold overrides: `threshold_<metric>=<bound>` forces the
    /// report's pass flag to `metric <= bound`, AND-ed over all overrides.
    pub thresholds: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            family: Family::MaxPerturbed,
            sigma: Coefficient::Constant(1.0),
            b: Coefficient::Constant(0.0),
            max_drift_b: MaxDriftCoefficient::ArctanMax { scale: 1.0 },
            alpha: 0.5,
            beta: 0.0,
            xi: 0.0,
            t_end: 1.0,
            n_steps: 1024,
            n_paths: 100,
            seed: 42,
            out_dir: default_out_dir(),
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
            sample_paths_out: 10,
            kind: "max_law".to_string(),
            levels: 3,
            tol: 1e-10,
            max_iter: 200,
            thresholds: BTreeMap::new(),
        }
    }
}

/// The environment variable overriding the default output directory.
pub const OUT_DIR_ENV: &str = "PSDE_OUT_DIR";

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn parse_field<T: std::str::FromStr>(field: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        field: field.to_string(),
        message: format!("cannot parse `{value}`"),
    })
}

impl RunConfig {
    /// Applies `map` on top of `self`. Callers layer maps in precedence
    /// order: defaults, then config file, then CLI flags.
    pub fn apply_map(&mut self, map: &BTreeMap<String, String>) -> Result<(), ConfigError> {
        for (key, value) in map {
            self.apply(key, value)?;
        }
        Ok(())
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_map(map)?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "family" => {
                self.family = match value {
                    "max_perturbed" => Family::MaxPerturbed,
                    "reflected" => Family::ReflectedMaxPerturbed,
                    "max_drift" => Family::MaxDrift,
                    "doubly" => Family::DoublyPerturbed,
                    other => {
                        return Err(ConfigError::BadValue {
                            field: "family".into(),
                            message: format!(
                                "unknown family `{other}` (expected max_perturbed, reflected, max_drift or doubly)"
                            ),
                        })
                    }
                }
            }
            "sigma" => self.sigma = Coefficient::parse(value)?,
            "b" => {
                // the drift slot is family-dependent; accept either preset
                // grammar and let dispatch pick the right one
                match Coefficient::parse(value) {
                    Ok(c) => self.b = c,
                    Err(_) => self.max_drift_b = MaxDriftCoefficient::parse(value)?,
                }
            }
            "alpha" => self.alpha = parse_field(key, value)?,
            "beta" => self.beta = parse_field(key, value)?,
            "xi" | "x0" => self.xi = parse_field(key, value)?,
            "t_end" => self.t_end = parse_field(key, value)?,
            "n_steps" => self.n_steps = parse_field(key, value)?,
            "n_paths" => self.n_paths = parse_field(key, value)?,
            "seed" => self.seed = parse_field(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "format" => {
                let mut formats = Vec::new();
                for part in value.split(',') {
                    formats.push(match part.trim() {
                        "csv" => OutputFormat::Csv,
                        "json" => OutputFormat::Json,
                        other => {
                            return Err(ConfigError::BadValue {
                                field: "format".into(),
                                message: format!("unknown format `{other}`"),
                            })
                        }
                    });
                }
                self.formats = formats;
            }
            "sample_paths_out" => self.sample_paths_out = parse_field(key, value)?,
            "kind" => self.kind = value.to_string(),
            "levels" => self.levels = parse_field(key, value)?,
            "tol" => self.tol = parse_field(key, value)?,
            "max_iter" => self.max_iter = parse_field(key, value)?,
            _ => {
                if let Some(metric) = key.strip_prefix("threshold_") {
                    let bound: f64 = parse_field(key, value)?;
                    self.thresholds.insert(metric.to_string(), bound);
                } else {
                    return Err(ConfigError::UnknownKey(key.to_string()));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_text() {
        let text = "\
# a comment
family = doubly
alpha=0.25
beta = 0.25   # trailing comment

seed=7
";
        let map = parse_config_str(text).unwrap();
        assert_eq!(map["family"], "doubly");
        assert_eq!(map["alpha"], "0.25");
        assert_eq!(map["beta"], "0.25");
        assert_eq!(map["seed"], "7");
        assert_eq!(map.len(), 4);
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(matches!(
            parse_config_str("just words"),
            Err(ConfigError::BadLine { line: 1, .. })
        ));
        assert!(matches!(
            parse_config_str("=3"),
            Err(ConfigError::EmptyKey { line: 1 })
        ));
    }

    #[test]
    fn duplicate_keys_last_wins() {
        let map = parse_config_str("alpha=0.1\nalpha=0.9").unwrap();
        assert_eq!(map["alpha"], "0.9");
    }

    #[test]
    fn typed_config_and_unknown_keys() {
        let map = parse_config_str("family=doubly\nalpha=0.25\nbeta=0.25\nxi=1.0").unwrap();
        let cfg = RunConfig::from_map(&map).unwrap();
        assert_eq!(cfg.family, Family::DoublyPerturbed);
        assert_eq!(cfg.alpha, 0.25);
        assert_eq!(cfg.xi, 1.0);

        let bad = parse_config_str("frobnicate=1").unwrap();
        assert!(matches!(
            RunConfig::from_map(&bad),
            Err(ConfigError::UnknownKey(k)) if k == "frobnicate"
        ));
    }

    #[test]
    fn threshold_overrides_collected() {
        let map = parse_config_str("threshold_ks_statistic=0.01").unwrap();
        let cfg = RunConfig::from_map(&map).unwrap();
        assert_eq!(cfg.thresholds["ks_statistic"], 0.01);
    }

    #[test]
    fn preset_and_format_errors_name_the_field() {
        let map = parse_config_str("sigma=warp:9").unwrap();
        assert!(RunConfig::from_map(&map).is_err());
        let map = parse_config_str("format=csv,xml").unwrap();
        let err = RunConfig::from_map(&map).unwrap_err();
        assert!(err.to_string().contains("format"));
    }
}
