//! Command-line front end: subcommand dispatch, config layering, and the
//! CSV/JSON artifact writers. Reruns with the same config produce
//! byte-identical artifacts.

pub mod config;

use crate::models::{self, Coefficient, Family, ProblemSpec};
use crate::paths::{generate_brownian, ExtremaDecomposition, PathSeed, SamplePath, TimeGrid};
use crate::stepper;
use crate::verify::{self, LawCheck, LawParams, SeedInfo, StudyReport};
use clap::{Args, Parser, Subcommand};
use config::{OutputFormat, RunConfig};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

/// Simulation and verification runner for perturbed SDE families.
#[derive(Debug, Parser)]
#[command(name = "psde", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate sample paths and report summary statistics.
    Simulate(CommonArgs),
    /// Cross-method uniqueness gap study over coupled grid refinements.
    Verify(CommonArgs),
    /// Law-level Monte Carlo check (see --kind).
    Law(CommonArgs),
    /// Picard iteration convergence-rate study.
    Picard(CommonArgs),
    /// Strong convergence order study.
    Convergence(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Verify(_) => "verify",
            Command::Law(_) => "law",
            Command::Picard(_) => "picard",
            Command::Convergence(_) => "convergence",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a)
            | Command::Verify(a)
            | Command::Law(a)
            | Command::Picard(a)
            | Command::Convergence(a) => a,
        }
    }
}

/// Flags mirror config-file keys one to one; a flag set on the command line
/// wins over the same key in the file.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Config file with flat key=value lines.
    #[arg(long)]
    pub config: Option<std::path::PathBuf>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub b: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub n_steps: Option<usize>,
    #[arg(long)]
    pub n_paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<String>,
    /// Comma-separated subset of csv,json.
    #[arg(long)]
    pub format: Option<String>,
    #[arg(long)]
    pub sample_paths_out: Option<usize>,
    /// Law check selector: max_law, girsanov_mean_one or squared_qv.
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl CommonArgs {
    fn override_map(&self) -> BTreeMap<String, String> {
        let mut map = BTreeMap::new();
        let mut put = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                map.insert(key.to_string(), v);
            }
        };
        put("family", self.family.clone());
        put("sigma", self.sigma.clone());
        put("b", self.b.clone());
        put("alpha", self.alpha.map(|v| v.to_string()));
        put("beta", self.beta.map(|v| v.to_string()));
        put("xi", self.xi.map(|v| v.to_string()));
        put("t_end", self.t_end.map(|v| v.to_string()));
        put("n_steps", self.n_steps.map(|v| v.to_string()));
        put("n_paths", self.n_paths.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("out_dir", self.out_dir.clone());
        put("format", self.format.clone());
        put(
            "sample_paths_out",
            self.sample_paths_out.map(|v| v.to_string()),
        );
        put("kind", self.kind.clone());
        put("levels", self.levels.map(|v| v.to_string()));
        put("tol", self.tol.map(|v| v.to_string()));
        put("max_iter", self.max_iter.map(|v| v.to_string()));
        map
    }
}

/// Exit code contract: 0 all checks passed, 1 a check failed, 2 the run
/// never started (config or admissibility error).
pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug)]
enum RunError {
    /// Bad input: malformed config, unknown preset, inadmissible parameters.
    Config(String),
    /// The run started but a computation or write failed.
    Run(String),
}

impl RunError {
    fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Run(_) => EXIT_FAIL,
        }
    }

    fn message(&self) -> &str {
        match self {
            RunError::Config(m) | RunError::Run(m) => m,
        }
    }
}

impl From<config::ConfigError> for RunError {
    fn from(e: config::ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<verify::StudyError> for RunError {
    fn from(e: verify::StudyError) -> Self {
        match e {
            verify::StudyError::Inadmissible(_) => RunError::Config(e.to_string()),
            other => RunError::Run(other.to_string()),
        }
    }
}

impl From<crate::paths::PathError> for RunError {
    fn from(e: crate::paths::PathError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<crate::stepper::StepperError> for RunError {
    fn from(e: crate::stepper::StepperError) -> Self {
        match e {
            crate::stepper::StepperError::Inadmissible(_)
            | crate::stepper::StepperError::AlphaOutOfRange(_) => RunError::Config(e.to_string()),
            other => RunError::Run(other.to_string()),
        }
    }
}

impl From<io::Error> for RunError {
    fn from(e: io::Error) -> Self {
        RunError::Run(format!("io error: {e}"))
    }
}

/// Runs one parsed invocation and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(pass) => {
            if pass {
                EXIT_PASS
            } else {
                EXIT_FAIL
            }
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, RunError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("config file {}: {e}", path.display())))?;
        cfg.apply_map(&config::parse_config_str(&text)?)?;
    }
    cfg.apply_map(&args.override_map())?;
    Ok(cfg)
}

fn build_spec(cfg: &RunConfig) -> ProblemSpec {
    match cfg.family {
        Family::MaxPerturbed => ProblemSpec::max_perturbed(cfg.sigma, cfg.b, cfg.alpha),
        Family::ReflectedMaxPerturbed => ProblemSpec::reflected(cfg.sigma, cfg.b, cfg.alpha),
        Family::MaxDrift => ProblemSpec::max_drift(cfg.max_drift_b, cfg.xi),
        Family::DoublyPerturbed => {
            ProblemSpec::doubly_perturbed(cfg.sigma, cfg.b, cfg.alpha, cfg.beta, cfg.xi)
        }
    }
}

fn validated_spec(cfg: &RunConfig) -> Result<ProblemSpec, RunError> {
    let spec = build_spec(cfg);
    let v = models::validate_params(&spec);
    for w in &v.warnings {
        eprintln!("warning: {w}");
    }
    if !v.is_ok() {
        return Err(RunError::Config(v.violations.join("; ")));
    }
    Ok(spec)
}

fn execute(cli: &Cli) -> Result<bool, RunError> {
    let cfg = load_config(cli.command.args())?;
    let grid = TimeGrid::new(cfg.t_end, cfg.n_steps).map_err(|e| RunError::Config(e.to_string()))?;

    let (report, samples) = match &cli.command {
        Command::Simulate(_) => {
            let spec = validated_spec(&cfg)?;
            run_simulate(&spec, &cfg, grid)?
        }
        Command::Verify(_) => {
            let spec = validated_spec(&cfg)?;
            let report = verify::uniqueness_gap_study(&spec, cfg.n_paths, grid, cfg.seed)?;
            (report, sample_paths(&spec, &cfg, grid)?)
        }
        Command::Law(_) => {
            let kind = match cfg.kind.as_str() {
                "max_law" => LawCheck::MaxLaw,
                "girsanov_mean_one" => LawCheck::GirsanovMeanOne,
                "squared_qv" => LawCheck::SquaredQv,
                other => {
                    return Err(RunError::Config(format!(
                        "field `kind`: unknown law check `{other}` (expected max_law, girsanov_mean_one or squared_qv)"
                    )))
                }
            };
            let drift = match (kind, cfg.b) {
                (LawCheck::GirsanovMeanOne, Coefficient::Constant(c)) => c,
                (LawCheck::GirsanovMeanOne, _) => {
                    return Err(RunError::Config(
                        "field `b`: the girsanov_mean_one check needs a constant drift (b=const:<value>)"
                            .to_string(),
                    ))
                }
                _ => 0.0,
            };
            let params = LawParams {
                alpha: cfg.alpha,
                drift,
                grid,
            };
            let report = verify::law_ks_study(kind, params, cfg.n_paths, cfg.seed)?;
            let spec = ProblemSpec::reflected(
                Coefficient::Constant(1.0),
                Coefficient::Constant(0.0),
                cfg.alpha,
            );
            (report, sample_paths(&spec, &cfg, grid)?)
        }
        Command::Picard(_) => {
            let spec = validated_spec(&cfg)?;
            let report =
                verify::picard_rate_study(&spec, grid, cfg.n_paths, cfg.seed, cfg.tol, cfg.max_iter)?;
            (report, sample_paths(&spec, &cfg, grid)?)
        }
        Command::Convergence(_) => {
            let spec = validated_spec(&cfg)?;
            let report =
                verify::convergence_order_study(&spec, grid, cfg.levels, cfg.n_paths, cfg.seed)?;
            (report, sample_paths(&spec, &cfg, grid)?)
        }
    };

    let pass = apply_threshold_overrides(&report, &cfg)?;
    write_artifacts(cli.command.name(), &report, pass, &samples, &cfg)?;
    println!(
        "{}: {}",
        cli.command.name(),
        if pass { "pass" } else { "fail" }
    );
    Ok(pass)
}

/// `threshold_<metric>=<bound>` config keys replace the study's built-in
/// pass rule with `metric <= bound`, AND-ed over all overrides.
fn apply_threshold_overrides(report: &StudyReport, cfg: &RunConfig) -> Result<bool, RunError> {
    if cfg.thresholds.is_empty() {
        return Ok(report.pass);
    }
    let mut pass = true;
    for (metric, bound) in &cfg.thresholds {
        let value = report.metrics.get(metric).ok_or_else(|| {
            RunError::Config(format!(
                "field `threshold_{metric}`: the report has no metric `{metric}`"
            ))
        })?;
        if !(value <= bound) {
            pass = false;
        }
    }
    Ok(pass)
}

type Sample = (u64, SamplePath, ExtremaDecomposition);

/// Simulates the first `sample_paths_out` paths for the paths.csv artifact.
fn sample_paths(
    spec: &ProblemSpec,
    cfg: &RunConfig,
    grid: TimeGrid,
) -> Result<Vec<Sample>, RunError> {
    let n = cfg.sample_paths_out.min(cfg.n_paths);
    (0..n as u64)
        .map(|p| {
            let w = generate_brownian(grid, PathSeed::new(cfg.seed, p));
            let d = stepper::simulate(spec, &w)?;
            Ok((p, w, d))
        })
        .collect()
}

fn run_simulate(
    spec: &ProblemSpec,
    cfg: &RunConfig,
    grid: TimeGrid,
) -> Result<(StudyReport, Vec<Sample>), RunError> {
    struct PathStat {
        terminal: f64,
        terminal_max: f64,
        residual: f64,
    }
    let stats: Vec<Result<PathStat, RunError>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let w = generate_brownian(grid, PathSeed::new(cfg.seed, p));
            let d = stepper::simulate(spec, &w)?;
            Ok(PathStat {
                terminal: d.x.last(),
                terminal_max: d.max.last(),
                residual: stepper::identity_residual(spec, &w, &d),
            })
        })
        .collect();

    let mut report = StudyReport {
        study_kind: verify::StudyKind::Simulate,
        parameters: BTreeMap::new(),
        metrics: BTreeMap::new(),
        pass: false,
        seeds: SeedInfo {
            master_seed: cfg.seed,
            n_paths: cfg.n_paths,
        },
        raw: Vec::new(),
    };
    report
        .parameters
        .insert("family".into(), spec.family.name().to_string());
    report
        .parameters
        .insert("t_end".into(), grid.t_end().to_string());
    report
        .parameters
        .insert("n_steps".into(), grid.n_steps().to_string());

    let mut sum_terminal = 0.0;
    let mut sum_max = 0.0;
    let mut worst_residual = 0.0f64;
    let n = stats.len() as f64;
    for (p, s) in stats.into_iter().enumerate() {
        let s = s?;
        sum_terminal += s.terminal;
        sum_max += s.terminal_max;
        worst_residual = worst_residual.max(s.residual);
        report.raw.push(verify::RawRow {
            path_id: p as u64,
            metric: "terminal".into(),
            value: s.terminal,
        });
    }
    report.metrics.insert("mean_terminal".into(), sum_terminal / n);
    report
        .metrics
        .insert("mean_terminal_max".into(), sum_max / n);
    report
        .metrics
        .insert("max_identity_residual".into(), worst_residual);
    report.pass = worst_residual <= stepper::IDENTITY_TOL;

    let samples = sample_paths(spec, cfg, grid)?;
    Ok((report, samples))
}

/// 17 significant digits; round-trips to the same f64 bit pattern.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn paths_csv(samples: &[Sample]) -> String {
    let mut out = String::from("path_id,k,t,w,x,max,min,local_time\n");
    for (p, w, d) in samples {
        let grid = w.grid();
        for k in 0..grid.n_nodes() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                p,
                k,
                fmt17(grid.time(k)),
                fmt17(w.values()[k]),
                fmt17(d.x.values()[k]),
                fmt17(d.max.values()[k]),
                fmt17(d.min.values()[k]),
                fmt17(d.local_time.values()[k]),
            );
        }
    }
    out
}

fn raw_metrics_csv(report: &StudyReport) -> String {
    let mut out = String::from("path_id,metric,value\n");
    for row in &report.raw {
        let _ = writeln!(out, "{},{},{}", row.path_id, row.metric, fmt17(row.value));
    }
    out
}

/// JSON serializer writing every f64 with 17 significant digits so the text
/// is bit-exact reproducible and round-trip exact.
struct Sig17Formatter;

impl serde_json::ser::Formatter for Sig17Formatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

fn to_json_17(value: &impl Serialize) -> Result<String, RunError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17Formatter);
    value
        .serialize(&mut ser)
        .map_err(|e| RunError::Run(format!("serialize report: {e}")))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| RunError::Run(format!("serialize report: {e}")))
}

#[derive(Serialize)]
struct ReportEnvelope<'a> {
    command: &'a str,
    pass: bool,
    #[serde(flatten)]
    report: &'a StudyReport,
}

fn write_artifacts(
    command: &str,
    report: &StudyReport,
    pass: bool,
    samples: &[Sample],
    cfg: &RunConfig,
) -> Result<(), RunError> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let dir: &Path = &cfg.out_dir;
    if cfg.formats.contains(&OutputFormat::Csv) {
        std::fs::write(dir.join("paths.csv"), paths_csv(samples))?;
        if !report.raw.is_empty() {
            std::fs::write(dir.join("raw_metrics.csv"), raw_metrics_csv(report))?;
        }
    }
    if cfg.formats.contains(&OutputFormat::Json) {
        let envelope = ReportEnvelope {
            command,
            pass,
            report,
        };
        std::fs::write(dir.join("report.json"), to_json_17(&envelope)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt17_round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 123456.789, -0.0] {
            let s = fmt17(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn cli_overrides_beat_config_file() {
        let mut cfg = RunConfig::default();
        cfg.apply_map(&config::parse_config_str("alpha=0.3\nn_paths=7").unwrap())
            .unwrap();
        let args = CommonArgs {
            config: None,
            family: None,
            sigma: None,
            b: None,
            alpha: Some(0.9),
            beta: None,
            xi: None,
            t_end: None,
            n_steps: None,
            n_paths: None,
            seed: None,
            out_dir: None,
            format: None,
            sample_paths_out: None,
            kind: None,
            levels: None,
            tol: None,
            max_iter: None,
        };
        cfg.apply_map(&args.override_map()).unwrap();
        assert_eq!(cfg.alpha, 0.9);
        assert_eq!(cfg.n_paths, 7);
    }

    #[test]
    fn json_floats_use_17_digits() {
        #[derive(Serialize)]
        struct T {
            v: f64,
        }
        let s = to_json_17(&T { v: 0.5 }).unwrap();
        assert_eq!(s, "{\"v\":5.0000000000000000e-1}\n");
    }

    #[test]
    fn inadmissible_params_exit_config() {
        let cfg = RunConfig {
            family: Family::DoublyPerturbed,
            alpha: 0.5,
            beta: 0.5,
            ..RunConfig::default()
        };
        let err = validated_spec(&cfg).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);
    }
}
