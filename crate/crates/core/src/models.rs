//! Problem definitions for the four equation families: coefficient presets,
//! perturbation parameters and admissibility validation.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("unknown coefficient preset `{0}` (expected const:<c>, affine:<a>,<b>, bsin:<c> or piecewise:<neg>,<nonneg>)")]
    UnknownCoefficient(String),
    #[error("unknown max-drift preset `{0}` (expected atan:<scale> or tanh_atan:<x_scale>,<m_scale>)")]
    UnknownMaxDrift(String),
    #[error("bad numeric argument in `{0}`")]
    BadNumber(String),
    #[error("contraction factor undefined: requires alpha < 1 and beta < 1, got alpha={alpha}, beta={beta}")]
    ContractionUndefined { alpha: f64, beta: f64 },
}

/// Scalar coefficient `(t, x) -> real` with sampled-checkable regularity
/// claims. The claims are metadata: tests probe them by sampling, nothing
/// proves them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Coefficient {
    /// `c`
    Constant(f64),
    /// `a + b·x`
    Affine { intercept: f64, slope: f64 },
    /// `c·(1 + sin x)`; Lipschitz with constant `c`, bounded by `2c`.
    BoundedSine { scale: f64 },
    /// `neg` for `x < 0`, `nonneg` otherwise. Discontinuous at 0 but may
    /// still be strictly positive, which is all the diffusion needs.
    Piecewise { neg: f64, nonneg: f64 },
}

impl Coefficient {
    pub fn eval(&self, _t: f64, x: f64) -> f64 {
        match *self {
            Coefficient::Constant(c) => c,
            Coefficient::Affine { intercept, slope } => intercept + slope * x,
            Coefficient::BoundedSine { scale } => scale * (1.0 + x.sin()),
            Coefficient::Piecewise { neg, nonneg } => {
                if x < 0.0 {
                    neg
                } else {
                    nonneg
                }
            }
        }
    }

    pub fn claims_lipschitz(&self) -> bool {
        !matches!(self, Coefficient::Piecewise { .. })
    }

    pub fn claims_linear_growth(&self) -> bool {
        true
    }

    /// The (ND) lower bound `ε > 0`, when one holds.
    pub fn claims_lower_bound_epsilon(&self) -> Option<f64> {
        match *self {
            Coefficient::Constant(c) if c > 0.0 => Some(c),
            Coefficient::Piecewise { neg, nonneg } if neg > 0.0 && nonneg > 0.0 => {
                Some(neg.min(nonneg))
            }
            Coefficient::Affine { intercept, slope } if slope == 0.0 && intercept > 0.0 => {
                Some(intercept)
            }
            _ => None,
        }
    }

    /// Parse a preset string, e.g. `const:1`, `affine:0.1,0.5`, `bsin:0.5`,
    /// `piecewise:1,2`.
    pub fn parse(spec: &str) -> Result<Self, ModelError> {
        let (name, args) = split_preset(spec);
        let nums = parse_numbers(spec, args)?;
        match (name, nums.as_slice()) {
            ("const", [c]) => Ok(Coefficient::Constant(*c)),
            ("affine", [a, b]) => Ok(Coefficient::Affine {
                intercept: *a,
                slope: *b,
            }),
            ("bsin", [c]) => Ok(Coefficient::BoundedSine { scale: *c }),
            ("piecewise", [n, p]) => Ok(Coefficient::Piecewise { neg: *n, nonneg: *p }),
            _ => Err(ModelError::UnknownCoefficient(spec.to_string())),
        }
    }
}

/// Drift `(x, m) -> real` for the max-in-drift family, defined on `m >= x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MaxDriftCoefficient {
    /// `scale·atan(m)`; bounded, strictly increasing in `m` for `scale > 0`.
    ArctanMax { scale: f64 },
    /// `x_scale·tanh(x) + m_scale·atan(m)`; bounded, strictly increasing in
    /// `m` for `m_scale > 0`.
    TanhPlusArctanMax { x_scale: f64, m_scale: f64 },
}

impl MaxDriftCoefficient {
    pub fn eval(&self, x: f64, m: f64) -> f64 {
        match *self {
            MaxDriftCoefficient::ArctanMax { scale } => scale * m.atan(),
            MaxDriftCoefficient::TanhPlusArctanMax { x_scale, m_scale } => {
                x_scale * x.tanh() + m_scale * m.atan()
            }
        }
    }

    pub fn bounded(&self) -> bool {
        true
    }

    pub fn strictly_increasing_in_m(&self) -> bool {
        match *self {
            MaxDriftCoefficient::ArctanMax { scale } => scale > 0.0,
            MaxDriftCoefficient::TanhPlusArctanMax { m_scale, .. } => m_scale > 0.0,
        }
    }

    pub fn parse(spec: &str) -> Result<Self, ModelError> {
        let (name, args) = split_preset(spec);
        let nums = parse_numbers(spec, args)?;
        match (name, nums.as_slice()) {
            ("atan", [s]) => Ok(MaxDriftCoefficient::ArctanMax { scale: *s }),
            ("tanh_atan", [xs, ms]) => Ok(MaxDriftCoefficient::TanhPlusArctanMax {
                x_scale: *xs,
                m_scale: *ms,
            }),
            _ => Err(ModelError::UnknownMaxDrift(spec.to_string())),
        }
    }
}

fn split_preset(spec: &str) -> (&str, &str) {
    match spec.split_once(':') {
        Some((n, a)) => (n, a),
        None => (spec, ""),
    }
}

fn parse_numbers(spec: &str, args: &str) -> Result<Vec<f64>, ModelError> {
    if args.is_empty() {
        return Ok(Vec::new());
    }
    args.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ModelError::BadNumber(spec.to_string()))
        })
        .collect()
}

/// Monotone transform of the running maximum (the `H(max)` generalization):
/// absolutely continuous, increasing, `H(0) = 0`, with sampled `0 < H' < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum HTransform {
    /// `H(x) = scale·atan(x)`; `H' = scale/(1+x²) ∈ (0, scale]`.
    ScaledArctan { scale: f64 },
    /// `H(x) = scale·x`, recovering the plain `α·max` perturbation.
    Linear { scale: f64 },
}

impl HTransform {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            HTransform::ScaledArctan { scale } => scale * x.atan(),
            HTransform::Linear { scale } => scale * x,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            HTransform::ScaledArctan { scale } => scale / (1.0 + x * x),
            HTransform::Linear { scale } => scale,
        }
    }
}

/// Time-dependent perturbation weight `α(s)` with `0 <= α(s) < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum AlphaOfT {
    Constant(f64),
    /// Linear ramp from `start` at `t = 0` to `end` at `t = t_end`.
    Ramp { start: f64, end: f64, t_end: f64 },
}

impl AlphaOfT {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            AlphaOfT::Constant(a) => a,
            AlphaOfT::Ramp { start, end, t_end } => start + (end - start) * (t / t_end),
        }
    }
}

/// Perturbation weights for one problem: `α` (max), `β` (min), plus the
/// optional generalized hooks `H(max)` and `α(s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationParams {
    pub alpha: f64,
    pub beta: f64,
    pub h_transform: Option<HTransform>,
    pub alpha_of_t: Option<AlphaOfT>,
}

impl PerturbationParams {
    pub fn plain(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            h_transform: None,
            alpha_of_t: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Family {
    /// `X = ∫σ dW + ∫b ds + α·max X`
    MaxPerturbed,
    /// The max-perturbed equation plus reflection at 0 through `L^0`.
    ReflectedMaxPerturbed,
    /// `X = x + W + ∫ b(X, max X) ds`
    MaxDrift,
    /// `X = ξ + ∫σ dW + ∫b ds + α·max X + β·min X`
    DoublyPerturbed,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::MaxPerturbed => "max_perturbed",
            Family::ReflectedMaxPerturbed => "reflected",
            Family::MaxDrift => "max_drift",
            Family::DoublyPerturbed => "doubly",
        }
    }
}

/// Drift slot of a problem: the first three families use a `(t, x)` drift,
/// the max-in-drift family a `(x, m)` one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DriftSpec {
    State(Coefficient),
    MaxDrift(MaxDriftCoefficient),
}

/// One fully specified problem: family, coefficients, perturbation weights
/// and initial value.
///
/// The max-perturbed and reflected families force `initial = 0`: evaluating
/// the equation at `t = 0` gives `X_0 = α X_0`, so `X_0 = 0` for `α ≠ 1`.
/// The doubly perturbed family stores `ξ`; its solution starts at
/// `ξ/(1−α−β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub family: Family,
    pub sigma: Coefficient,
    pub drift: DriftSpec,
    pub params: PerturbationParams,
    pub initial: f64,
}

impl ProblemSpec {
    pub fn max_perturbed(sigma: Coefficient, b: Coefficient, alpha: f64) -> Self {
        Self {
            family: Family::MaxPerturbed,
            sigma,
            drift: DriftSpec::State(b),
            params: PerturbationParams::plain(alpha, 0.0),
            initial: 0.0,
        }
    }

    pub fn reflected(sigma: Coefficient, b: Coefficient, alpha: f64) -> Self {
        Self {
            family: Family::ReflectedMaxPerturbed,
            sigma,
            drift: DriftSpec::State(b),
            params: PerturbationParams::plain(alpha, 0.0),
            initial: 0.0,
        }
    }

    pub fn max_drift(b: MaxDriftCoefficient, x0: f64) -> Self {
        Self {
            family: Family::MaxDrift,
            sigma: Coefficient::Constant(1.0),
            drift: DriftSpec::MaxDrift(b),
            params: PerturbationParams::plain(0.0, 0.0),
            initial: x0,
        }
    }

    pub fn doubly_perturbed(
        sigma: Coefficient,
        b: Coefficient,
        alpha: f64,
        beta: f64,
        xi: f64,
    ) -> Self {
        Self {
            family: Family::DoublyPerturbed,
            sigma,
            drift: DriftSpec::State(b),
            params: PerturbationParams::plain(alpha, beta),
            initial: xi,
        }
    }

    /// Value of the solution at `t = 0` implied by the defining identity.
    pub fn start_value(&self) -> f64 {
        match self.family {
            Family::MaxPerturbed | Family::ReflectedMaxPerturbed => 0.0,
            Family::MaxDrift => self.initial,
            Family::DoublyPerturbed => {
                self.initial / (1.0 - self.params.alpha - self.params.beta)
            }
        }
    }
}

/// Outcome of admissibility validation: hard violations plus soft warnings.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Validation {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
}

impl Validation {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// The coupled max/min contraction rate `|αβ| / ((1−α)(1−β))`.
pub fn contraction_factor(alpha: f64, beta: f64) -> Result<f64, ModelError> {
    if alpha >= 1.0 || beta >= 1.0 {
        return Err(ModelError::ContractionUndefined { alpha, beta });
    }
    Ok((alpha * beta).abs() / ((1.0 - alpha) * (1.0 - beta)))
}

/// Direct evaluation of the two doubly-perturbed admissibility inequalities:
/// `α < 1`, `β < 1` and `|αβ|/((1−α)(1−β)) < 1`.
pub fn doubly_admissible(alpha: f64, beta: f64) -> bool {
    alpha < 1.0 && beta < 1.0 && (alpha * beta).abs() / ((1.0 - alpha) * (1.0 - beta)) < 1.0
}

/// Family-dependent admissibility checks. Returns violations instead of
/// aborting so the CLI can report them all at once.
pub fn validate_params(spec: &ProblemSpec) -> Validation {
    let mut v = Validation::default();
    let p = &spec.params;
    match spec.family {
        Family::MaxPerturbed | Family::ReflectedMaxPerturbed => {
            if let Some(h) = p.h_transform {
                check_h_transform(&h, &mut v);
            } else if let Some(a) = p.alpha_of_t {
                check_alpha_of_t(&a, &mut v);
            } else if !(p.alpha > 0.0 && p.alpha < 1.0) {
                v.violations
                    .push(format!("alpha must lie in (0,1), got {}", p.alpha));
            }
            if p.beta != 0.0 {
                v.violations.push(format!(
                    "beta must be 0 for the {} family, got {}",
                    spec.family.name(),
                    p.beta
                ));
            }
        }
        Family::MaxDrift => {
            let DriftSpec::MaxDrift(b) = spec.drift else {
                v.violations
                    .push("max_drift family requires a (x, max) drift preset".into());
                return v;
            };
            if !b.strictly_increasing_in_m() {
                v.violations
                    .push("max_drift drift must be strictly increasing in the max argument".into());
            } else {
                // Sampled monotonicity probe over m2 > m1 >= x.
                for &x in &[-2.0, -0.5, 0.0, 0.7, 3.0] {
                    let (m1, m2) = (x + 0.3, x + 1.1);
                    if !(b.eval(x, m2) > b.eval(x, m1)) {
                        v.violations.push(format!(
                            "drift not increasing in max at x={x}: b(x,{m2}) <= b(x,{m1})"
                        ));
                    }
                }
            }
        }
        Family::DoublyPerturbed => {
            if !(p.alpha < 1.0) {
                v.violations
                    .push(format!("condition (alpha < 1) violated: alpha = {}", p.alpha));
            }
            if !(p.beta < 1.0) {
                v.violations
                    .push(format!("condition (beta < 1) violated: beta = {}", p.beta));
            }
            if p.alpha < 1.0 && p.beta < 1.0 {
                let ratio = (p.alpha * p.beta).abs() / ((1.0 - p.alpha) * (1.0 - p.beta));
                if !(ratio < 1.0) {
                    v.violations.push(format!(
                        "contraction condition |alpha*beta|/((1-alpha)(1-beta)) < 1 violated: ratio = {ratio}"
                    ));
                }
            }
            if !(1.0 - p.alpha - p.beta > 0.0) {
                v.violations.push(format!(
                    "initial value undefined: 1 - alpha - beta = {} must be positive",
                    1.0 - p.alpha - p.beta
                ));
            }
            if !(0.0 < p.alpha && p.alpha < 1.0) {
                v.warnings.push(format!(
                    "alpha = {} lies outside (0,1); only the contraction condition is enforced",
                    p.alpha
                ));
            }
        }
    }
    v
}

fn check_h_transform(h: &HTransform, v: &mut Validation) {
    if (h.eval(0.0)).abs() > 1e-15 {
        v.violations.push("H(0) must be 0".into());
    }
    for &x in &[-5.0, -1.0, -0.1, 0.0, 0.1, 1.0, 5.0, 25.0] {
        let d = h.derivative(x);
        if !(d > 0.0 && d < 1.0) {
            v.violations
                .push(format!("H'({x}) = {d} outside (0,1)"));
        }
    }
}

fn check_alpha_of_t(a: &AlphaOfT, v: &mut Validation) {
    let t_end = match *a {
        AlphaOfT::Constant(_) => 1.0,
        AlphaOfT::Ramp { t_end, .. } => t_end,
    };
    for i in 0..=16 {
        let t = t_end * i as f64 / 16.0;
        let val = a.eval(t);
        if !(0.0..1.0).contains(&val) {
            v.violations
                .push(format!("alpha({t}) = {val} outside [0,1)"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contraction_factor_values() {
        let f = contraction_factor(0.25, 0.25).unwrap();
        assert!((f - 0.0625 / 0.5625).abs() < 1e-15);
        assert_eq!(contraction_factor(0.7, 0.0).unwrap(), 0.0);
        assert!((contraction_factor(0.5, -1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(contraction_factor(1.0, 0.5).is_err());
        assert!(contraction_factor(0.5, 1.2).is_err());
    }

    #[test]
    fn contraction_factor_symmetric_and_monotone() {
        let grid: Vec<f64> = (-18..20).map(|i| i as f64 * 0.05).collect();
        for &a in &grid {
            for &b in &grid {
                if a < 1.0 && b < 1.0 {
                    let f = contraction_factor(a, b).unwrap();
                    let g = contraction_factor(b, a).unwrap();
                    assert!((f - g).abs() < 1e-12);
                }
            }
        }
        // monotone in |alpha| on the admissible region
        assert!(
            contraction_factor(0.3, 0.4).unwrap() < contraction_factor(0.5, 0.4).unwrap()
        );
        assert!(
            contraction_factor(0.3, -0.4).unwrap() < contraction_factor(0.3, -0.6).unwrap()
        );
    }

    #[test]
    fn doubly_admissibility_examples() {
        let ok = ProblemSpec::doubly_perturbed(
            Coefficient::Constant(1.0),
            Coefficient::Constant(0.0),
            0.25,
            0.25,
            0.0,
        );
        assert!(validate_params(&ok).is_ok());

        let boundary = ProblemSpec::doubly_perturbed(
            Coefficient::Constant(1.0),
            Coefficient::Constant(0.0),
            0.5,
            0.5,
            0.0,
        );
        assert!(!validate_params(&boundary).is_ok());

        let classical = ProblemSpec::doubly_perturbed(
            Coefficient::Constant(1.0),
            Coefficient::Constant(0.0),
            0.0,
            0.0,
            1.0,
        );
        assert!(validate_params(&classical).is_ok());
    }

    #[test]
    fn nonnegative_sum_at_least_one_always_rejected() {
        // For alpha, beta >= 0 with alpha + beta >= 1, the contraction
        // condition must fail.
        for i in 0..=20 {
            for j in 0..=20 {
                let a = i as f64 * 0.05;
                let b = j as f64 * 0.05;
                if a + b >= 1.0 {
                    assert!(!doubly_admissible(a, b), "({a},{b}) wrongly admitted");
                }
            }
        }
    }

    #[test]
    fn max_perturbed_alpha_range() {
        let mk = |alpha| {
            ProblemSpec::max_perturbed(Coefficient::Constant(1.0), Coefficient::Constant(0.0), alpha)
        };
        assert!(validate_params(&mk(0.5)).is_ok());
        assert!(!validate_params(&mk(0.0)).is_ok());
        assert!(!validate_params(&mk(1.0)).is_ok());
        assert!(!validate_params(&mk(-0.3)).is_ok());
    }

    #[test]
    fn max_drift_monotonicity_gate() {
        let good = ProblemSpec::max_drift(MaxDriftCoefficient::ArctanMax { scale: 1.0 }, 0.0);
        assert!(validate_params(&good).is_ok());
        let bad = ProblemSpec::max_drift(MaxDriftCoefficient::ArctanMax { scale: -1.0 }, 0.0);
        assert!(!validate_params(&bad).is_ok());
    }

    #[test]
    fn h_transform_and_alpha_of_t_gates() {
        let mut spec = ProblemSpec::max_perturbed(
            Coefficient::Constant(1.0),
            Coefficient::Constant(0.0),
            0.5,
        );
        spec.params.h_transform = Some(HTransform::ScaledArctan { scale: 0.8 });
        assert!(validate_params(&spec).is_ok());
        spec.params.h_transform = Some(HTransform::ScaledArctan { scale: 1.3 });
        assert!(!validate_params(&spec).is_ok());

        spec.params.h_transform = None;
        spec.params.alpha_of_t = Some(AlphaOfT::Ramp {
            start: 0.0,
            end: 0.9,
            t_end: 1.0,
        });
        assert!(validate_params(&spec).is_ok());
        spec.params.alpha_of_t = Some(AlphaOfT::Ramp {
            start: 0.5,
            end: 1.2,
            t_end: 1.0,
        });
        assert!(!validate_params(&spec).is_ok());
    }

    #[test]
    fn coefficient_parsing() {
        assert_eq!(
            Coefficient::parse("const:1").unwrap(),
            Coefficient::Constant(1.0)
        );
        assert_eq!(
            Coefficient::parse("affine:0.1,0.5").unwrap(),
            Coefficient::Affine {
                intercept: 0.1,
                slope: 0.5
            }
        );
        assert_eq!(
            Coefficient::parse("bsin:0.5").unwrap(),
            Coefficient::BoundedSine { scale: 0.5 }
        );
        assert_eq!(
            Coefficient::parse("piecewise:1,2").unwrap(),
            Coefficient::Piecewise { neg: 1.0, nonneg: 2.0 }
        );
        assert!(Coefficient::parse("mystery:1").is_err());
        assert!(Coefficient::parse("const:NaN").is_err());
        assert!(Coefficient::parse("affine:1").is_err());
        assert!(MaxDriftCoefficient::parse("atan:1").is_ok());
        assert!(MaxDriftCoefficient::parse("atan:").is_err());
    }

    #[test]
    fn lower_bound_claims_hold_on_samples() {
        let coeffs = [
            Coefficient::Constant(0.7),
            Coefficient::Piecewise { neg: 1.0, nonneg: 2.0 },
        ];
        for c in coeffs {
            let eps = c.claims_lower_bound_epsilon().unwrap();
            for i in -50..50 {
                let x = i as f64 * 0.37;
                assert!(c.eval(0.3, x) >= eps);
            }
        }
        assert_eq!(
            Coefficient::BoundedSine { scale: 0.5 }.claims_lower_bound_epsilon(),
            None
        );
    }
}
