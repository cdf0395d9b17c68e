//! Whole-path Picard iteration for the doubly perturbed family, built on a
//! coupled max/min fixed-point solver.
//!
//! The inner solver resolves, for a fixed driver path `A`, the system
//! `X = A + α·M + β·I`, `M = running_max(X)`, `I = running_min(X)` by
//! alternating the two Skorohod-style identities
//! `(1−α)·M = running_max(A + β·I)` and `(1−β)·I = running_min(A + α·M)`.
//! The alternation contracts at rate `|αβ|/((1−α)(1−β))`.
//!
//! The outer iteration rebuilds the driver from the previous iterate's
//! coefficients and re-solves, which is the path-space fixed point whose
//! error decays factorially in the iteration count.

use crate::models::{contraction_factor, DriftSpec, Family, ProblemSpec, validate_params};
use crate::paths::{ExtremaDecomposition, SamplePath};
use thiserror::Error;

/// Default tolerance of the inner coupled max/min solve.
pub const INNER_TOL: f64 = 1e-12;
/// Default tolerance of the outer Picard iteration.
pub const OUTER_TOL: f64 = 1e-10;
/// Iteration cap shared by both loops; the inner contraction is geometric
/// with known rate, the outer decays factorially, so 200 is generous.
pub const MAX_ITER: usize = 200;

#[derive(Debug, Error)]
pub enum PicardError {
    #[error("inadmissible parameters: {0:?}")]
    Inadmissible(Vec<String>),
    #[error("picard_solve requires the doubly perturbed family")]
    WrongFamily,
    #[error("coupled max/min solve did not converge within {0} iterations (violated precondition?)")]
    InnerDiverged(usize),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Path(#[from] crate::paths::PathError),
}

/// Per-iteration sup-norm deltas and convergence verdict of one Picard run.
#[derive(Debug, Clone)]
pub struct PicardReport {
    pub iterations: usize,
    pub sup_deltas: Vec<f64>,
    pub converged: bool,
    pub tolerance: f64,
    pub final_solution: ExtremaDecomposition,
}

/// Solves `X = driver + α·M + β·I` with `M`, `I` the running extrema of `X`,
/// for a fixed driver path, to sup-norm residual `tol`.
///
/// The initial guess `I⁰ = running_min(driver)/(1−β)` is one contraction
/// step ahead of the zero initialization; by uniqueness of the fixed point
/// the output does not depend on this choice (see the uniqueness test).
pub fn coupled_max_min_solve(
    driver: &SamplePath,
    alpha: f64,
    beta: f64,
    tol: f64,
) -> Result<ExtremaDecomposition, PicardError> {
    let init = driver.running_min().map(|v| v / (1.0 - beta));
    coupled_max_min_solve_from(driver, alpha, beta, tol, init)
}

/// Same as [`coupled_max_min_solve`] but with an explicit initial guess for
/// the running-min iterate. Exposed for uniqueness studies.
pub fn coupled_max_min_solve_from(
    driver: &SamplePath,
    alpha: f64,
    beta: f64,
    tol: f64,
    min_init: SamplePath,
) -> Result<ExtremaDecomposition, PicardError> {
    let rate = contraction_factor(alpha, beta)?;
    if !(rate < 1.0) {
        return Err(PicardError::Inadmissible(vec![format!(
            "contraction factor {rate} not below 1"
        )]));
    }
    let grid = driver.grid();

    if alpha == 0.0 && beta == 0.0 {
        let x = driver.clone();
        return Ok(ExtremaDecomposition {
            max: x.running_max(),
            min: x.running_min(),
            local_time: SamplePath::constant(grid, 0.0),
            x,
        });
    }

    let stop = tol * (1.0 - rate);
    let mut min_path = min_init;
    let mut max_path = SamplePath::constant(grid, 0.0);
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let new_max = driver
            .zip_with(&min_path, |d, i| d + beta * i)?
            .running_max()
            .map(|v| v / (1.0 - alpha));
        let new_min = driver
            .zip_with(&new_max, |d, m| d + alpha * m)?
            .running_min()
            .map(|v| v / (1.0 - beta));
        let change = new_max
            .sup_distance(&max_path)?
            .max(new_min.sup_distance(&min_path)?);
        max_path = new_max;
        min_path = new_min;
        if change <= stop {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(PicardError::InnerDiverged(MAX_ITER));
    }

    let x = driver.zip_with(&max_path, |d, m| d + alpha * m)?;
    let x = x.zip_with(&min_path, |v, i| v + beta * i)?;
    Ok(ExtremaDecomposition {
        max: x.running_max(),
        min: x.running_min(),
        local_time: SamplePath::constant(grid, 0.0),
        x,
    })
}

/// Sup-norm residual of the coupled identity on a decomposition.
pub fn coupled_residual(
    d: &ExtremaDecomposition,
    driver: &SamplePath,
    alpha: f64,
    beta: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..driver.grid().n_nodes() {
        let expect =
            driver.values()[k] + alpha * d.max.values()[k] + beta * d.min.values()[k];
        worst = worst.max((d.x.values()[k] - expect).abs());
    }
    worst
}

/// Builds the driver `A_k = ξ + Σ σ(t_j, X_j)·ΔW_j + Σ b(t_j, X_j)·dt` from
/// the current iterate.
fn build_driver(
    spec: &ProblemSpec,
    w: &SamplePath,
    x: &SamplePath,
) -> Result<SamplePath, PicardError> {
    let DriftSpec::State(b) = spec.drift else {
        return Err(PicardError::WrongFamily);
    };
    let grid = w.grid();
    let dt = grid.dt();
    let mut a = spec.initial;
    let mut vals = Vec::with_capacity(grid.n_nodes());
    vals.push(a);
    for k in 0..grid.n_steps() {
        let t = grid.time(k);
        let xv = x.values()[k];
        let dw = w.values()[k + 1] - w.values()[k];
        a += spec.sigma.eval(t, xv) * dw + b.eval(t, xv) * dt;
        vals.push(a);
    }
    Ok(SamplePath::new(grid, vals)?)
}

/// Picard iteration for the doubly perturbed family.
///
/// Starts from the constant path `ξ/(1−α)` (the iteration's own convention,
/// distinct from the fixed point's `t = 0` value `ξ/(1−α−β)`; the
/// initializer only affects the transient) and alternates driver rebuild
/// with the coupled max/min solve until the sup-norm delta drops below
/// `tol` or `max_iter` is hit. Non-convergence is reported in the result,
/// not raised.
pub fn picard_solve(
    spec: &ProblemSpec,
    w: &SamplePath,
    tol: f64,
    max_iter: usize,
) -> Result<PicardReport, PicardError> {
    if spec.family != Family::DoublyPerturbed {
        return Err(PicardError::WrongFamily);
    }
    let validation = validate_params(spec);
    if !validation.is_ok() {
        return Err(PicardError::Inadmissible(validation.violations));
    }
    let alpha = spec.params.alpha;
    let beta = spec.params.beta;
    let grid = w.grid();

    let mut current = SamplePath::constant(grid, spec.initial / (1.0 - alpha));
    let mut sup_deltas = Vec::new();
    let mut last: Option<ExtremaDecomposition> = None;
    let mut converged = false;
    for _ in 0..max_iter {
        let driver = build_driver(spec, w, &current)?;
        let solved = coupled_max_min_solve(&driver, alpha, beta, INNER_TOL)?;
        let delta = solved.x.sup_distance(&current)?;
        sup_deltas.push(delta);
        current = solved.x.clone();
        last = Some(solved);
        if delta <= tol {
            converged = true;
            break;
        }
    }
    let final_solution = last.expect("max_iter >= 1");
    Ok(PicardReport {
        iterations: sup_deltas.len(),
        converged,
        tolerance: tol,
        sup_deltas,
        final_solution,
    })
}
