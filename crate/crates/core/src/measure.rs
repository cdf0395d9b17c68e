//! Law-level constructions used for verification: the closed-form
//! max-perturbed solution, Girsanov reweighting, the diffusion time change
//! and the squared-process quadratic-variation check for the reflected
//! family.

use crate::models::Coefficient;
use crate::paths::{ExtremaDecomposition, SamplePath, TimeGrid};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MeasureError {
    #[error("alpha must lie in (0,1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("paths live on different grids")]
    GridMismatch,
    #[error("time change requires a diffusion coefficient with a strictly positive lower bound")]
    MissingLowerBound,
    #[error("time-changed horizon collapses below one step")]
    DegenerateClock,
    #[error(transparent)]
    Path(#[from] crate::paths::PathError),
}

/// Closed-form solution of `X = W + α·max X`:
/// `X = W + (α/(1−α))·running_max(W)`, whose running max is
/// `running_max(W)/(1−α)`.
pub fn explicit_alpha_perturbed(
    w: &SamplePath,
    alpha: f64,
) -> Result<ExtremaDecomposition, MeasureError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MeasureError::AlphaOutOfRange(alpha));
    }
    let factor = alpha / (1.0 - alpha);
    let max_w = w.running_max();
    let x = w.zip_with(&max_w, |wv, mv| wv + factor * mv)?;
    Ok(ExtremaDecomposition {
        max: x.running_max(),
        min: x.running_min(),
        local_time: SamplePath::constant(w.grid(), 0.0),
        x,
    })
}

/// Log of the exponential-martingale weight removing the drift `b`:
/// `−Σ b(t_k, x_k)·ΔW_k − ½·Σ b(t_k, x_k)²·dt`.
///
/// The ½ on the quadratic term is the standard normalization; the
/// martingale-mean-one Monte Carlo test discriminates it from the variant
/// without the factor, and the standard form is the one that passes.
pub fn girsanov_log_weight(
    x: &SamplePath,
    w: &SamplePath,
    b: &Coefficient,
) -> Result<f64, MeasureError> {
    if x.grid() != w.grid() {
        return Err(MeasureError::GridMismatch);
    }
    let grid = x.grid();
    let dt = grid.dt();
    let mut stochastic = 0.0;
    let mut quadratic = 0.0;
    for k in 0..grid.n_steps() {
        let bv = b.eval(grid.time(k), x.values()[k]);
        stochastic += bv * (w.values()[k + 1] - w.values()[k]);
        quadratic += bv * bv * dt;
    }
    Ok(-stochastic - 0.5 * quadratic)
}

/// Cumulative clock `c_k = Σ_{j<k} σ(t_j, y_j)²·dt` of the time change.
pub fn time_change_clock(y: &SamplePath, sigma: &Coefficient) -> Vec<f64> {
    let grid = y.grid();
    let dt = grid.dt();
    let mut clock = Vec::with_capacity(grid.n_nodes());
    let mut c = 0.0;
    clock.push(c);
    for k in 0..grid.n_steps() {
        let s = sigma.eval(grid.time(k), y.values()[k]);
        c += s * s * dt;
        clock.push(c);
    }
    clock
}

/// Reparameterizes `y` by the inverse of its diffusion clock.
///
/// Requires the (ND) lower bound on `σ` so the clock is strictly increasing.
/// The output keeps the input's `dt`; its horizon is the terminal clock
/// value truncated to a whole number of steps, and each output node takes
/// the value of `y` at the first grid node where the clock passes the
/// target time (right-continuous inverse, no interpolation).
pub fn time_change(y: &SamplePath, sigma: &Coefficient) -> Result<SamplePath, MeasureError> {
    let eps = sigma
        .claims_lower_bound_epsilon()
        .ok_or(MeasureError::MissingLowerBound)?;
    debug_assert!(eps > 0.0);
    let clock = time_change_clock(y, sigma);
    let dt = y.grid().dt();
    let n_out = (clock[clock.len() - 1] / dt).floor() as usize;
    if n_out == 0 {
        return Err(MeasureError::DegenerateClock);
    }
    let out_grid = TimeGrid::new(n_out as f64 * dt, n_out)?;
    let mut vals = Vec::with_capacity(n_out + 1);
    let mut src = 0usize;
    for j in 0..=n_out {
        let target = j as f64 * dt;
        while clock[src] < target {
            src += 1;
        }
        vals.push(y.values()[src]);
    }
    Ok(SamplePath::new(out_grid, vals)?)
}

/// Discrete check that the squared reflected solution has quadratic
/// variation `d⟨Y⟩ = 4·Y·dt`.
///
/// For `Y = X²` the realized quadratic variation `Σ (ΔY)²` is compared to
/// `4·Σ Y·dt` in running form; the returned value is the worst absolute
/// discrepancy over nodes, normalized by `1 + QV_T`.
pub fn squared_process_residual(d: &ExtremaDecomposition) -> f64 {
    let grid = d.x.grid();
    let dt = grid.dt();
    let mut qv = 0.0;
    let mut integral = 0.0;
    let mut worst = 0.0f64;
    let y = |k: usize| {
        let v = d.x.values()[k];
        v * v
    };
    for k in 0..grid.n_steps() {
        let dy = y(k + 1) - y(k);
        qv += dy * dy;
        integral += 4.0 * y(k) * dt;
        worst = worst.max((qv - integral).abs());
    }
    worst / (1.0 + qv)
}
