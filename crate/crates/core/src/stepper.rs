//! Per-step implicit Euler-type schemes resolving the unknown inside its own
//! running extrema and local time.
//!
//! Each step first advances the accumulated driver
//! `A_{k+1} = A_k + σ(t_k, X_k)·ΔW_k + b(t_k, X_k)·dt` (left-point, Itô) and
//! then solves the algebraic identity of the family for the new state. The
//! solve is a branch choice: either no extremum moves and the identity is
//! linear in `X`, or exactly one extremum is renewed and equals `X` itself.
//! Ties at branch boundaries resolve to the extremum-preserving branch; the
//! branch values coincide there, only bookkeeping differs.

use crate::models::{AlphaOfT, DriftSpec, Family, HTransform, ProblemSpec, validate_params};
use crate::paths::{ExtremaDecomposition, SamplePath};
use thiserror::Error;

/// Residual tolerance of the family identity, asserted on every simulation.
pub const IDENTITY_TOL: f64 = 1e-12;

const BISECTION_TOL: f64 = 1e-13;

#[derive(Debug, Error)]
pub enum StepperError {
    #[error("alpha must lie in (0,1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("inadmissible problem: {0:?}")]
    Inadmissible(Vec<String>),
    #[error("step-size fault at step {step}: {what}")]
    StepFault { step: usize, what: &'static str },
    #[error("family identity residual {residual:e} exceeds {IDENTITY_TOL:e} at node {node}")]
    IdentityResidual { residual: f64, node: usize },
    #[error(transparent)]
    Path(#[from] crate::paths::PathError),
}

/// Discrete state after `k` steps: value, running max/min, local time and
/// accumulated driver. Invariant: `i <= x <= m`, `l >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepState {
    pub x: f64,
    pub m: f64,
    pub i: f64,
    pub l: f64,
    pub a: f64,
}

impl StepState {
    /// Fresh state with `x = m = i = x0` and driver `a0`.
    pub fn start(x0: f64, a0: f64) -> Self {
        Self {
            x: x0,
            m: x0,
            i: x0,
            l: 0.0,
            a: a0,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<(), StepperError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(StepperError::AlphaOutOfRange(alpha))
    }
}

/// One step of `X = A + α·max X`: either the max is preserved and
/// `x⁺ = a_new + α·m`, or a new max is set and `x⁺ = a_new/(1−α)`.
/// The second branch applies iff `a_new > (1−α)·m`; equality keeps the max.
pub fn step_max(a_new: f64, state: StepState, alpha: f64) -> Result<StepState, StepperError> {
    check_alpha(alpha)?;
    let mut s = state;
    if a_new <= (1.0 - alpha) * s.m {
        s.x = a_new + alpha * s.m;
    } else {
        s.x = a_new / (1.0 - alpha);
        s.m = s.x;
    }
    s.i = s.i.min(s.x);
    s.a = a_new;
    Ok(s)
}

/// One step of the reflected equation `X = A + α·max X + L, X >= 0`.
///
/// First the unreflected solve; if it lands below zero the value is pushed
/// to exactly 0 and the deficit goes into the local time. A pushed step can
/// never renew the max since `m >= 0` holds inductively from `X_0 = 0`.
/// The local time enters the unreflected solve through the effective driver
/// `a_new + l`, matching the cumulative identity `x = a + α·m + l`.
pub fn step_reflected_max(
    a_new: f64,
    state: StepState,
    alpha: f64,
) -> Result<StepState, StepperError> {
    let mut s = step_max(a_new + state.l, state, alpha)?;
    if s.x < 0.0 {
        s.l = state.l - (a_new + state.l + alpha * state.m);
        s.x = 0.0;
        s.m = state.m;
        s.i = state.i.min(0.0);
    }
    s.a = a_new;
    Ok(s)
}

/// One step of the doubly perturbed identity `X = A + α·max X + β·min X`.
///
/// Exactly one of three branches applies: interior (both extrema kept), new
/// max, or new min. Ties resolve to interior. A driver jump so large that
/// both strict branches validate is reported as a step-size fault rather
/// than silently picking one.
pub fn step_double(
    a_new: f64,
    state: StepState,
    alpha: f64,
    beta: f64,
    step: usize,
) -> Result<StepState, StepperError> {
    let interior = a_new + alpha * state.m + beta * state.i;
    let interior_ok = state.i <= interior && interior <= state.m;
    let new_max = (a_new + beta * state.i) / (1.0 - alpha);
    let new_max_ok = new_max > state.m;
    let new_min = (a_new + alpha * state.m) / (1.0 - beta);
    let new_min_ok = new_min < state.i;

    let mut s = state;
    if new_max_ok && new_min_ok {
        return Err(StepperError::StepFault {
            step,
            what: "both extrema would move in one step (dt too coarse for these parameters)",
        });
    } else if interior_ok {
        s.x = interior;
    } else if new_max_ok {
        s.x = new_max;
        s.m = new_max;
    } else if new_min_ok {
        s.x = new_min;
        s.i = new_min;
    } else {
        return Err(StepperError::StepFault {
            step,
            what: "no branch of the max/min solve validates",
        });
    }
    s.a = a_new;
    Ok(s)
}

/// New-max branch of the `H(max)` generalization: solves `x = a_new + H(x)`
/// on `x > m` by safeguarded bisection. `0 < H' < 1` makes
/// `g(x) = x − H(x) − a_new` strictly increasing, so the root is unique.
fn solve_h_new_max(a_new: f64, m: f64, h: &HTransform) -> f64 {
    let g = |x: f64| x - h.eval(x) - a_new;
    let mut lo = m;
    let mut step = (1.0 + m.abs()).max(1e-6);
    let mut hi = m + step;
    while g(hi) < 0.0 {
        step *= 2.0;
        hi += step;
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// How branch ties are resolved; [`TieBreak::PreferNewMax`] exists for
/// cross-method uniqueness studies only. The branch values coincide at ties,
/// so the two policies can only differ through bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    #[default]
    KeepExtremum,
    PreferNewMax,
}

/// Full simulation of `spec` driven by the Brownian path `w`.
///
/// The family identity is checked at every node against [`IDENTITY_TOL`]
/// before the decomposition is returned.
pub fn simulate(spec: &ProblemSpec, w: &SamplePath) -> Result<ExtremaDecomposition, StepperError> {
    simulate_with_tiebreak(spec, w, TieBreak::KeepExtremum)
}

pub fn simulate_with_tiebreak(
    spec: &ProblemSpec,
    w: &SamplePath,
    tie: TieBreak,
) -> Result<ExtremaDecomposition, StepperError> {
    let validation = validate_params(spec);
    if !validation.is_ok() {
        return Err(StepperError::Inadmissible(validation.violations));
    }
    match spec.family {
        Family::MaxDrift => simulate_max_drift(spec, w, false),
        _ => simulate_implicit(spec, w, tie),
    }
}

/// Explicit scheme for the max-in-drift family:
/// `x⁺ = x + ΔW + b(x, m)·dt`, then `m⁺ = max(m, x⁺)`. The drift enters
/// explicitly, so no branch solve is needed. With `predictor_max` the drift
/// is evaluated at the predicted updated max instead; this is the
/// alternative method used by uniqueness studies.
pub(crate) fn simulate_max_drift(
    spec: &ProblemSpec,
    w: &SamplePath,
    predictor_max: bool,
) -> Result<ExtremaDecomposition, StepperError> {
    let DriftSpec::MaxDrift(b) = spec.drift else {
        return Err(StepperError::Inadmissible(vec![
            "max_drift family requires a (x, max) drift".into(),
        ]));
    };
    let grid = w.grid();
    let dt = grid.dt();
    let n = grid.n_nodes();
    let mut x = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    let mut i = Vec::with_capacity(n);
    let (mut xv, mut mv, mut iv) = (spec.initial, spec.initial, spec.initial);
    x.push(xv);
    m.push(mv);
    i.push(iv);
    for k in 0..grid.n_steps() {
        let dw = w.values()[k + 1] - w.values()[k];
        let drift = if predictor_max {
            let pred = xv + dw + b.eval(xv, mv) * dt;
            b.eval(xv, mv.max(pred))
        } else {
            b.eval(xv, mv)
        };
        xv += dw + drift * dt;
        mv = mv.max(xv);
        iv = iv.min(xv);
        x.push(xv);
        m.push(mv);
        i.push(iv);
    }
    Ok(ExtremaDecomposition {
        x: SamplePath::new(grid, x)?,
        max: SamplePath::new(grid, m)?,
        min: SamplePath::new(grid, i)?,
        local_time: SamplePath::constant(grid, 0.0),
    })
}

fn simulate_implicit(
    spec: &ProblemSpec,
    w: &SamplePath,
    tie: TieBreak,
) -> Result<ExtremaDecomposition, StepperError> {
    let DriftSpec::State(b) = spec.drift else {
        return Err(StepperError::Inadmissible(vec![
            "this family requires a (t, x) drift".into(),
        ]));
    };
    let grid = w.grid();
    let dt = grid.dt();
    let n = grid.n_nodes();
    let alpha = spec.params.alpha;
    let beta = spec.params.beta;

    let a0 = match spec.family {
        Family::DoublyPerturbed => spec.initial,
        _ => 0.0,
    };
    let mut state = StepState::start(spec.start_value(), a0);
    // Time-dependent perturbation integral Σ α(t_j)·(M_{j+1} − M_j).
    let mut alpha_integral = 0.0;

    let mut x = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    let mut i = Vec::with_capacity(n);
    let mut l = Vec::with_capacity(n);
    let push = |s: &StepState, x: &mut Vec<f64>, m: &mut Vec<f64>, i: &mut Vec<f64>, l: &mut Vec<f64>| {
        x.push(s.x);
        m.push(s.m);
        i.push(s.i);
        l.push(s.l);
    };
    push(&state, &mut x, &mut m, &mut i, &mut l);

    for k in 0..grid.n_steps() {
        let t = grid.time(k);
        let dw = w.values()[k + 1] - w.values()[k];
        let a_new = state.a + spec.sigma.eval(t, state.x) * dw + b.eval(t, state.x) * dt;
        state = match spec.family {
            Family::MaxPerturbed => {
                if let Some(h) = spec.params.h_transform {
                    step_h_max(a_new, state, &h)
                } else if let Some(af) = spec.params.alpha_of_t {
                    step_alpha_of_t(a_new, state, &af, t, &mut alpha_integral)
                } else {
                    match tie {
                        TieBreak::KeepExtremum => step_max(a_new, state, alpha)?,
                        TieBreak::PreferNewMax => step_max_prefer_new(a_new, state, alpha)?,
                    }
                }
            }
            Family::ReflectedMaxPerturbed => step_reflected_max(a_new, state, alpha)?,
            Family::DoublyPerturbed => step_double(a_new, state, alpha, beta, k)?,
            Family::MaxDrift => unreachable!("handled by simulate_max_drift"),
        };
        push(&state, &mut x, &mut m, &mut i, &mut l);
    }

    let out = ExtremaDecomposition {
        x: SamplePath::new(grid, x)?,
        max: SamplePath::new(grid, m)?,
        min: SamplePath::new(grid, i)?,
        local_time: SamplePath::new(grid, l)?,
    };
    assert_identity(spec, w, &out)?;
    Ok(out)
}

fn step_max_prefer_new(
    a_new: f64,
    state: StepState,
    alpha: f64,
) -> Result<StepState, StepperError> {
    check_alpha(alpha)?;
    let mut s = state;
    if a_new < (1.0 - alpha) * s.m {
        s.x = a_new + alpha * s.m;
    } else {
        // tie or new max: both branches give the same value at the tie
        s.x = a_new / (1.0 - alpha);
        s.m = s.m.max(s.x);
    }
    s.i = s.i.min(s.x);
    s.a = a_new;
    Ok(s)
}

fn step_h_max(a_new: f64, state: StepState, h: &HTransform) -> StepState {
    let mut s = state;
    let keep = a_new + h.eval(s.m);
    if keep <= s.m {
        s.x = keep;
    } else {
        s.x = solve_h_new_max(a_new, s.m, h);
        s.m = s.x;
    }
    s.i = s.i.min(s.x);
    s.a = a_new;
    s
}

fn step_alpha_of_t(
    a_new: f64,
    state: StepState,
    alpha_of_t: &AlphaOfT,
    t: f64,
    integral: &mut f64,
) -> StepState {
    let mut s = state;
    let keep = a_new + *integral;
    if keep <= s.m {
        s.x = keep;
    } else {
        let a_t = alpha_of_t.eval(t);
        s.x = (a_new + *integral - a_t * s.m) / (1.0 - a_t);
        *integral += a_t * (s.x - s.m);
        s.m = s.x;
    }
    s.i = s.i.min(s.x);
    s.a = a_new;
    s
}

/// Reconstructs the time-dependent perturbation integral per node so the
/// identity check can cover the `α(s)` variant.
fn alpha_integral_trace(spec: &ProblemSpec, d: &ExtremaDecomposition) -> Option<Vec<f64>> {
    let af = spec.params.alpha_of_t?;
    let grid = d.x.grid();
    let mut acc = 0.0;
    let mut trace = Vec::with_capacity(grid.n_nodes());
    trace.push(acc);
    for k in 0..grid.n_steps() {
        acc += af.eval(grid.time(k)) * (d.max.values()[k + 1] - d.max.values()[k]);
        trace.push(acc);
    }
    Some(trace)
}

/// Max per-node residual of the defining identity, with the family's active
/// terms. The driver is rebuilt from the solution and the Brownian path by
/// the same left-point rule the stepper uses, so exactness is a round-off
/// statement. Returns 0 for the max-in-drift family, whose scheme is the
/// recursion itself.
pub fn identity_residual(spec: &ProblemSpec, w: &SamplePath, d: &ExtremaDecomposition) -> f64 {
    worst_identity_residual(spec, w, d).0
}

fn worst_identity_residual(
    spec: &ProblemSpec,
    w: &SamplePath,
    d: &ExtremaDecomposition,
) -> (f64, usize) {
    let DriftSpec::State(b) = spec.drift else {
        return (0.0, 0);
    };
    let alpha_trace = alpha_integral_trace(spec, d);
    let grid = d.x.grid();
    let dt = grid.dt();
    let mut a = match spec.family {
        Family::DoublyPerturbed => spec.initial,
        _ => 0.0,
    };
    let mut worst = (0.0f64, 0usize);
    for k in 0..grid.n_nodes() {
        let perturbation = if let Some(h) = spec.params.h_transform {
            h.eval(d.max.values()[k])
        } else if let Some(trace) = &alpha_trace {
            trace[k]
        } else {
            spec.params.alpha * d.max.values()[k] + spec.params.beta * d.min.values()[k]
        };
        let expect = a + perturbation + d.local_time.values()[k];
        let residual = (d.x.values()[k] - expect).abs();
        if residual > worst.0 {
            worst = (residual, k);
        }
        if k < grid.n_steps() {
            let t = grid.time(k);
            let x = d.x.values()[k];
            let dw = w.values()[k + 1] - w.values()[k];
            a += spec.sigma.eval(t, x) * dw + b.eval(t, x) * dt;
        }
    }
    worst
}

fn assert_identity(
    spec: &ProblemSpec,
    w: &SamplePath,
    d: &ExtremaDecomposition,
) -> Result<(), StepperError> {
    let (residual, node) = worst_identity_residual(spec, w, d);
    if residual > IDENTITY_TOL {
        return Err(StepperError::IdentityResidual { residual, node });
    }
    Ok(())
}
