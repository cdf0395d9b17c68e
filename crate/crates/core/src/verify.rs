//! Verification studies: pathwise-uniqueness gaps, strong-convergence
//! orders, law-level Kolmogorov-Smirnov checks and Picard-rate measurements.
//!
//! Every study is a pure function of `(inputs, master seed)`: paths fan out
//! to a worker pool keyed by path index, and aggregation walks results in
//! path order, so reports are bit-identical across runs and worker counts.

use crate::measure;
use crate::models::{Coefficient, DriftSpec, Family, ProblemSpec};
use crate::paths::{
    self, bridge_running_max, coarsen, generate_brownian, PathSeed, TimeGrid,
};
use crate::picard;
use crate::stepper;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

/// Asymptotic 1% critical value of the one-sample KS statistic is
/// `KS_CRITICAL_99 / sqrt(N)`.
pub const KS_CRITICAL_99: f64 = 1.63;

/// Pilot-calibrated bound on the squared-process quadratic-variation
/// residual at `dt = 2^-12`: over 1000 pilot paths the 95th percentile of
/// the residual was 0.142 and the 99th 0.196, so 0.2 keeps margin while
/// still catching a wrong QV density.
pub const SQUARED_QV_RESIDUAL_BOUND: f64 = 0.2;
/// Required pass fraction for the squared-process check.
pub const SQUARED_QV_PASS_RATE: f64 = 0.95;

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("need at least 3 refinement levels, got {0}")]
    TooFewLevels(usize),
    #[error("inadmissible problem: {0:?}")]
    Inadmissible(Vec<String>),
    #[error(transparent)]
    Stepper(#[from] stepper::StepperError),
    #[error(transparent)]
    Picard(#[from] picard::PicardError),
    #[error(transparent)]
    Measure(#[from] measure::MeasureError),
    #[error(transparent)]
    Path(#[from] paths::PathError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Simulate,
    UniquenessGap,
    ConvergenceOrder,
    LawKs,
    InvariantSweep,
    PicardRate,
}

/// Law-level check selector for [`law_ks_study`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawCheck {
    MaxLaw,
    GirsanovMeanOne,
    SquaredQv,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SeedInfo {
    pub master_seed: u64,
    pub n_paths: usize,
}

/// One raw per-path measurement, serialized as a CSV row by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct RawRow {
    pub path_id: u64,
    pub metric: String,
    pub value: f64,
}

/// Statistical/verification output of one study. `pass` is a pure function
/// of `metrics` against the declared thresholds.
#[derive(Debug, Clone, Serialize)]
pub struct StudyReport {
    pub study_kind: StudyKind,
    pub parameters: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, f64>,
    pub pass: bool,
    pub seeds: SeedInfo,
    #[serde(skip)]
    pub raw: Vec<RawRow>,
}

impl StudyReport {
    fn new(kind: StudyKind, seed: u64, n_paths: usize) -> Self {
        Self {
            study_kind: kind,
            parameters: BTreeMap::new(),
            metrics: BTreeMap::new(),
            pass: false,
            seeds: SeedInfo {
                master_seed: seed,
                n_paths,
            },
            raw: Vec::new(),
        }
    }

    fn param(&mut self, key: &str, value: impl ToString) {
        self.parameters.insert(key.to_string(), value.to_string());
    }
}

/// One-sample Kolmogorov-Smirnov statistic of `samples` against the CDF `f`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut sup = 0.0f64;
    for (idx, &x) in samples.iter().enumerate() {
        let fx = cdf(x);
        sup = sup
            .max((idx as f64 / n - fx).abs())
            .max(((idx + 1) as f64 / n - fx).abs());
    }
    sup
}

/// CDF of |N(0,1)| (half-normal), the law of the running max of a standard
/// Brownian motion at `t = 1` by the reflection principle.
pub fn half_normal_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        statrs::function::erf::erf(x / std::f64::consts::SQRT_2)
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[values.len() / 2]
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Least-squares slope of `y` against `0..n`.
fn slope(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let xbar = (n - 1.0) / 2.0;
    let ybar = mean(y);
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &v) in y.iter().enumerate() {
        let dx = i as f64 - xbar;
        num += dx * (v - ybar);
        den += dx * dx;
    }
    num / den
}

fn checked(spec: &ProblemSpec) -> Result<(), StudyError> {
    let v = crate::models::validate_params(spec);
    if v.is_ok() {
        Ok(())
    } else {
        Err(StudyError::Inadmissible(v.violations))
    }
}

fn is_unit_driftless(spec: &ProblemSpec) -> bool {
    spec.sigma == Coefficient::Constant(1.0)
        && matches!(spec.drift, DriftSpec::State(Coefficient::Constant(b)) if b == 0.0)
}

/// Cross-method pathwise gap study.
///
/// Each path is solved twice with the *same* Brownian increments:
/// the doubly perturbed family by Picard against the per-step solver,
/// the plain max-perturbed unit/driftless case against the closed form,
/// the other implicit cases against a tie-break-flipped stepper, and the
/// max-in-drift family against a predictor variant of the drift's max
/// argument. Gaps are recorded over three coupled grid refinements.
/// For the max-in-drift family the running-max comparison property
/// (`X_k > Y_k` implies `M^X_k >= M^Y_k`, for solutions started apart) is
/// checked on every sampled node.
pub fn uniqueness_gap_study(
    spec: &ProblemSpec,
    n_paths: usize,
    grid: TimeGrid,
    seed: u64,
) -> Result<StudyReport, StudyError> {
    checked(spec)?;
    let mut report = StudyReport::new(StudyKind::UniquenessGap, seed, n_paths);
    report.param("family", spec.family.name());
    report.param("t_end", grid.t_end());
    report.param("n_steps_base", grid.n_steps());

    let levels = 3usize;
    let fine = TimeGrid::new(grid.t_end(), grid.n_steps() << (levels - 1))
        .expect("valid refined grid");
    let oracle_case = spec.family == Family::MaxPerturbed && is_unit_driftless(spec);
    report.param(
        "method_b",
        match spec.family {
            Family::DoublyPerturbed => "picard",
            Family::MaxDrift => "predictor_max",
            _ if oracle_case => "explicit_oracle",
            _ => "tiebreak_flip",
        },
    );

    type PathOut = (Vec<f64>, bool, f64);
    let results: Vec<Result<PathOut, StudyError>> = (0..n_paths)
        .into_par_iter()
        .map(|p| -> Result<PathOut, StudyError> {
            let w_fine = generate_brownian(fine, PathSeed::new(seed, p as u64));
            let mut gaps = Vec::with_capacity(levels);
            let mut ordering_ok = true;
            let mut checksum = 0.0;
            for level in 0..levels {
                let w = coarsen(&w_fine, 1 << (levels - 1 - level))?;
                // coupling integrity: both methods must consume these
                // exact increments
                checksum += w.last();
                let a = stepper::simulate(spec, &w)?;
                let gap = match spec.family {
                    Family::DoublyPerturbed => {
                        let rep = picard::picard_solve(spec, &w, picard::OUTER_TOL, picard::MAX_ITER)?;
                        rep.final_solution.x.sup_distance(&a.x)?
                    }
                    Family::MaxDrift => {
                        let b = stepper::simulate_max_drift(spec, &w, true)?;
                        let mut shifted = *spec;
                        shifted.initial -= 0.1;
                        let y = stepper::simulate(&shifted, &w)?;
                        for k in 0..w.grid().n_nodes() {
                            if a.x.values()[k] > y.x.values()[k]
                                && a.max.values()[k] < y.max.values()[k]
                            {
                                ordering_ok = false;
                            }
                        }
                        b.x.sup_distance(&a.x)?
                    }
                    _ if oracle_case => {
                        let d = measure::explicit_alpha_perturbed(&w, spec.params.alpha)?;
                        d.x.sup_distance(&a.x)?
                    }
                    _ => {
                        let b =
                            stepper::simulate_with_tiebreak(spec, &w, stepper::TieBreak::PreferNewMax)?;
                        b.x.sup_distance(&a.x)?
                    }
                };
                gaps.push(gap);
            }
            Ok((gaps, ordering_ok, checksum))
        })
        .collect();

    let mut per_level: Vec<Vec<f64>> = vec![Vec::new(); levels];
    let mut ordering_failures = 0usize;
    for (p, r) in results.into_iter().enumerate() {
        let (gaps, ordering_ok, _checksum) = r?;
        for (level, &g) in gaps.iter().enumerate() {
            per_level[level].push(g);
            report.raw.push(RawRow {
                path_id: p as u64,
                metric: format!("gap_level_{level}"),
                value: g,
            });
        }
        if !ordering_ok {
            ordering_failures += 1;
        }
    }

    let medians: Vec<f64> = per_level.iter_mut().map(|v| median(v)).collect();
    for (level, &m) in medians.iter().enumerate() {
        report.metrics.insert(format!("median_gap_level_{level}"), m);
    }
    report
        .metrics
        .insert("ordering_failures".into(), ordering_failures as f64);

    // Pass rule: gaps at or below the cross-method agreement floor count as
    // already-indistinguishable; otherwise the median gap must shrink by at
    // least 1.3 per grid halving. Ordering failures always fail.
    const FLOOR: f64 = 1e-9;
    let mut decays_ok = true;
    for win in medians.windows(2) {
        let (coarse, fine) = (win[0], win[1]);
        if coarse > FLOOR && !(coarse / fine.max(f64::MIN_POSITIVE) >= 1.3) {
            decays_ok = false;
        }
    }
    // Piecewise (discontinuous) diffusions get no pass threshold on decay:
    // the gaps are reported descriptively.
    let descriptive_only = matches!(spec.sigma, Coefficient::Piecewise { .. });
    report.pass = ordering_failures == 0 && (descriptive_only || decays_ok);
    report
        .metrics
        .insert("descriptive_only".into(), descriptive_only as u8 as f64);
    Ok(report)
}

/// Strong-convergence order over coupled grid refinements.
///
/// Solutions at consecutive levels share increments through [`coarsen`];
/// the slope of `log2(mean sup gap)` against the level index estimates the
/// strong order.
pub fn convergence_order_study(
    spec: &ProblemSpec,
    base: TimeGrid,
    n_levels: usize,
    n_paths: usize,
    seed: u64,
) -> Result<StudyReport, StudyError> {
    checked(spec)?;
    if n_levels < 3 {
        return Err(StudyError::TooFewLevels(n_levels));
    }
    let mut report = StudyReport::new(StudyKind::ConvergenceOrder, seed, n_paths);
    report.param("family", spec.family.name());
    report.param("t_end", base.t_end());
    report.param("n_steps_base", base.n_steps());
    report.param("n_levels", n_levels);

    let fine = TimeGrid::new(base.t_end(), base.n_steps() << n_levels).expect("refined grid");
    let gaps_per_path: Vec<Result<Vec<f64>, StudyError>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let w_fine = generate_brownian(fine, PathSeed::new(seed, p as u64));
            let mut solutions = Vec::with_capacity(n_levels + 1);
            for level in 0..=n_levels {
                let w = coarsen(&w_fine, 1 << (n_levels - level))?;
                solutions.push(stepper::simulate(spec, &w)?.x);
            }
            // gap between consecutive levels, compared on the coarser nodes
            let mut gaps = Vec::with_capacity(n_levels);
            for level in 0..n_levels {
                let finer_on_coarse = coarsen(&solutions[level + 1], 2)?;
                gaps.push(finer_on_coarse.sup_distance(&solutions[level])?);
            }
            Ok(gaps)
        })
        .collect();

    let mut per_level = vec![Vec::with_capacity(n_paths); n_levels];
    for (p, r) in gaps_per_path.into_iter().enumerate() {
        let gaps = r?;
        for (level, &g) in gaps.iter().enumerate() {
            per_level[level].push(g);
            report.raw.push(RawRow {
                path_id: p as u64,
                metric: format!("gap_level_{level}"),
                value: g,
            });
        }
    }

    let log_means: Vec<f64> = per_level.iter().map(|g| mean(g).log2()).collect();
    for (level, lm) in log_means.iter().enumerate() {
        report
            .metrics
            .insert(format!("log2_mean_gap_level_{level}"), *lm);
    }
    let order = -slope(&log_means);
    // residual of the linear fit
    let fit_residual = {
        let s = slope(&log_means);
        let ybar = mean(&log_means);
        let xbar = (log_means.len() as f64 - 1.0) / 2.0;
        log_means
            .iter()
            .enumerate()
            .map(|(i, &y)| (y - (ybar + s * (i as f64 - xbar))).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    report.metrics.insert("order".into(), order);
    report.metrics.insert("fit_residual".into(), fit_residual);
    report.pass = (0.4..=0.8).contains(&order);
    Ok(report)
}

/// Parameters shared by the law-level checks.
#[derive(Debug, Clone, Copy)]
pub struct LawParams {
    pub alpha: f64,
    pub drift: f64,
    pub grid: TimeGrid,
}

/// Law-level Monte Carlo checks at scale.
///
/// * `MaxLaw`: the empirical law of `(1−α)·M^X_1` of the max-perturbed
///   solution against the half-normal CDF at the 1% KS level. The running
///   max is sampled exactly through the Brownian-bridge interval maxima;
///   the biased grid-max statistic is reported alongside for reference.
/// * `GirsanovMeanOne`: sample mean of the exponential-martingale weight
///   against 1 within 3 Monte Carlo standard errors.
/// * `SquaredQv`: pass rate of the squared-process QV residual for the
///   reflected family at the pilot-calibrated bound.
pub fn law_ks_study(
    kind: LawCheck,
    params: LawParams,
    n_paths: usize,
    seed: u64,
) -> Result<StudyReport, StudyError> {
    let mut report = StudyReport::new(StudyKind::LawKs, seed, n_paths);
    report.param("t_end", params.grid.t_end());
    report.param("n_steps", params.grid.n_steps());
    match kind {
        LawCheck::MaxLaw => {
            report.param("kind", "max_law");
            report.param("alpha", params.alpha);
            let alpha = params.alpha;
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(StudyError::Inadmissible(vec![format!(
                    "alpha must lie in (0,1), got {alpha}"
                )]));
            }
            let mut scaled_max: Vec<f64> = (0..n_paths)
                .into_par_iter()
                .map(|p| {
                    let w = generate_brownian(params.grid, PathSeed::new(seed, p as u64));
                    // exact-law terminal running max of W; the perturbed
                    // max is M^W/(1-alpha), so (1-alpha)*M^X = M^W
                    bridge_running_max(&w, PathSeed::new(seed ^ 0x9e3779b97f4a7c15, p as u64))
                        .last()
                })
                .collect();
            let mut grid_max: Vec<f64> = (0..n_paths)
                .into_par_iter()
                .map(|p| {
                    let w = generate_brownian(params.grid, PathSeed::new(seed, p as u64));
                    let d = measure::explicit_alpha_perturbed(&w, alpha)?;
                    Ok((1.0 - alpha) * d.max.last())
                })
                .collect::<Result<_, StudyError>>()?;
            let ks = ks_statistic(&mut scaled_max, half_normal_cdf);
            let ks_grid = ks_statistic(&mut grid_max, half_normal_cdf);
            let critical = KS_CRITICAL_99 / (n_paths as f64).sqrt();
            report.metrics.insert("ks_statistic".into(), ks);
            report.metrics.insert("ks_statistic_grid_max".into(), ks_grid);
            report.metrics.insert("ks_critical_1pct".into(), critical);
            report.pass = ks <= critical;
        }
        LawCheck::GirsanovMeanOne => {
            report.param("kind", "girsanov_mean_one");
            report.param("drift", params.drift);
            let b = Coefficient::Constant(params.drift);
            let weights: Vec<f64> = (0..n_paths)
                .into_par_iter()
                .map(|p| -> Result<f64, StudyError> {
                    let w = generate_brownian(params.grid, PathSeed::new(seed, p as u64));
                    // X-bar is the reflected unit/driftless solution; for a
                    // constant drift the weight depends on W only, but the
                    // evaluation path is kept to exercise the full contract
                    let spec = ProblemSpec::reflected(
                        Coefficient::Constant(1.0),
                        Coefficient::Constant(0.0),
                        params.alpha,
                    );
                    let d = stepper::simulate(&spec, &w)?;
                    Ok(measure::girsanov_log_weight(&d.x, &w, &b)?.exp())
                })
                .collect::<Result<_, StudyError>>()?;
            let m = mean(&weights);
            let var = weights.iter().map(|&x| (x - m).powi(2)).sum::<f64>()
                / (weights.len() as f64 - 1.0);
            let stderr = (var / weights.len() as f64).sqrt();
            report.metrics.insert("mean_weight".into(), m);
            report.metrics.insert("stderr".into(), stderr);
            report
                .metrics
                .insert("deviation_in_stderr".into(), (m - 1.0).abs() / stderr);
            report.pass = (m - 1.0).abs() <= 3.0 * stderr;
        }
        LawCheck::SquaredQv => {
            report.param("kind", "squared_qv");
            report.param("alpha", params.alpha);
            let spec = ProblemSpec::reflected(
                Coefficient::Constant(1.0),
                Coefficient::Constant(0.0),
                params.alpha,
            );
            let residuals: Vec<f64> = (0..n_paths)
                .into_par_iter()
                .map(|p| -> Result<f64, StudyError> {
                    let w = generate_brownian(params.grid, PathSeed::new(seed, p as u64));
                    let d = stepper::simulate(&spec, &w)?;
                    Ok(measure::squared_process_residual(&d))
                })
                .collect::<Result<_, StudyError>>()?;
            for (p, &r) in residuals.iter().enumerate() {
                report.raw.push(RawRow {
                    path_id: p as u64,
                    metric: "qv_residual".into(),
                    value: r,
                });
            }
            let pass_rate = residuals
                .iter()
                .filter(|&&r| r <= SQUARED_QV_RESIDUAL_BOUND)
                .count() as f64
                / residuals.len() as f64;
            report.metrics.insert("pass_rate".into(), pass_rate);
            report
                .metrics
                .insert("residual_bound".into(), SQUARED_QV_RESIDUAL_BOUND);
            report.pass = pass_rate >= SQUARED_QV_PASS_RATE;
        }
    }
    Ok(report)
}

/// Reflected-family invariant sweep: nonnegativity, monotone local time,
/// exact complementarity and the squared-process QV residual pass rate.
pub fn invariant_sweep_study(
    alpha: f64,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<StudyReport, StudyError> {
    let spec = ProblemSpec::reflected(
        Coefficient::Constant(1.0),
        Coefficient::Constant(0.0),
        alpha,
    );
    checked(&spec)?;
    let mut report = StudyReport::new(StudyKind::InvariantSweep, seed, n_paths);
    report.param("family", spec.family.name());
    report.param("alpha", alpha);
    report.param("t_end", grid.t_end());
    report.param("n_steps", grid.n_steps());

    struct PathCheck {
        nonnegative: bool,
        monotone_l: bool,
        complementarity: f64,
        qv_residual: f64,
    }
    let checks: Vec<Result<PathCheck, StudyError>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let w = generate_brownian(grid, PathSeed::new(seed, p as u64));
            let d = stepper::simulate(&spec, &w)?;
            let mut nonnegative = true;
            let mut monotone_l = true;
            let mut dot = 0.0;
            for k in 0..grid.n_steps() {
                if d.x.values()[k] < 0.0 {
                    nonnegative = false;
                }
                let dl = d.local_time.values()[k + 1] - d.local_time.values()[k];
                if dl < 0.0 {
                    monotone_l = false;
                }
                dot += d.x.values()[k + 1] * dl;
            }
            Ok(PathCheck {
                nonnegative,
                monotone_l,
                complementarity: dot,
                qv_residual: measure::squared_process_residual(&d),
            })
        })
        .collect();

    let mut nonneg_fail = 0usize;
    let mut monotone_fail = 0usize;
    let mut compl_fail = 0usize;
    let mut qv_pass = 0usize;
    for (p, r) in checks.into_iter().enumerate() {
        let c = r?;
        if !c.nonnegative {
            nonneg_fail += 1;
        }
        if !c.monotone_l {
            monotone_fail += 1;
        }
        if c.complementarity != 0.0 {
            compl_fail += 1;
        }
        if c.qv_residual <= SQUARED_QV_RESIDUAL_BOUND {
            qv_pass += 1;
        }
        report.raw.push(RawRow {
            path_id: p as u64,
            metric: "qv_residual".into(),
            value: c.qv_residual,
        });
        report.raw.push(RawRow {
            path_id: p as u64,
            metric: "complementarity".into(),
            value: c.complementarity,
        });
    }
    let qv_rate = qv_pass as f64 / n_paths as f64;
    report
        .metrics
        .insert("nonnegativity_failures".into(), nonneg_fail as f64);
    report
        .metrics
        .insert("local_time_monotonicity_failures".into(), monotone_fail as f64);
    report
        .metrics
        .insert("complementarity_failures".into(), compl_fail as f64);
    report.metrics.insert("qv_pass_rate".into(), qv_rate);
    report.pass = nonneg_fail == 0
        && monotone_fail == 0
        && compl_fail == 0
        && qv_rate >= SQUARED_QV_PASS_RATE;
    Ok(report)
}

/// Aggregated Picard convergence behavior: convergence fraction within the
/// iteration budget and the fraction of paths whose delta ratios decrease
/// after burn-in (the factorial-decay signature).
pub fn picard_rate_study(
    spec: &ProblemSpec,
    grid: TimeGrid,
    n_paths: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<StudyReport, StudyError> {
    checked(spec)?;
    let mut report = StudyReport::new(StudyKind::PicardRate, seed, n_paths);
    report.param("family", spec.family.name());
    report.param("t_end", grid.t_end());
    report.param("n_steps", grid.n_steps());
    report.param("tolerance", tol);
    report.param("max_iter", max_iter);

    let runs: Vec<Result<(bool, usize, bool), StudyError>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let w = generate_brownian(grid, PathSeed::new(seed, p as u64));
            let rep = picard::picard_solve(spec, &w, tol, max_iter)?;
            Ok((
                rep.converged,
                rep.iterations,
                ratios_decrease_after_burn_in(&rep.sup_deltas, tol),
            ))
        })
        .collect();

    let mut converged = 0usize;
    let mut monotone = 0usize;
    let mut iteration_counts = Vec::with_capacity(n_paths);
    for (p, r) in runs.into_iter().enumerate() {
        let (conv, iters, mono) = r?;
        if conv {
            converged += 1;
        }
        if mono {
            monotone += 1;
        }
        iteration_counts.push(iters as f64);
        report.raw.push(RawRow {
            path_id: p as u64,
            metric: "iterations".into(),
            value: iters as f64,
        });
    }
    let conv_rate = converged as f64 / n_paths as f64;
    let mono_rate = monotone as f64 / n_paths as f64;
    report.metrics.insert("convergence_rate".into(), conv_rate);
    report
        .metrics
        .insert("monotone_ratio_rate".into(), mono_rate);
    report
        .metrics
        .insert("median_iterations".into(), median(&mut iteration_counts));
    report.pass = conv_rate >= 0.99 && mono_rate >= 0.90;
    Ok(report)
}

/// Factorial-decay signature: after a two-iteration burn-in, the ratios
/// `delta_{n+1}/delta_n` must decrease in aggregate. A decay like
/// `c·T^n/n!` has ratio `T/(n+1)`, so later ratios are smaller than earlier
/// ones; a geometric decay has flat ratios and passes too, but ratios that
/// grow along the sequence fail. The comparison uses geometric means of the
/// earlier and later halves of the post-burn-in window because individual
/// ratios wiggle when an iteration reconfigures max/min branches. Deltas at
/// or below the tolerance floor are excluded: their ratios are round-off
/// noise, not rate information.
pub fn ratios_decrease_after_burn_in(deltas: &[f64], tol: f64) -> bool {
    const BURN_IN: usize = 2;
    let floor = tol * 100.0;
    let usable: Vec<f64> = deltas
        .iter()
        .copied()
        .take_while(|&d| d > floor)
        .collect();
    if usable.len() <= BURN_IN + 1 {
        return true;
    }
    let log_ratios: Vec<f64> = usable
        .windows(2)
        .map(|w| (w[1] / w[0]).ln())
        .skip(BURN_IN)
        .collect();
    if log_ratios.len() < 2 {
        return true;
    }
    let (early, late) = log_ratios.split_at(log_ratios.len() / 2);
    mean(late) <= mean(early) + 1e-9
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MaxDriftCoefficient;

    #[test]
    fn ks_statistic_against_uniform() {
        // evenly spread points have a small statistic, clustered ones do not
        let n = 1000;
        let mut even: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        assert!(ks_statistic(&mut even, |x| x.clamp(0.0, 1.0)) < 0.001);
        let mut clustered = vec![0.5; n];
        assert!(ks_statistic(&mut clustered, |x| x.clamp(0.0, 1.0)) >= 0.5);
    }

    #[test]
    fn half_normal_cdf_values() {
        assert_eq!(half_normal_cdf(-1.0), 0.0);
        assert_eq!(half_normal_cdf(0.0), 0.0);
        // the erf implementation is good to ~1e-9, far below the KS
        // resolution this CDF feeds (critical values are ~1e-3)
        assert!((half_normal_cdf(1.0) - 0.6826894921370859).abs() < 1e-8);
        assert!((half_normal_cdf(50.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn slope_of_line_is_exact() {
        let y = vec![3.0, 2.5, 2.0, 1.5];
        assert!((slope(&y) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn ratio_signature_detection() {
        // factorially decaying deltas pass
        let mut factorial = Vec::new();
        let mut d = 1.0;
        for n in 1..12 {
            d *= 0.9 / n as f64;
            factorial.push(d);
        }
        assert!(ratios_decrease_after_burn_in(&factorial, 1e-12));
        // geometrically decaying with an increasing-rate tail fails
        let bad = vec![1.0, 0.5, 0.25, 0.2, 0.18, 0.17];
        assert!(!ratios_decrease_after_burn_in(&bad, 1e-12));
        // short sequences are vacuously fine
        assert!(ratios_decrease_after_burn_in(&[1.0, 0.1], 1e-12));
    }

    #[test]
    fn max_law_small_scale() {
        // small-N smoke: exact-bridge max should comfortably beat the
        // grid max at coarse dt
        let report = law_ks_study(
            LawCheck::MaxLaw,
            LawParams {
                alpha: 0.5,
                drift: 0.0,
                grid: TimeGrid::new(1.0, 64).unwrap(),
            },
            4000,
            2024,
        )
        .unwrap();
        let ks = report.metrics["ks_statistic"];
        let ks_grid = report.metrics["ks_statistic_grid_max"];
        assert!(ks < ks_grid, "bridge {ks} vs grid {ks_grid}");
    }

    #[test]
    fn girsanov_mean_one_small_scale() {
        let report = law_ks_study(
            LawCheck::GirsanovMeanOne,
            LawParams {
                alpha: 0.5,
                drift: 0.5,
                grid: TimeGrid::new(1.0, 64).unwrap(),
            },
            5000,
            7,
        )
        .unwrap();
        assert!(report.pass, "metrics: {:?}", report.metrics);
    }

    #[test]
    fn uniqueness_gap_oracle_case_is_exact() {
        let spec = ProblemSpec::max_perturbed(
            Coefficient::Constant(1.0),
            Coefficient::Constant(0.0),
            0.5,
        );
        let report =
            uniqueness_gap_study(&spec, 20, TimeGrid::new(1.0, 256).unwrap(), 5).unwrap();
        assert!(report.pass);
        for level in 0..3 {
            assert!(report.metrics[&format!("median_gap_level_{level}")] <= 1e-12);
        }
    }

    #[test]
    fn uniqueness_gap_max_drift_ordering() {
        let spec = ProblemSpec::max_drift(MaxDriftCoefficient::ArctanMax { scale: 1.0 }, 0.0);
        let report =
            uniqueness_gap_study(&spec, 20, TimeGrid::new(1.0, 256).unwrap(), 11).unwrap();
        assert_eq!(report.metrics["ordering_failures"], 0.0);
        assert!(report.pass, "metrics: {:?}", report.metrics);
    }

    #[test]
    fn convergence_gaps_vanish_without_perturbation() {
        // with the perturbation off and constant coefficients the scheme is
        // plain Euler, which coupled refinements reproduce exactly (up to
        // accumulation round-off); with the max perturbation on, refinement
        // genuinely changes the running max, so gaps must be nonzero
        let plain = ProblemSpec::doubly_perturbed(
            Coefficient::Constant(1.0),
            Coefficient::Constant(0.3),
            0.0,
            0.0,
            0.5,
        );
        let grid = TimeGrid::new(1.0, 64).unwrap();
        let report = convergence_order_study(&plain, grid, 3, 10, 3).unwrap();
        for row in &report.raw {
            assert!(row.value <= 1e-12, "{}: {}", row.metric, row.value);
        }

        let perturbed = ProblemSpec::max_perturbed(
            Coefficient::Constant(1.0),
            Coefficient::Constant(0.3),
            0.5,
        );
        // paths whose max never leaves 0 reduce to plain Euler, so only
        // most gaps are substantial
        let report = convergence_order_study(&perturbed, grid, 3, 10, 3).unwrap();
        let big = report.raw.iter().filter(|r| r.value > 1e-6).count();
        assert!(big * 2 > report.raw.len(), "{big} of {}", report.raw.len());
    }

    #[test]
    fn invariant_sweep_smoke() {
        let report =
            invariant_sweep_study(0.5, TimeGrid::new(1.0, 1024).unwrap(), 100, 9).unwrap();
        assert_eq!(report.metrics["nonnegativity_failures"], 0.0);
        assert_eq!(report.metrics["complementarity_failures"], 0.0);
    }
}
