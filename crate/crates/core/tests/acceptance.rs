//! End-to-end acceptance suite. Each test checks one release gate and
//! prints a single `acceptance: <name>: pass|fail` line with its runtime.

use perturbed_sde::measure;
use perturbed_sde::models::{
    doubly_admissible, validate_params, Coefficient, ProblemSpec,
};
use perturbed_sde::paths::{generate_brownian, PathSeed, TimeGrid};
use perturbed_sde::picard;
use perturbed_sde::stepper;
use perturbed_sde::verify::{self, LawCheck, LawParams};
use std::time::Instant;

fn gate(name: &str, started: Instant, pass: bool) {
    println!(
        "acceptance: {name}: {} ({:.2}s)",
        if pass { "pass" } else { "fail" },
        started.elapsed().as_secs_f64()
    );
    assert!(pass, "{name} failed");
}

#[test]
fn closed_form_oracle_agreement() {
    let started = Instant::now();
    let grid = TimeGrid::new(1.0, 1 << 10).unwrap();
    let mut worst = 0.0f64;
    for &alpha in &[0.1, 0.5, 0.9] {
        let spec = ProblemSpec::max_perturbed(
            Coefficient::Constant(1.0),
            Coefficient::Constant(0.0),
            alpha,
        );
        for p in 0..100u64 {
            let w = generate_brownian(grid, PathSeed::new(1001, p));
            let numeric = stepper::simulate(&spec, &w).unwrap();
            let explicit = measure::explicit_alpha_perturbed(&w, alpha).unwrap();
            worst = worst.max(numeric.x.sup_distance(&explicit.x).unwrap());
        }
    }
    let pass = worst <= 1e-10 && started.elapsed().as_secs_f64() < 5.0;
    println!("  worst oracle gap {worst:.3e}");
    gate("closed_form_oracle_agreement", started, pass);
}

#[test]
fn defining_identity_residuals() {
    let started = Instant::now();
    let grid = TimeGrid::new(1.0, 1 << 9).unwrap();
    let sigma = Coefficient::BoundedSine { scale: 0.8 };
    let b = Coefficient::Affine {
        intercept: 0.1,
        slope: -0.3,
    };
    let specs = [
        ProblemSpec::max_perturbed(sigma, b, 0.5),
        ProblemSpec::reflected(sigma, b, 0.5),
        ProblemSpec::doubly_perturbed(sigma, b, 0.25, -0.4, 0.7),
    ];
    let mut worst = 0.0f64;
    for spec in &specs {
        for p in 0..50u64 {
            let w = generate_brownian(grid, PathSeed::new(1002, p));
            let d = stepper::simulate(spec, &w).unwrap();
            worst = worst.max(stepper::identity_residual(spec, &w, &d));
        }
    }
    println!("  worst identity residual {worst:.3e}");
    gate("defining_identity_residuals", started, worst <= 1e-12);
}

#[test]
fn running_max_law_ks() {
    let started = Instant::now();
    let report = verify::law_ks_study(
        LawCheck::MaxLaw,
        LawParams {
            alpha: 0.5,
            drift: 0.0,
            grid: TimeGrid::new(1.0, 1 << 10).unwrap(),
        },
        100_000,
        1003,
    )
    .unwrap();
    println!(
        "  ks {:.5e} vs critical {:.5e}",
        report.metrics["ks_statistic"], report.metrics["ks_critical_1pct"]
    );
    let pass = report.pass && started.elapsed().as_secs_f64() < 60.0;
    gate("running_max_law_ks", started, pass);
}

#[test]
fn coupled_solver_matches_stepwise_solution() {
    let started = Instant::now();
    let grid = TimeGrid::new(1.0, 1 << 8).unwrap();
    let mut worst = 0.0f64;
    for &(alpha, beta) in &[(0.25, 0.25), (0.4, -0.8), (0.1, 0.6)] {
        let spec = ProblemSpec::doubly_perturbed(
            Coefficient::Constant(1.0),
            Coefficient::Constant(0.0),
            alpha,
            beta,
            0.0,
        );
        for p in 0..1000u64 {
            let w = generate_brownian(grid, PathSeed::new(1004, p));
            let stepwise = stepper::simulate(&spec, &w).unwrap();
            let coupled = picard::coupled_max_min_solve(&w, alpha, beta, 1e-12).unwrap();
            worst = worst.max(stepwise.x.sup_distance(&coupled.x).unwrap());
        }
    }
    println!("  worst cross-solver gap {worst:.3e}");
    let pass = worst <= 1e-10 && started.elapsed().as_secs_f64() < 10.0;
    gate("coupled_solver_matches_stepwise_solution", started, pass);
}

#[test]
fn picard_iteration_behavior() {
    let started = Instant::now();
    let spec = ProblemSpec::doubly_perturbed(
        Coefficient::Constant(1.0),
        Coefficient::Affine {
            intercept: 0.0,
            slope: 0.5,
        },
        0.25,
        0.25,
        0.5,
    );
    let grid = TimeGrid::new(1.0, 1 << 9).unwrap();
    let report = verify::picard_rate_study(&spec, grid, 1000, 1005, 1e-10, 200).unwrap();
    let within_budget = report
        .raw
        .iter()
        .filter(|r| r.metric == "iterations" && r.value <= 25.0)
        .count() as f64
        / 1000.0;
    println!(
        "  convergence rate {}, within 25 iterations {within_budget}, monotone ratio rate {}",
        report.metrics["convergence_rate"], report.metrics["monotone_ratio_rate"]
    );
    let pass = report.metrics["convergence_rate"] >= 0.99
        && within_budget >= 0.99
        && report.metrics["monotone_ratio_rate"] >= 0.90
        && started.elapsed().as_secs_f64() < 120.0;
    gate("picard_iteration_behavior", started, pass);
}

#[test]
fn admissibility_gate() {
    let started = Instant::now();
    let make = |alpha: f64, beta: f64| {
        ProblemSpec::doubly_perturbed(
            Coefficient::Constant(1.0),
            Coefficient::Constant(0.0),
            alpha,
            beta,
            0.0,
        )
    };
    let mut pass = !validate_params(&make(0.5, 0.5)).is_ok();
    pass &= validate_params(&make(0.25, 0.25)).is_ok();
    let mut mismatches = 0usize;
    for i in -19..=19i32 {
        for j in -19..=19i32 {
            let alpha = i as f64 * 0.05;
            let beta = j as f64 * 0.05;
            let accepted = validate_params(&make(alpha, beta)).is_ok();
            if accepted != doubly_admissible(alpha, beta) {
                mismatches += 1;
            }
        }
    }
    println!("  grid mismatches {mismatches}");
    pass &= mismatches == 0;
    gate("admissibility_gate", started, pass);
}

#[test]
fn reflected_family_invariants() {
    let started = Instant::now();
    let report =
        verify::invariant_sweep_study(0.5, TimeGrid::new(1.0, 1 << 12).unwrap(), 1000, 1007)
            .unwrap();
    println!(
        "  nonneg fails {}, local-time fails {}, complementarity fails {}, qv pass rate {}",
        report.metrics["nonnegativity_failures"],
        report.metrics["local_time_monotonicity_failures"],
        report.metrics["complementarity_failures"],
        report.metrics["qv_pass_rate"]
    );
    let pass = report.pass && started.elapsed().as_secs_f64() < 90.0;
    gate("reflected_family_invariants", started, pass);
}

#[test]
fn strong_convergence_order() {
    let started = Instant::now();
    let sigma = Coefficient::BoundedSine { scale: 0.8 };
    let b = Coefficient::Constant(0.1);
    let base = TimeGrid::new(1.0, 1 << 8).unwrap();
    let specs = [
        ProblemSpec::max_perturbed(sigma, b, 0.5),
        ProblemSpec::doubly_perturbed(sigma, b, 0.25, -0.4, 0.5),
    ];
    let mut pass = true;
    for spec in &specs {
        let report = verify::convergence_order_study(spec, base, 3, 200, 1008).unwrap();
        println!(
            "  {}: order {:.3}",
            spec.family.name(),
            report.metrics["order"]
        );
        pass &= report.pass;
    }
    pass &= started.elapsed().as_secs_f64() < 120.0;
    gate("strong_convergence_order", started, pass);
}

#[test]
fn girsanov_weight_mean_one() {
    let started = Instant::now();
    let report = verify::law_ks_study(
        LawCheck::GirsanovMeanOne,
        LawParams {
            alpha: 0.5,
            drift: 0.5,
            grid: TimeGrid::new(1.0, 1 << 10).unwrap(),
        },
        100_000,
        1009,
    )
    .unwrap();
    println!(
        "  mean {} ({} standard errors from 1)",
        report.metrics["mean_weight"], report.metrics["deviation_in_stderr"]
    );
    let pass = report.pass && started.elapsed().as_secs_f64() < 30.0;
    gate("girsanov_weight_mean_one", started, pass);
}

#[test]
fn cli_reruns_are_byte_identical() {
    let started = Instant::now();
    let bin = env!("CARGO_BIN_EXE_psde");
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &std::path::Path| {
        let status = std::process::Command::new(bin)
            .args([
                "simulate",
                "--family",
                "reflected",
                "--alpha",
                "0.5",
                "--n-paths",
                "50",
                "--n-steps",
                "256",
                "--seed",
                "9",
                "--out-dir",
            ])
            .arg(dir)
            .status()
            .unwrap();
        assert!(status.success());
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&a);
    run(&b);
    let mut pass = true;
    for name in ["paths.csv", "report.json", "raw_metrics.csv"] {
        let left = std::fs::read(a.join(name)).unwrap();
        let right = std::fs::read(b.join(name)).unwrap();
        if left != right {
            pass = false;
            println!("  {name} differs between reruns");
        }
    }
    gate("cli_reruns_are_byte_identical", started, pass);
}
