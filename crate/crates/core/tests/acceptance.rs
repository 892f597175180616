//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each, and
//! exits nonzero if any fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::process::ExitCode;
use std::time::Instant;

use bounds_ci::coverage::{
    ci_coverage_objective, delta_profile, derivative_terms, event_delta_profile, event_probability,
    lambda_profile, EventParams, GridSpec,
};
use bounds_ci::critical::{
    generate_table1, solve_critical_value, CriticalMethod, CriticalValueCache, DEFAULT_TOL,
};
use bounds_ci::interval::{
    build_ci_ma_with, ci_ti, relative_excess_length, CoverageMode, InferenceProblem,
};
use bounds_ci::io::{backout_table2_ses, bundled_table2};
use bounds_ci::mc::{default_delta_grid, run_experiment, ExperimentConfig, Method};
use bounds_ci::normal::{self, Correlation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{simulated_coverage, Design, TABLE1_ALPHAS, TABLE1_PRINTED, TABLE1_RHOS};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rho(r: f64) -> Correlation {
    Correlation::new(r).unwrap()
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn table1_reproduction() -> Outcome {
    let cells = generate_table1(&TABLE1_RHOS, &TABLE1_ALPHAS).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut misses = Vec::new();
    for cell in &cells {
        let i = TABLE1_ALPHAS.iter().position(|&a| a == cell.alpha).unwrap();
        let j = TABLE1_RHOS.iter().position(|&r| r == cell.rho).unwrap();
        let err = (cell.result.c_hat - TABLE1_PRINTED[i][j]).abs();
        worst = worst.max(err);
        if err > 0.01 {
            misses.push(format!(
                "(ρ={}, α={}): {:.4} vs {}",
                cell.rho, cell.alpha, cell.result.c_hat, TABLE1_PRINTED[i][j]
            ));
        }
    }
    if cells.len() != 21 || !misses.is_empty() {
        return Err(format!(
            "{} cells, misses: {}",
            cells.len(),
            misses.join("; ")
        ));
    }
    Ok(format!("21/21 cells within 0.01 (largest gap {worst:.4})"))
}

fn shortcut_consistency() -> Outcome {
    let mut notes = Vec::new();
    for alpha in [0.1, 0.05, 0.01] {
        let res = solve_critical_value(Correlation::ZERO, alpha, false, DEFAULT_TOL)
            .map_err(|e| e.to_string())?;
        let one_sided = normal::quantile(1.0 - alpha);
        // coverage-equivalent distance: the tail coverage Φ(c) against 1 − α
        let gap = (normal::cdf(res.c_hat) - (1.0 - alpha)).abs();
        if res.method != CriticalMethod::Solved || gap > 2.0 * DEFAULT_TOL {
            return Err(format!(
                "α={alpha}: ĉ={} vs Φ⁻¹(1−α)={one_sided}, gap {gap:.2e}",
                res.c_hat
            ));
        }
        notes.push(format!(
            "α={alpha}: |ĉ−Φ⁻¹(1−α)|={:.1e}",
            (res.c_hat - one_sided).abs()
        ));
    }
    Ok(notes.join(", "))
}

fn coverage_floor() -> Outcome {
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for r in [0.0, 0.7, -0.7, 0.95] {
        let config = ExperimentConfig {
            delta_grid: default_delta_grid(),
            replications: 100_000,
            seed: 20_250_101,
            methods: vec![Method::CiMa, Method::CiTi],
            workers: workers(),
            ..ExperimentConfig::new(rho(r), 0.05)
        };
        let points = run_experiment(&config).map_err(|e| e.to_string())?;
        let mut min_margin = f64::INFINITY;
        for p in points.iter().filter(|p| p.method == Method::CiMa) {
            let margin = p.coverage - (0.95 - 3.0 * p.coverage_se);
            min_margin = min_margin.min(margin);
            if margin < 0.0 {
                failures.push(format!(
                    "ρ={r} Δ={}: CI_MA coverage {:.4}",
                    p.delta, p.coverage
                ));
            }
        }
        let ti = points
            .iter()
            .find(|p| p.method == Method::CiTi && p.delta == -2.0)
            .expect("Δ = −2 on grid");
        if ti.coverage >= 0.90 {
            failures.push(format!("ρ={r}: CI_TI coverage {:.4} at Δ=−2", ti.coverage));
        }
        notes.push(format!(
            "ρ={r}: min margin {min_margin:.4}, CI_TI(Δ=−2) {:.3}",
            ti.coverage
        ));
    }
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(failures.join("; "))
    }
}

fn derivative_check() -> Outcome {
    let c = normal::quantile(0.95);
    let gamma = std::f64::consts::SQRT_2 * normal::quantile(0.975);
    let h = 1e-3;
    let mut worst: f64 = 0.0;
    let mut sums = Vec::new();
    for k in 0..=24 {
        let delta = 0.25 * k as f64;
        let (a, b) = derivative_terms(delta, c, gamma);
        if b <= 0.0 {
            return Err(format!("B = {b} at Δ={delta}"));
        }
        if k == 0 && a.abs() > 1e-15 {
            return Err(format!("A(0) = {a}"));
        }
        let f = |d: f64| ci_coverage_objective(d, c, Correlation::ZERO, 0.05).unwrap();
        let fd = if delta == 0.0 {
            // one-sided fourth-order difference at the boundary
            (-25.0 * f(0.0) + 48.0 * f(h) - 36.0 * f(2.0 * h) + 16.0 * f(3.0 * h)
                - 3.0 * f(4.0 * h))
                / (12.0 * h)
        } else {
            (f(delta + h) - f(delta - h)) / (2.0 * h)
        };
        worst = worst.max((a + b - fd).abs());
        sums.push(a + b);
    }
    if worst > 1e-5 {
        return Err(format!("largest |A+B − FD| = {worst:.2e}"));
    }
    let changes: Vec<usize> = (1..sums.len())
        .filter(|&i| sums[i - 1].signum() != sums[i].signum())
        .collect();
    match changes[..] {
        [] => Ok(format!("max |A+B − FD| {worst:.1e}, no sign change")),
        [i] if sums[i - 1] > 0.0 => Ok(format!(
            "max |A+B − FD| {worst:.1e}, single +→− change between Δ={} and Δ={}",
            0.25 * (i - 1) as f64,
            0.25 * i as f64
        )),
        _ => Err(format!("sign pattern of A+B: {changes:?}")),
    }
}

fn endpoint_equality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_inf: f64 = 0.0;
    let mut worst_end: f64 = 0.0;
    let lambdas: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
    for r in [0.0, 0.5] {
        let c = solve_critical_value(rho(r), 0.05, r == 0.0, DEFAULT_TOL)
            .map_err(|e| e.to_string())?
            .c_hat;
        for _ in 0..20 {
            let sl: f64 = rng.random_range(0.5..2.0);
            let su: f64 = rng.random_range(0.5..2.0);
            let grid = GridSpec {
                max_delta: 20.0 * sl.max(su),
                step: 0.005 * sl.min(su),
            };
            let template = |lambda: f64| EventParams {
                delta: 0.0,
                lambda,
                c,
                sigma_l: sl,
                sigma_u: su,
                rho: rho(r),
                alpha: 0.05,
            };
            let inf0 = event_delta_profile(&template(0.0), grid)
                .map_err(|e| e.to_string())?
                .infimum;
            let inf1 = event_delta_profile(&template(1.0), grid)
                .map_err(|e| e.to_string())?
                .infimum;
            worst_inf = worst_inf.max((inf0 - inf1).abs());

            for beta in [0.5, 1.5, 3.0] {
                let prof = lambda_profile(beta, c, sl, su, rho(r), 0.05, &lambdas)
                    .map_err(|e| e.to_string())?;
                let (first, last) = (prof[0].1, prof[prof.len() - 1].1);
                worst_end = worst_end.max((first - last).abs());
                let peak = prof[1..prof.len() - 1]
                    .iter()
                    .map(|p| p.1)
                    .fold(f64::MIN, f64::max);
                if peak <= first.max(last) {
                    return Err(format!(
                        "ρ={r}, σ=({sl:.3},{su:.3}), β={beta}: no interior peak"
                    ));
                }
            }
        }
    }
    if worst_inf > 1e-4 || worst_end > 1e-5 {
        return Err(format!(
            "infimum gap {worst_inf:.2e}, endpoint gap {worst_end:.2e}"
        ));
    }
    Ok(format!(
        "40 designs: infimum gap {worst_inf:.1e}, λ-endpoint gap {worst_end:.1e}, interior peaks"
    ))
}

fn length_floor() -> Outcome {
    let rhos = [-0.9, -0.5, 0.0, 0.3, 0.6, 0.8, 0.9, 0.95, 0.99];
    let alphas = [0.01, 0.05, 0.1];
    let cache = CriticalValueCache::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 100_000;
    let mut inverted = 0;
    for i in 0..n {
        let sl = 10f64.powf(rng.random_range(-2.0..1.0));
        let su = 10f64.powf(rng.random_range(-2.0..1.0));
        let tl = rng.random_range(-100.0..100.0);
        let gap = rng.random_range(-20.0..20.0) * sl.max(su);
        let r = rhos[rng.random_range(0..rhos.len())];
        let alpha = alphas[rng.random_range(0..alphas.len())];
        let known = r == 0.0 && rng.random_bool(0.5);
        let p = InferenceProblem::new(tl, tl + gap, sl, su, rho(r), alpha).with_known_zero(known);
        inverted += (gap < 0.0) as usize;
        let rep = build_ci_ma_with(&p, None, CoverageMode::PointCoverage, Some(&cache))
            .map_err(|e| format!("problem {i}: {e}"))?;
        let ma = rep.ci_ma;
        let floor = 2.0 * rep.sigma_star_se * normal::quantile(1.0 - alpha / 2.0);
        let fail = |what: &str| Err(format!("problem {i} ({p:?}): {what}"));
        if ma.empty || !(ma.lower <= ma.upper) {
            return fail("empty");
        }
        // endpoints carry rounding error proportional to their magnitude
        let rounding = 4.0 * f64::EPSILON * (ma.lower.abs() + ma.upper.abs());
        if ma.length() < floor * (1.0 - 1e-12) - rounding {
            return fail("shorter than the floor");
        }
        if !ma.covers(&rep.ci_pseudo, 0.0) {
            return fail("misses CI_θ*");
        }
        if !rep.ci_theta_set.empty {
            if !ma.covers(&rep.ci_theta_set, 0.0) {
                return fail("misses CI_Θ");
            }
            // contiguity: the union is one interval because θ̂* ∈ CI_Θ
            let tol = 1e-12 * (1.0 + rep.theta_star_hat.abs());
            if rep.theta_star_hat < rep.ci_theta_set.lower - tol
                || rep.theta_star_hat > rep.ci_theta_set.upper + tol
            {
                return fail("union not contiguous");
            }
        }
    }
    Ok(format!(
        "{n} problems ({inverted} inverted): nonempty, contiguous, floor and containment hold"
    ))
}

fn table2_round_trip() -> Outcome {
    let cache = CriticalValueCache::default();
    let mut worst_ma: f64 = 0.0;
    let mut worst_ti: f64 = 0.0;
    let mut worst_rel: f64 = 0.0;
    let mut failures = Vec::new();
    for b in backout_table2_ses(&bundled_table2()) {
        let row = &b.row;
        let Some(p) = &b.problem else {
            failures.push(format!(
                "{}: back-out flagged (error {:.4})",
                row.game, b.max_error
            ));
            continue;
        };
        let rep = build_ci_ma_with(p, None, CoverageMode::PointCoverage, Some(&cache))
            .map_err(|e| e.to_string())?;
        let ti = ci_ti(p).map_err(|e| e.to_string())?;
        let ma_err = (rep.ci_ma.lower - row.ci_ma_lo)
            .abs()
            .max((rep.ci_ma.upper - row.ci_ma_hi).abs());
        let ti_err = (ti.lower - row.ci_ti_lo)
            .abs()
            .max((ti.upper - row.ci_ti_hi).abs());
        let rel =
            relative_excess_length(&rep.ci_ma, &ti, p.delta_hat()).map_err(|e| e.to_string())?;
        worst_ma = worst_ma.max(ma_err);
        worst_ti = worst_ti.max(ti_err);
        worst_rel = worst_rel.max((rel - row.rel_length).abs());
        if ma_err > 0.001 {
            failures.push(format!("{}: CI_MA off by {ma_err:.4}", row.game));
        }
        if ti.empty || ti_err > 0.003 {
            failures.push(format!(
                "{}: CI_TI [{:.4}, {:.4}] off by {ti_err:.4}",
                row.game, ti.lower, ti.upper
            ));
        }
        if (rel - row.rel_length).abs() > 0.03 {
            failures.push(format!(
                "{}: relative length {rel:.3} vs {}",
                row.game, row.rel_length
            ));
        }
        if !(rel < 1.0) {
            failures.push(format!("{}: CI_MA not shorter (ratio {rel:.3})", row.game));
        }
    }
    if failures.is_empty() {
        Ok(format!(
            "9 rows: CI_MA within {worst_ma:.1e}, CI_TI within {worst_ti:.4}, rel. length within {worst_rel:.3}"
        ))
    } else {
        Err(failures.join("; "))
    }
}

fn quadrature_vs_simulation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut agree = 0;
    let mut worst = (0.0, String::new());
    for k in 0..50 {
        let d = Design {
            delta: rng.random_range(-3.0..6.0),
            lambda: rng.random_range(0.0..1.0),
            c: rng.random_range(1.0..2.6),
            sigma_l: rng.random_range(0.5..2.0),
            sigma_u: rng.random_range(0.5..2.0),
            rho: rng.random_range(-0.95..0.95),
            alpha: rng.random_range(0.01..0.2),
        };
        let exact = event_probability(&EventParams {
            delta: d.delta,
            lambda: d.lambda,
            c: d.c,
            sigma_l: d.sigma_l,
            sigma_u: d.sigma_u,
            rho: rho(d.rho),
            alpha: d.alpha,
        })
        .map_err(|e| e.to_string())?;
        let (mc, se) = simulated_coverage(&d, 4_000_000, 100 + k);
        let z = (exact - mc).abs() / se.max(1e-7);
        if z <= 3.0 {
            agree += 1;
        }
        if z > worst.0 {
            worst = (z, format!("{d:?}"));
        }
    }
    let msg = format!("{agree}/50 within 3 MC SEs (largest |z| {:.2})", worst.0);
    if agree >= 47 {
        Ok(msg)
    } else {
        Err(format!("{msg}; worst design {}", worst.1))
    }
}

fn high_correlation_pathology() -> Outcome {
    let r = rho(0.95);
    let grid = GridSpec::default();
    let naive = delta_profile(normal::quantile(0.95), r, 0.05, grid).map_err(|e| e.to_string())?;
    let solved = solve_critical_value(r, 0.05, false, DEFAULT_TOL).map_err(|e| e.to_string())?;
    let fixed = delta_profile(solved.c_hat, r, 0.05, grid).map_err(|e| e.to_string())?;
    let dip = naive.grid_min();
    if !(dip < 0.95 && naive.argmin_delta.is_finite()) {
        return Err(format!(
            "c=1.6449 profile minimum {dip:.5} at {}",
            naive.argmin_delta
        ));
    }
    if fixed.infimum < 0.95 {
        return Err(format!(
            "ĉ={:.4} still dips to {:.5}",
            solved.c_hat, fixed.infimum
        ));
    }
    Ok(format!(
        "c=1.6449 dips to {dip:.4} at Δ={}; ĉ={:.4} keeps infimum {:.5}",
        naive.argmin_delta, solved.c_hat, fixed.infimum
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("Table 1 reproduction", table1_reproduction),
        ("shortcut consistency at ρ=0", shortcut_consistency),
        ("coverage floor (Monte Carlo)", coverage_floor),
        ("derivative terms vs finite differences", derivative_check),
        ("endpoint equality of λ-profiles", endpoint_equality),
        ("length floor and non-emptiness", length_floor),
        ("Table 2 round trip", table2_round_trip),
        ("quadrature vs Monte Carlo", quadrature_vs_simulation),
        ("ρ=0.95 pathology", high_correlation_pathology),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
