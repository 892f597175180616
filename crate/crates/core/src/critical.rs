//! The critical value `ĉ`: the smallest `c` whose worst-case coverage over
//! `Δ >= 0` reaches `1 − α`.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::coverage::{delta_profile, DeltaLocation, GridSpec};
use crate::error::{domain, Error, Result, SolverStep};
use crate::normal::{self, Correlation};

pub const DEFAULT_TOL: f64 = 1e-4;
const MAX_ITERATIONS: usize = 200;
const C_RESOLUTION: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalMethod {
    /// `ρ = 0` is known and the level is at least 86%: `ĉ = Φ⁻¹(1−α)`.
    ShortcutOneSided,
    Solved,
    /// `ρ = 1`: the two-sided quantile `Φ⁻¹(1−α/2)`.
    DegenerateTwoSided,
}

impl std::fmt::Display for CriticalMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CriticalMethod::ShortcutOneSided => "shortcut_one_sided",
            CriticalMethod::Solved => "solved",
            CriticalMethod::DegenerateTwoSided => "degenerate_two_sided",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalValueResult {
    pub c_hat: f64,
    pub infimal_coverage: f64,
    pub argmin_delta: DeltaLocation,
    pub method: CriticalMethod,
    pub iterations: usize,
    #[serde(skip)]
    pub trace: Vec<SolverStep>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Tolerance on infimal coverage.
    pub tol: f64,
    pub grid: GridSpec,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_TOL,
            grid: GridSpec::default(),
        }
    }
}

/// Solves for `ĉ` on the default Δ grid.
pub fn solve_critical_value(
    rho: Correlation,
    alpha: f64,
    rho_known_zero: bool,
    tol: f64,
) -> Result<CriticalValueResult> {
    solve_critical_value_with(
        rho,
        alpha,
        rho_known_zero,
        &SolverOptions {
            tol,
            ..SolverOptions::default()
        },
    )
}

pub fn solve_critical_value_with(
    rho: Correlation,
    alpha: f64,
    rho_known_zero: bool,
    opts: &SolverOptions,
) -> Result<CriticalValueResult> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::UnsupportedLevel(alpha));
    }
    if !(opts.tol > 0.0) {
        return Err(domain(format!(
            "solver tolerance must be positive, got {}",
            opts.tol
        )));
    }
    if rho_known_zero && rho.get() != 0.0 {
        return Err(domain(format!(
            "rho is flagged as known to be zero but rho = {}",
            rho.get()
        )));
    }
    let target = 1.0 - alpha;
    let one_sided = normal::quantile(1.0 - alpha);
    let two_sided = normal::quantile(1.0 - alpha / 2.0);

    if rho_known_zero && std::f64::consts::SQRT_2 * one_sided >= two_sided {
        return Ok(CriticalValueResult {
            c_hat: one_sided,
            infimal_coverage: target,
            argmin_delta: DeltaLocation::Infinity,
            method: CriticalMethod::ShortcutOneSided,
            iterations: 0,
            trace: Vec::new(),
        });
    }
    if rho.is_perfect_positive() {
        // coverage at Δ = 0 is exactly 1 − α for every c <= Φ⁻¹(1−α/2)
        return Ok(CriticalValueResult {
            c_hat: two_sided,
            infimal_coverage: target,
            argmin_delta: DeltaLocation::Finite(0.0),
            method: CriticalMethod::DegenerateTwoSided,
            iterations: 0,
            trace: Vec::new(),
        });
    }

    let mut trace = Vec::new();
    let mut lo = one_sided;
    let lo_profile = delta_profile(lo, rho, alpha, opts.grid)?;
    trace.push(SolverStep {
        c: lo,
        infimal_coverage: lo_profile.infimum,
    });
    if lo_profile.infimum >= target - opts.tol {
        return Ok(CriticalValueResult {
            c_hat: lo,
            infimal_coverage: lo_profile.infimum,
            argmin_delta: lo_profile.argmin_delta,
            method: CriticalMethod::Solved,
            iterations: 1,
            trace,
        });
    }

    let mut hi = two_sided;
    let mut best = delta_profile(hi, rho, alpha, opts.grid)?;
    trace.push(SolverStep {
        c: hi,
        infimal_coverage: best.infimum,
    });
    if best.infimum < target - opts.tol {
        return Err(Error::Solver {
            reason: format!(
                "two-sided quantile {hi} does not bracket the root (infimal coverage {})",
                best.infimum
            ),
            trace,
        });
    }

    while hi - lo > C_RESOLUTION {
        if trace.len() >= MAX_ITERATIONS {
            return Err(Error::Solver {
                reason: format!("no convergence, bracket [{lo}, {hi}]"),
                trace,
            });
        }
        let mid = 0.5 * (lo + hi);
        let profile = delta_profile(mid, rho, alpha, opts.grid)?;
        trace.push(SolverStep {
            c: mid,
            infimal_coverage: profile.infimum,
        });
        if profile.infimum >= target {
            hi = mid;
            best = profile;
        } else {
            lo = mid;
        }
    }

    if (best.infimum - target).abs() > opts.tol {
        return Err(Error::Solver {
            reason: format!(
                "infimal coverage {} misses the target {target} by more than {}",
                best.infimum, opts.tol
            ),
            trace,
        });
    }
    Ok(CriticalValueResult {
        c_hat: hi,
        infimal_coverage: best.infimum,
        argmin_delta: best.argmin_delta,
        method: CriticalMethod::Solved,
        iterations: trace.len(),
        trace,
    })
}

/// Bonferroni critical value for coverage of the whole set: `Φ⁻¹(1−α/2)`.
pub fn set_coverage_critical_value(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(normal::quantile(1.0 - alpha / 2.0))
}

/// Memoizes solved critical values by `(ρ, α, ρ-known-zero)`.
#[derive(Debug, Default)]
pub struct CriticalValueCache {
    opts: SolverOptions,
    solved: Mutex<HashMap<(u64, u64, bool), CriticalValueResult>>,
}

impl CriticalValueCache {
    pub fn new(opts: SolverOptions) -> Self {
        CriticalValueCache {
            opts,
            solved: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(
        &self,
        rho: Correlation,
        alpha: f64,
        rho_known_zero: bool,
    ) -> Result<CriticalValueResult> {
        let key = (rho.get().to_bits(), alpha.to_bits(), rho_known_zero);
        if let Some(hit) = self.solved.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let result = solve_critical_value_with(rho, alpha, rho_known_zero, &self.opts)?;
        self.solved.lock().unwrap().insert(key, result.clone());
        Ok(result)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Cell {
    pub rho: f64,
    pub alpha: f64,
    pub result: CriticalValueResult,
}

pub const TABLE1_RHOS: [f64; 7] = [0.8, 0.85, 0.9, 0.95, 0.98, 0.99, 1.0];
pub const TABLE1_ALPHAS: [f64; 3] = [0.1, 0.05, 0.01];

/// Solves every `(ρ, α)` cell, α-major.
pub fn generate_table1(rhos: &[f64], alphas: &[f64]) -> Result<Vec<Table1Cell>> {
    generate_table1_with(rhos, alphas, &SolverOptions::default())
}

pub fn generate_table1_with(
    rhos: &[f64],
    alphas: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<Table1Cell>> {
    let mut cells = Vec::with_capacity(rhos.len() * alphas.len());
    for &alpha in alphas {
        for &r in rhos {
            let result = solve_critical_value_with(Correlation::new(r)?, alpha, false, opts)?;
            cells.push(Table1Cell {
                rho: r,
                alpha,
                result,
            });
        }
    }
    Ok(cells)
}

/// CSV with columns `rho,alpha,c_hat,c_hat_rounded,infimal_coverage,argmin_delta,method`.
pub fn write_table1_csv<W: Write>(cells: &[Table1Cell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "rho",
        "alpha",
        "c_hat",
        "c_hat_rounded",
        "infimal_coverage",
        "argmin_delta",
        "method",
    ])?;
    for cell in cells {
        let r = &cell.result;
        w.write_record([
            cell.rho.to_string(),
            cell.alpha.to_string(),
            format!("{:.6}", r.c_hat),
            format!("{:.2}", r.c_hat),
            format!("{:.6}", r.infimal_coverage),
            r.argmin_delta.to_string(),
            r.method.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Text layout: one row per α, one column per ρ, two decimals.
pub fn format_table1_text(cells: &[Table1Cell]) -> String {
    let mut rhos: Vec<f64> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    for cell in cells {
        if !rhos.contains(&cell.rho) {
            rhos.push(cell.rho);
        }
        if !alphas.contains(&cell.alpha) {
            alphas.push(cell.alpha);
        }
    }
    let mut out = format!("{:<12}", "rho");
    for r in &rhos {
        out.push_str(&format!("{:>7}", format!("{r}")));
    }
    out.push('\n');
    for a in &alphas {
        out.push_str(&format!("{:<12}", format!("alpha={a}")));
        for r in &rhos {
            let cell = cells.iter().find(|c| c.rho == *r && c.alpha == *a);
            match cell {
                Some(c) => out.push_str(&format!("{:>7.2}", c.result.c_hat)),
                None => out.push_str(&format!("{:>7}", "-")),
            }
        }
        out.push('\n');
    }
    out
}
