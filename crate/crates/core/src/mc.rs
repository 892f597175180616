//! Monte Carlo coverage and length experiments with estimators drawn from
//! their limiting normal distribution.
//!
//! Each replication draws `(Z1, Z2)` and sets `θ̂_L = Z1`, `θ̂_U = Δ + Z2` with
//! unit standard errors. The same draws are reused for every `Δ` and every
//! method. Replications are split into fixed-size blocks, each with its own
//! RNG stream, and block results are merged in block order, so output does not
//! depend on the number of worker threads.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::{event_probability, EventParams};
use crate::critical::{solve_critical_value, DEFAULT_TOL};
use crate::error::{domain, Error, Result};
use crate::interval::{ma_parts, ti_interval, Interval, TiCriticals};
use crate::normal::{self, Correlation, RngStream};

/// Replications per RNG stream.
pub const BLOCK_SIZE: u64 = 16_384;
pub const DEFAULT_REPLICATIONS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "CI_MA")]
    CiMa,
    #[serde(rename = "CI_TI")]
    CiTi,
    #[serde(rename = "CI_TI_union")]
    CiTiUnion,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::CiMa, Method::CiTi, Method::CiTiUnion];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::CiMa => "CI_MA",
            Method::CiTi => "CI_TI",
            Method::CiTiUnion => "CI_TI_union",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ci_ma" | "ma" => Ok(Method::CiMa),
            "ci_ti" | "ti" => Ok(Method::CiTi),
            "ci_ti_union" | "ti_union" => Ok(Method::CiTiUnion),
            _ => Err(domain(format!(
                "unknown method '{s}' (expected CI_MA, CI_TI or CI_TI_union)"
            ))),
        }
    }
}

/// `-4, -3.75, …, 10`.
pub fn default_delta_grid() -> Vec<f64> {
    (0..=56).map(|i| -4.0 + 0.25 * i as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub rho: Correlation,
    pub alpha: f64,
    pub delta_grid: Vec<f64>,
    pub replications: u64,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub workers: usize,
    /// Replaces the solved `ĉ` in `CI_MA`. Meant for studying miscalibrated intervals.
    pub c_override: Option<f64>,
}

impl ExperimentConfig {
    pub fn new(rho: Correlation, alpha: f64) -> Self {
        ExperimentConfig {
            rho,
            alpha,
            delta_grid: default_delta_grid(),
            replications: DEFAULT_REPLICATIONS,
            seed: 0,
            methods: Method::ALL.to_vec(),
            workers: 1,
            c_override: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::UnsupportedLevel(self.alpha));
        }
        if self.replications == 0 {
            return Err(domain("replications must be at least 1"));
        }
        if self.workers == 0 {
            return Err(domain("workers must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(domain("no methods selected"));
        }
        if self.delta_grid.is_empty() || self.delta_grid.iter().any(|d| !d.is_finite()) {
            return Err(domain("delta grid must be nonempty and finite"));
        }
        if self.delta_grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(domain("delta grid must be sorted"));
        }
        if let Some(c) = self.c_override {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(domain(format!(
                    "critical value override must be finite and >= 0, got {c}"
                )));
            }
        }
        Ok(())
    }

    fn c_hat(&self) -> Result<f64> {
        match self.c_override {
            Some(c) => Ok(c),
            None => {
                Ok(
                    solve_critical_value(self.rho, self.alpha, self.rho.get() == 0.0, DEFAULT_TOL)?
                        .c_hat,
                )
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveragePoint {
    pub delta: f64,
    pub method: Method,
    pub coverage: f64,
    pub coverage_se: f64,
    /// `E[length] − max(Δ, 0)`.
    pub expected_excess_length: f64,
    pub length_se: f64,
}

/// One stream per block of [`BLOCK_SIZE`] replications, with stream ids `0..count`.
pub fn seeded_streams(seed: u64, count: usize) -> Vec<RngStream> {
    (0..count as u64)
        .map(|id| RngStream::new(seed, id))
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    /// Hits of `θ_L` (Δ >= 0) or of `θ*` (Δ < 0).
    hits_a: u64,
    /// Hits of `θ_U`; unused for Δ < 0.
    hits_b: u64,
    len_sum: f64,
    len_sq_sum: f64,
}

impl Tally {
    fn merge(&mut self, other: &Tally) {
        self.hits_a += other.hits_a;
        self.hits_b += other.hits_b;
        self.len_sum += other.len_sum;
        self.len_sq_sum += other.len_sq_sum;
    }
}

struct Kernel {
    rho: Correlation,
    c: f64,
    z: f64,
    ti: TiCriticals,
}

impl Kernel {
    fn interval(&self, method: Method, theta_l: f64, theta_u: f64) -> Interval {
        let (set, pseudo, _, _) =
            ma_parts(theta_l, theta_u, 1.0, 1.0, self.rho.get(), self.c, self.z);
        match method {
            Method::CiMa => set.hull(&pseudo),
            Method::CiTi => ti_interval(theta_l, theta_u, 1.0, 1.0, &self.ti),
            Method::CiTiUnion => ti_interval(theta_l, theta_u, 1.0, 1.0, &self.ti).hull(&pseudo),
        }
    }
}

fn run_block(config: &ExperimentConfig, kernel: &Kernel, block: u64) -> Vec<Tally> {
    let start = block * BLOCK_SIZE;
    let n = BLOCK_SIZE.min(config.replications - start) as usize;
    let mut stream = RngStream::new(config.seed, block);
    let draws = normal::sample_bivariate(config.rho, &mut stream, n);
    let mut tallies = vec![Tally::default(); config.delta_grid.len() * config.methods.len()];
    for (i, &delta) in config.delta_grid.iter().enumerate() {
        for (j, &method) in config.methods.iter().enumerate() {
            let t = &mut tallies[i * config.methods.len() + j];
            for &(z1, z2) in &draws {
                let ci = kernel.interval(method, z1, delta + z2);
                if delta >= 0.0 {
                    t.hits_a += ci.contains(0.0) as u64;
                    t.hits_b += ci.contains(delta) as u64;
                } else {
                    t.hits_a += ci.contains(0.5 * delta) as u64;
                }
                let len = ci.length();
                t.len_sum += len;
                t.len_sq_sum += len * len;
            }
        }
    }
    tallies
}

/// Coverage and expected excess length for every `(Δ, method)` pair, Δ-major.
///
/// For `Δ >= 0` coverage is the smaller of the rates at `θ_L` and `θ_U`; for
/// `Δ < 0` it is the rate at the pseudotrue value `Δ/2`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<CoveragePoint>> {
    config.validate()?;
    let kernel = Kernel {
        rho: config.rho,
        c: config.c_hat()?,
        z: normal::quantile(1.0 - config.alpha / 2.0),
        ti: TiCriticals::new(config.rho, config.alpha)?,
    };
    let blocks = config.replications.div_ceil(BLOCK_SIZE);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Diagnostic(format!("cannot start worker pool: {e}")))?;
    let per_block: Vec<Vec<Tally>> = pool.install(|| {
        (0..blocks)
            .into_par_iter()
            .map(|b| run_block(config, &kernel, b))
            .collect()
    });

    let mut total = vec![Tally::default(); config.delta_grid.len() * config.methods.len()];
    for block in &per_block {
        for (acc, t) in total.iter_mut().zip(block) {
            acc.merge(t);
        }
    }

    let b = config.replications as f64;
    let mut points = Vec::with_capacity(total.len());
    for (i, &delta) in config.delta_grid.iter().enumerate() {
        for (j, &method) in config.methods.iter().enumerate() {
            let t = &total[i * config.methods.len() + j];
            let hits = if delta >= 0.0 {
                t.hits_a.min(t.hits_b)
            } else {
                t.hits_a
            };
            let p = hits as f64 / b;
            let mean = t.len_sum / b;
            let var = (t.len_sq_sum / b - mean * mean).max(0.0);
            points.push(CoveragePoint {
                delta,
                method,
                coverage: p,
                coverage_se: (p * (1.0 - p) / b).sqrt(),
                expected_excess_length: mean - delta.max(0.0),
                length_se: (var / b).sqrt(),
            });
        }
    }
    Ok(points)
}

/// Exact `CI_MA` coverage on the experiment's design, computed by quadrature.
///
/// Uses the solved `ĉ` (with the known-zero shortcut when `ρ = 0`) unless
/// `c_override` is given.
pub fn quadrature_coverage_curve(
    rho: Correlation,
    alpha: f64,
    delta_grid: &[f64],
    c_override: Option<f64>,
) -> Result<Vec<(f64, f64)>> {
    let c = match c_override {
        Some(c) => c,
        None => solve_critical_value(rho, alpha, rho.get() == 0.0, DEFAULT_TOL)?.c_hat,
    };
    delta_grid
        .iter()
        .map(|&delta| {
            let at = |lambda: f64, delta: f64| {
                event_probability(&EventParams {
                    delta,
                    lambda,
                    c,
                    sigma_l: 1.0,
                    sigma_u: 1.0,
                    rho,
                    alpha,
                })
            };
            let cov = if delta >= 0.0 {
                at(0.0, delta)?.min(at(1.0, delta)?)
            } else {
                at(0.5, delta)?
            };
            Ok((delta, cov))
        })
        .collect()
}

/// CSV with columns `delta,method,coverage,coverage_se,excess_length,length_se`.
pub fn write_coverage_csv<W: Write>(points: &[CoveragePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "delta",
        "method",
        "coverage",
        "coverage_se",
        "excess_length",
        "length_se",
    ])?;
    for p in points {
        w.write_record([
            p.delta.to_string(),
            p.method.to_string(),
            p.coverage.to_string(),
            p.coverage_se.to_string(),
            p.expected_excess_length.to_string(),
            p.length_se.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
