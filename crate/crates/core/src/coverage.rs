//! Deterministic coverage probabilities of the adaptive interval.
//!
//! For a true value `θ = λ·θ_U + (1 − λ)·θ_L` in an identified set of length `Δ`,
//! the interval covers `θ` exactly on the event `E = A ∪ B` with
//!
//! ```text
//! A = { Z1 − (λ/σ_L)Δ ≤ c  and  Z2 + ((1−λ)/σ_U)Δ ≥ −c }
//! B = { |Z1 + Z2 + ((1−λ)/σ_U − λ/σ_L)Δ| ≤ √(2+2ρ)·Φ⁻¹(1−α/2) }
//! ```
//!
//! where `(Z1, Z2)` are standard normal with correlation `ρ`. We evaluate
//! `P(A) + P(B) − P(A ∩ B)`. In the rotated coordinates `X1 = (Z1+Z2)/√2`,
//! `X2 = (Z2−Z1)/√2` (independent, variances `1+ρ` and `1−ρ`), `B` is a slab in
//! `X1` and `A` is a half-plane condition on `X2` given `X1`, so `P(A ∩ B)` is a
//! one-dimensional integral of a normal tail.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::normal::{self, bivariate_rect_prob, Correlation};
use crate::quadrature::integrate_with_breaks;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const QUAD_TOL: f64 = 1e-11;
const TRUNCATION_SDS: f64 = 8.5;

/// Parameters of the coverage event for one `(Δ, λ, c)` configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventParams {
    /// Length `θ_U − θ_L` of the identified set. Negative values describe
    /// crossing bounds; the event formula remains valid.
    pub delta: f64,
    /// Position of the true value inside the identified set.
    pub lambda: f64,
    /// Critical value applied to the bound estimates.
    pub c: f64,
    pub sigma_l: f64,
    pub sigma_u: f64,
    pub rho: Correlation,
    pub alpha: f64,
}

impl EventParams {
    /// The standardized event used by the critical-value equation: `λ = 1`, `σ_L = σ_U = 1`.
    pub fn standardized(delta: f64, c: f64, rho: Correlation, alpha: f64) -> Self {
        EventParams {
            delta,
            lambda: 1.0,
            c,
            sigma_l: 1.0,
            sigma_u: 1.0,
            rho,
            alpha,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_l > 0.0 && self.sigma_u > 0.0)
            || !self.sigma_l.is_finite()
            || !self.sigma_u.is_finite()
        {
            return Err(domain(format!(
                "standard deviations must be positive and finite, got ({}, {})",
                self.sigma_l, self.sigma_u
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(domain(format!(
                "lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(domain(format!(
                "critical value must be finite and >= 0, got {}",
                self.c
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(domain(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !self.delta.is_finite() {
            return Err(domain(format!("delta must be finite, got {}", self.delta)));
        }
        Ok(())
    }

    /// Two-sided half-width in units of `Z1 + Z2`: `√(2+2ρ)·Φ⁻¹(1−α/2)`.
    pub fn gamma_rho(&self) -> f64 {
        (2.0 + 2.0 * self.rho.get()).max(0.0).sqrt() * normal::quantile(1.0 - self.alpha / 2.0)
    }

    /// Mixture weight `σ_L/(σ_L+σ_U)` that locates the pseudotrue value.
    pub fn lambda_star(&self) -> f64 {
        self.sigma_l / (self.sigma_l + self.sigma_u)
    }

    /// `β` such that `Δ = σ_Lσ_U·β / (λσ_U + (1−λ)σ_L)`.
    pub fn beta(&self) -> f64 {
        self.delta * (self.lambda * self.sigma_u + (1.0 - self.lambda) * self.sigma_l)
            / (self.sigma_l * self.sigma_u)
    }
}

/// `Pr(E_{Δ,λ,c})`. Absolute error is below `1e-9` in practice.
pub fn event_probability(params: &EventParams) -> Result<f64> {
    params.validate()?;
    Ok(event_probability_unchecked(params))
}

pub(crate) fn event_probability_unchecked(p: &EventParams) -> f64 {
    let a1 = p.lambda / p.sigma_l;
    let a2 = (1.0 - p.lambda) / p.sigma_u;
    // A = {Z1 <= u, Z2 >= -v}; B = {|Z1 + Z2 + m| <= γ_ρ}
    let u = p.c + a1 * p.delta;
    let v = p.c + a2 * p.delta;
    let m = (a2 - a1) * p.delta;
    let q = normal::quantile(1.0 - p.alpha / 2.0);

    if p.rho.is_perfect_positive() {
        // Z1 = Z2 = Z: A = [-v, u], B = [-q - m/2, q - m/2]
        return union_of_intervals_prob((-v, u), (-q - 0.5 * m, q - 0.5 * m));
    }
    if p.rho.is_perfect_negative() {
        // Z2 = -Z1: B has probability one when m = 0 and zero otherwise
        return if m == 0.0 { 1.0 } else { normal::cdf(u.min(v)) };
    }

    let r = p.rho.get();
    let p_a = bivariate_rect_prob(u, -v, p.rho);

    let s = (2.0 + 2.0 * r).sqrt();
    let p_b = (normal::cdf(q - m / s) - normal::cdf(-q - m / s)).max(0.0);

    // B in X1 coordinates
    let gamma = s * q;
    let sd1 = (1.0 + r).sqrt();
    let sd2 = (1.0 - r).sqrt();
    let lo = ((-gamma - m) / SQRT_2).max(-TRUNCATION_SDS * sd1);
    let hi = ((gamma - m) / SQRT_2).min(TRUNCATION_SDS * sd1);
    let p_ab = if lo < hi {
        let (ru, rv) = (SQRT_2 * u, SQRT_2 * v);
        let integrand = |x: f64| {
            let threshold = (x - ru).max(-x - rv);
            normal::pdf(x / sd1) / sd1 * normal::sf(threshold / sd2)
        };
        let breaks = [(u - v) / SQRT_2, ru, -rv, 0.0];
        integrate_with_breaks(integrand, lo, hi, &breaks, QUAD_TOL)
    } else {
        0.0
    };

    (p_a + p_b - p_ab).clamp(0.0, 1.0)
}

fn union_of_intervals_prob(a: (f64, f64), b: (f64, f64)) -> f64 {
    let mass = |(lo, hi): (f64, f64)| {
        if hi > lo {
            normal::cdf(hi) - normal::cdf(lo)
        } else {
            0.0
        }
    };
    let overlap = (a.0.max(b.0), a.1.min(b.1));
    (mass(a) + mass(b) - mass(overlap)).clamp(0.0, 1.0)
}

/// Coverage of the standardized event (λ = 1, σ_L = σ_U = 1) whose infimum over
/// `Δ >= 0` defines the critical value.
pub fn ci_coverage_objective(delta: f64, c: f64, rho: Correlation, alpha: f64) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(domain(format!("delta must be >= 0, got {delta}")));
    }
    event_probability(&EventParams::standardized(delta, c, rho, alpha))
}

/// Limit of [`ci_coverage_objective`] as `Δ → ∞`: the first branch degenerates
/// to `{Z2 >= −c}` and the second vanishes, leaving `Φ(c)` for every `ρ`.
pub fn tail_limit_coverage(c: f64, _rho: Correlation) -> f64 {
    normal::cdf(c)
}

/// Δ grid `0, step, 2·step, …, max_delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub max_delta: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            max_delta: 20.0,
            step: 0.005,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_delta > 0.0 && self.step > 0.0 && self.max_delta.is_finite()) {
            return Err(domain(format!(
                "grid needs max_delta > 0 and step > 0, got ({}, {})",
                self.max_delta, self.step
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let n = (self.max_delta / self.step + 1e-9).floor() as usize;
        let mut pts: Vec<f64> = (0..=n).map(|k| k as f64 * self.step).collect();
        if pts
            .last()
            .is_some_and(|&last| self.max_delta - last > 1e-12)
        {
            pts.push(self.max_delta);
        }
        pts
    }

    /// The same grid stretched by `factor`.
    pub fn scaled(&self, factor: f64) -> GridSpec {
        GridSpec {
            max_delta: self.max_delta * factor,
            step: self.step * factor,
        }
    }
}

/// Where the infimum over `Δ` is attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaLocation {
    Finite(f64),
    /// Attained only in the limit `Δ → ∞`.
    Infinity,
}

impl DeltaLocation {
    pub fn as_f64(self) -> f64 {
        match self {
            DeltaLocation::Finite(d) => d,
            DeltaLocation::Infinity => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, DeltaLocation::Finite(_))
    }
}

impl std::fmt::Display for DeltaLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeltaLocation::Finite(d) => write!(f, "{d}"),
            DeltaLocation::Infinity => f.write_str("+inf"),
        }
    }
}

/// Coverage as a function of `Δ` together with its infimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaProfile {
    pub grid: Vec<(f64, f64)>,
    pub tail_limit: f64,
    pub infimum: f64,
    pub argmin_delta: DeltaLocation,
}

impl DeltaProfile {
    fn from_grid(grid: Vec<(f64, f64)>, tail_limit: f64) -> Self {
        let (mut infimum, mut argmin) = (tail_limit, DeltaLocation::Infinity);
        for &(d, p) in &grid {
            if p < infimum {
                infimum = p;
                argmin = DeltaLocation::Finite(d);
            }
        }
        DeltaProfile {
            grid,
            tail_limit,
            infimum,
            argmin_delta: argmin,
        }
    }

    /// Smallest coverage on the grid, ignoring the tail limit.
    pub fn grid_min(&self) -> f64 {
        self.grid
            .iter()
            .map(|&(_, p)| p)
            .fold(f64::INFINITY, f64::min)
    }

    /// Writes `delta,coverage` rows with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["delta", "coverage"])?;
        for &(d, p) in &self.grid {
            w.write_record([d.to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Standardized coverage over a Δ grid plus the analytic tail.
pub fn delta_profile(c: f64, rho: Correlation, alpha: f64, grid: GridSpec) -> Result<DeltaProfile> {
    event_delta_profile(&EventParams::standardized(0.0, c, rho, alpha), grid)
}

/// Δ-profile of a general event; `template.delta` is ignored.
pub fn event_delta_profile(template: &EventParams, grid: GridSpec) -> Result<DeltaProfile> {
    template.validate()?;
    grid.validate()?;
    let values = grid
        .points()
        .into_par_iter()
        .map(|delta| {
            let params = EventParams { delta, ..*template };
            (delta, event_probability_unchecked(&params))
        })
        .collect();
    Ok(DeltaProfile::from_grid(values, event_tail_limit(template)))
}

fn event_tail_limit(p: &EventParams) -> f64 {
    if p.lambda == 0.0 || p.lambda == 1.0 {
        normal::cdf(p.c)
    } else {
        // both bound constraints become slack
        1.0
    }
}

/// The two pieces of `d/dΔ` of the standardized coverage at `ρ = 0`, with
/// `gamma = √2·Φ⁻¹(1−α/2)`. Returns `(A, B)`; `A + B` is the derivative.
///
/// `A` collects the two Gaussian convolution integrals over `z2`; each equals
/// `φ((±γ+Δ)/√2)·Φ((γ−Δ−2c)/√2)/√2` (the substitution `t = (2z2−γ−Δ)/√2` has
/// Jacobian `1/√2`).
pub fn derivative_terms(delta: f64, c: f64, gamma: f64) -> (f64, f64) {
    let a = std::f64::consts::FRAC_1_SQRT_2
        * (normal::pdf((gamma + delta) / SQRT_2) - normal::pdf((-gamma + delta) / SQRT_2))
        * normal::cdf((gamma - delta - 2.0 * c) / SQRT_2);
    let b = normal::pdf(delta + c) * normal::cdf(c - gamma);
    (a, b)
}

/// Coverage along `λ` with `Δ = σ_Lσ_U·β / (λσ_U + (1−λ)σ_L)` held on the
/// constraint curve for a fixed `β`.
pub fn lambda_profile(
    beta: f64,
    c: f64,
    sigma_l: f64,
    sigma_u: f64,
    rho: Correlation,
    alpha: f64,
    lambda_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if !(beta >= 0.0) {
        return Err(domain(format!("beta must be >= 0, got {beta}")));
    }
    lambda_grid
        .iter()
        .map(|&lambda| {
            let delta = sigma_l * sigma_u * beta / (lambda * sigma_u + (1.0 - lambda) * sigma_l);
            let params = EventParams {
                delta,
                lambda,
                c,
                sigma_l,
                sigma_u,
                rho,
                alpha,
            };
            event_probability(&params).map(|p| (lambda, p))
        })
        .collect()
}
