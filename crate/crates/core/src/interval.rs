//! Interval construction: the bounds interval `CI_Θ`, the pseudotrue interval
//! `CI_θ*`, their union `CI_MA`, and the test-inversion baseline `CI_TI`.

use serde::{Deserialize, Serialize};

use crate::critical::{
    set_coverage_critical_value, solve_critical_value, CriticalValueCache, DEFAULT_TOL,
};
use crate::error::{domain, Error, Result};
use crate::normal::{self, bivariate_rect_prob, Correlation};

/// Standard errors below this are rejected as malformed input.
pub const MIN_SE: f64 = 1e-12;

/// Estimated bounds and their sampling uncertainty.
///
/// `se_l` and `se_u` are standard errors of the bound estimates (the sample
/// size is already absorbed). Inverted bounds (`theta_l_hat > theta_u_hat`)
/// are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceProblem {
    pub theta_l_hat: f64,
    pub theta_u_hat: f64,
    pub se_l: f64,
    pub se_u: f64,
    pub rho_hat: Correlation,
    pub alpha: f64,
    /// The correlation is known to be exactly zero (not merely estimated as zero).
    pub rho_known_zero: bool,
    pub label: String,
}

impl InferenceProblem {
    pub fn new(
        theta_l_hat: f64,
        theta_u_hat: f64,
        se_l: f64,
        se_u: f64,
        rho_hat: Correlation,
        alpha: f64,
    ) -> Self {
        InferenceProblem {
            theta_l_hat,
            theta_u_hat,
            se_l,
            se_u,
            rho_hat,
            alpha,
            rho_known_zero: false,
            label: String::new(),
        }
    }

    pub fn with_known_zero(mut self, known: bool) -> Self {
        self.rho_known_zero = known;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta_l_hat.is_finite() || !self.theta_u_hat.is_finite() {
            return Err(domain("bound estimates must be finite"));
        }
        for (name, se) in [("se_L", self.se_l), ("se_U", self.se_u)] {
            if !(se >= MIN_SE) || !se.is_finite() {
                return Err(domain(format!("nonpositive standard error: {name} = {se}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::UnsupportedLevel(self.alpha));
        }
        if self.rho_known_zero && self.rho_hat.get() != 0.0 {
            return Err(domain(format!(
                "rho is flagged as known to be zero but rho = {}",
                self.rho_hat.get()
            )));
        }
        Ok(())
    }

    /// `θ̂_U − θ̂_L`.
    pub fn delta_hat(&self) -> f64 {
        self.theta_u_hat - self.theta_l_hat
    }
}

/// A closed interval, or an empty one whose `lower > upper` records the crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub empty: bool,
}

impl Interval {
    /// `[lower, upper]`, flagged empty when the endpoints cross.
    pub fn new(lower: f64, upper: f64) -> Self {
        Interval {
            lower,
            upper,
            empty: lower > upper,
        }
    }

    pub fn length(&self) -> f64 {
        if self.empty {
            0.0
        } else {
            self.upper - self.lower
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        !self.empty && self.lower <= x && x <= self.upper
    }

    /// Whether `other` lies inside `self`, up to `slack` at each end.
    pub fn covers(&self, other: &Interval, slack: f64) -> bool {
        other.empty
            || (!self.empty
                && self.lower <= other.lower + slack
                && other.upper <= self.upper + slack)
    }

    /// Smallest interval containing both; used only where the union is known to be connected.
    pub fn hull(&self, other: &Interval) -> Interval {
        match (self.empty, other.empty) {
            (true, _) => *other,
            (_, true) => *self,
            _ => Interval::new(self.lower.min(other.lower), self.upper.max(other.upper)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageMode {
    PointCoverage,
    /// Bonferroni critical value for covering the whole identified set.
    SetCoverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub ci_ma: Interval,
    pub ci_theta_set: Interval,
    pub ci_pseudo: Interval,
    pub theta_star_hat: f64,
    pub sigma_star_se: f64,
    pub c_hat: f64,
    pub mode: CoverageMode,
}

fn check_sigmas(sigma_l: f64, sigma_u: f64) -> Result<()> {
    if !(sigma_l > 0.0 && sigma_u > 0.0) {
        return Err(domain(format!(
            "nonpositive standard deviation: ({sigma_l}, {sigma_u})"
        )));
    }
    Ok(())
}

/// `(σ_U θ_L + σ_L θ_U)/(σ_L + σ_U)`.
pub fn pseudo_true(theta_l: f64, theta_u: f64, sigma_l: f64, sigma_u: f64) -> Result<f64> {
    check_sigmas(sigma_l, sigma_u)?;
    Ok(pseudo_true_unchecked(theta_l, theta_u, sigma_l, sigma_u))
}

fn pseudo_true_unchecked(theta_l: f64, theta_u: f64, sigma_l: f64, sigma_u: f64) -> f64 {
    let w = sigma_l / (sigma_l + sigma_u);
    theta_l + w * (theta_u - theta_l)
}

/// `σ_Lσ_U√(2+2ρ)/(σ_L+σ_U)`.
pub fn sigma_star(sigma_l: f64, sigma_u: f64, rho: Correlation) -> Result<f64> {
    check_sigmas(sigma_l, sigma_u)?;
    Ok(sigma_star_unchecked(sigma_l, sigma_u, rho.get()))
}

fn sigma_star_unchecked(sigma_l: f64, sigma_u: f64, rho: f64) -> f64 {
    sigma_l * sigma_u * (2.0 + 2.0 * rho).max(0.0).sqrt() / (sigma_l + sigma_u)
}

/// The pieces of `CI_MA` for given bounds, standard errors and critical values.
/// `z_two_sided` is `Φ⁻¹(1−α/2)`.
pub(crate) fn ma_parts(
    theta_l: f64,
    theta_u: f64,
    se_l: f64,
    se_u: f64,
    rho: f64,
    c: f64,
    z_two_sided: f64,
) -> (Interval, Interval, f64, f64) {
    let set = Interval::new(theta_l - se_l * c, theta_u + se_u * c);
    let center = pseudo_true_unchecked(theta_l, theta_u, se_l, se_u);
    let s = sigma_star_unchecked(se_l, se_u, rho);
    let pseudo = Interval::new(center - s * z_two_sided, center + s * z_two_sided);
    (set, pseudo, center, s)
}

/// Builds `CI_MA`, solving for `ĉ` unless `c_override` is given.
pub fn build_ci_ma(problem: &InferenceProblem, c_override: Option<f64>) -> Result<IntervalReport> {
    build_ci_ma_with(problem, c_override, CoverageMode::PointCoverage, None)
}

/// Like [`build_ci_ma`], with a coverage mode and an optional shared cache of critical values.
pub fn build_ci_ma_with(
    problem: &InferenceProblem,
    c_override: Option<f64>,
    mode: CoverageMode,
    cache: Option<&CriticalValueCache>,
) -> Result<IntervalReport> {
    problem.validate()?;
    let c_hat = match (c_override, mode) {
        (Some(c), _) => {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(domain(format!(
                    "critical value override must be finite and >= 0, got {c}"
                )));
            }
            c
        }
        (None, CoverageMode::SetCoverage) => set_coverage_critical_value(problem.alpha)?,
        (None, CoverageMode::PointCoverage) => {
            let solved = match cache {
                Some(cache) => cache.get(problem.rho_hat, problem.alpha, problem.rho_known_zero)?,
                None => solve_critical_value(
                    problem.rho_hat,
                    problem.alpha,
                    problem.rho_known_zero,
                    DEFAULT_TOL,
                )?,
            };
            solved.c_hat
        }
    };
    let z = normal::quantile(1.0 - problem.alpha / 2.0);
    let (set, pseudo, center, s) = ma_parts(
        problem.theta_l_hat,
        problem.theta_u_hat,
        problem.se_l,
        problem.se_u,
        problem.rho_hat.get(),
        c_hat,
        z,
    );
    // when CI_Θ is nonempty it contains θ̂*, so the hull is the union
    debug_assert!(
        set.empty
            || (set.lower <= center + 1e-9 * (1.0 + center.abs())
                && center <= set.upper + 1e-9 * (1.0 + center.abs()))
    );
    Ok(IntervalReport {
        ci_ma: set.hull(&pseudo),
        ci_theta_set: set,
        ci_pseudo: pseudo,
        theta_star_hat: center,
        sigma_star_se: s,
        c_hat,
        mode,
    })
}

/// Critical values of the test-inversion recipe at `(ρ, α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiCriticals {
    /// Pre-test bound `Φ⁻¹(1 − 0.1α)`: a constraint with standardized slack above this is dropped.
    pub kappa: f64,
    /// One retained constraint: `Φ⁻¹(1 − 0.9α)`.
    pub c1: f64,
    /// Both retained: the `(1 − 0.9α)` quantile of `max(Z1, −Z2)`.
    pub c2: f64,
}

impl TiCriticals {
    pub fn new(rho: Correlation, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::UnsupportedLevel(alpha));
        }
        let target = 1.0 - 0.9 * alpha;
        let c1 = normal::quantile(target);
        // P(Z1 <= c, Z2 >= -c) increases in c; Bonferroni brackets the root from above
        let mut lo = c1;
        let mut hi = normal::quantile(1.0 - 0.45 * alpha);
        for _ in 0..200 {
            if hi - lo <= 1e-13 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if bivariate_rect_prob(mid, -mid, rho) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(TiCriticals {
            kappa: normal::quantile(1.0 - 0.1 * alpha),
            c1,
            c2: hi,
        })
    }
}

/// Whether the test-inversion procedure accepts `θ`.
pub(crate) fn ti_accepts(
    theta: f64,
    theta_l: f64,
    theta_u: f64,
    se_l: f64,
    se_u: f64,
    k: &TiCriticals,
) -> bool {
    let slack_l = (theta - theta_l) / se_l;
    let slack_u = (theta_u - theta) / se_u;
    match (slack_l <= k.kappa, slack_u <= k.kappa) {
        (true, true) => slack_l >= -k.c2 && slack_u >= -k.c2,
        (true, false) => slack_l >= -k.c1,
        (false, true) => slack_u >= -k.c1,
        (false, false) => true,
    }
}

/// Exact accepted set of the test-inversion procedure.
///
/// The accepted set is a union of at most four intervals, one per pattern of
/// retained constraints; these always overlap, so the result is their hull.
pub(crate) fn ti_interval(
    theta_l: f64,
    theta_u: f64,
    se_l: f64,
    se_u: f64,
    k: &TiCriticals,
) -> Interval {
    let t_l = theta_l + k.kappa * se_l;
    let t_u = theta_u - k.kappa * se_u;
    let pieces = [
        // both constraints retained
        Interval::new(
            t_u.max(theta_l - k.c2 * se_l),
            t_l.min(theta_u + k.c2 * se_u),
        ),
        // only the lower constraint
        Interval::new(theta_l - k.c1 * se_l, t_l.min(t_u)),
        // only the upper constraint
        Interval::new(t_l.max(t_u), theta_u + k.c1 * se_u),
        // neither
        Interval::new(t_l, t_u),
    ];
    let hull = pieces
        .iter()
        .fold(Interval::new(f64::INFINITY, f64::NEG_INFINITY), |acc, p| {
            acc.hull(p)
        });
    if hull.empty {
        // report the crossing of the both-retained region for diagnostics
        return Interval {
            lower: theta_l - k.c2 * se_l,
            upper: theta_u + k.c2 * se_u,
            empty: true,
        };
    }
    hull
}

/// `CI_TI` by exact inversion.
pub fn ci_ti(problem: &InferenceProblem) -> Result<Interval> {
    problem.validate()?;
    let k = TiCriticals::new(problem.rho_hat, problem.alpha)?;
    Ok(ti_interval(
        problem.theta_l_hat,
        problem.theta_u_hat,
        problem.se_l,
        problem.se_u,
        &k,
    ))
}

/// An equally spaced θ grid for [`build_ci_ti`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl ThetaGrid {
    /// Spans both estimates plus ten of the larger standard error on each side,
    /// at a step of `min(se)/50`.
    pub fn for_problem(problem: &InferenceProblem) -> ThetaGrid {
        let wide = problem.se_l.max(problem.se_u);
        ThetaGrid {
            lo: problem.theta_l_hat.min(problem.theta_u_hat) - 10.0 * wide,
            hi: problem.theta_l_hat.max(problem.theta_u_hat) + 10.0 * wide,
            step: problem.se_l.min(problem.se_u) / 50.0,
        }
    }

    fn validate_for(&self, problem: &InferenceProblem) -> Result<()> {
        let center = pseudo_true_unchecked(
            problem.theta_l_hat,
            problem.theta_u_hat,
            problem.se_l,
            problem.se_u,
        );
        let wide = problem.se_l.max(problem.se_u);
        let tol = 1e-9 * (1.0 + center.abs() + wide);
        if !(self.step > 0.0)
            || self.lo > center - 10.0 * wide + tol
            || self.hi < center + 10.0 * wide - tol
        {
            return Err(domain(format!(
                "θ grid [{}, {}] must cover θ̂* ± 10·max(se) = [{}, {}]",
                self.lo,
                self.hi,
                center - 10.0 * wide,
                center + 10.0 * wide
            )));
        }
        if self.step > problem.se_l.min(problem.se_u) / 50.0 * (1.0 + 1e-12) {
            return Err(domain(format!(
                "θ grid step {} exceeds min(se)/50",
                self.step
            )));
        }
        Ok(())
    }
}

/// `CI_TI` by testing every point of a θ grid.
///
/// The endpoints are the extreme accepted grid points, so they are accurate to
/// one grid step. Fails if the accepted points are not contiguous.
pub fn build_ci_ti(problem: &InferenceProblem, grid: ThetaGrid) -> Result<Interval> {
    problem.validate()?;
    grid.validate_for(problem)?;
    let k = TiCriticals::new(problem.rho_hat, problem.alpha)?;
    let n = ((grid.hi - grid.lo) / grid.step).floor() as usize;
    let mut first = None;
    let mut last = None;
    let mut gap = false;
    for i in 0..=n {
        let theta = grid.lo + i as f64 * grid.step;
        let ok = ti_accepts(
            theta,
            problem.theta_l_hat,
            problem.theta_u_hat,
            problem.se_l,
            problem.se_u,
            &k,
        );
        if ok {
            if last.is_some_and(|j| j + 1 != i) {
                gap = true;
            }
            first.get_or_insert(i);
            last = Some(i);
        }
    }
    if gap {
        return Err(Error::Diagnostic(
            "test-inversion acceptance region is not contiguous".into(),
        ));
    }
    Ok(match (first, last) {
        (Some(a), Some(b)) => Interval::new(
            grid.lo + a as f64 * grid.step,
            grid.lo + b as f64 * grid.step,
        ),
        _ => Interval {
            lower: problem.theta_l_hat - k.c2 * problem.se_l,
            upper: problem.theta_u_hat + k.c2 * problem.se_u,
            empty: true,
        },
    })
}

fn pseudo_interval(problem: &InferenceProblem) -> Interval {
    let z = normal::quantile(1.0 - problem.alpha / 2.0);
    let center = pseudo_true_unchecked(
        problem.theta_l_hat,
        problem.theta_u_hat,
        problem.se_l,
        problem.se_u,
    );
    let s = sigma_star_unchecked(problem.se_l, problem.se_u, problem.rho_hat.get());
    Interval::new(center - s * z, center + s * z)
}

/// `CI_TI ∪ CI_θ*` on a θ grid. A nonempty `CI_TI` always contains `θ̂*`, so
/// the union is an interval.
pub fn build_ci_ti_union(problem: &InferenceProblem, grid: ThetaGrid) -> Result<Interval> {
    let ti = build_ci_ti(problem, grid)?;
    Ok(ti.hull(&pseudo_interval(problem)))
}

/// `CI_TI ∪ CI_θ*` with the exact `CI_TI`.
pub fn ci_ti_union(problem: &InferenceProblem) -> Result<Interval> {
    let ti = ci_ti(problem)?;
    Ok(ti.hull(&pseudo_interval(problem)))
}

/// Ratio of excess lengths `(|a| − Δ̂⁺)/(|b| − Δ̂⁺)`.
pub fn relative_excess_length(ci_a: &Interval, ci_b: &Interval, delta_hat: f64) -> Result<f64> {
    if ci_a.empty || ci_b.empty {
        return Err(Error::Diagnostic(
            "relative excess length of an empty interval".into(),
        ));
    }
    let d = delta_hat.max(0.0);
    let den = ci_b.length() - d;
    if !(den > 0.0) {
        return Err(Error::Diagnostic(format!(
            "nonpositive excess length {den} in the denominator"
        )));
    }
    Ok((ci_a.length() - d) / den)
}
