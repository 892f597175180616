//! File formats: problem files, the bundled Table 2 fixture, interval reports,
//! and key=value simulation configs.
//!
//! All tables are headered, comma-separated UTF-8 with `.` decimals. Lines that
//! start with `#` are comments.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::critical::CriticalValueCache;
use crate::error::{domain, Error, Result};
use crate::interval::{
    build_ci_ma_with, ci_ti, relative_excess_length, CoverageMode, InferenceProblem, Interval,
    IntervalReport,
};
use crate::mc::{default_delta_grid, ExperimentConfig, Method, DEFAULT_REPLICATIONS};
use crate::normal::{self, Correlation};

/// The Table 2 fixture as shipped with the crate.
pub const TABLE2_CSV: &str = include_str!("../data/table2.csv");

/// One row of a problem file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFileRow {
    pub label: String,
    #[serde(rename = "theta_L")]
    pub theta_l: f64,
    #[serde(rename = "theta_U")]
    pub theta_u: f64,
    #[serde(rename = "se_L")]
    pub se_l: f64,
    #[serde(rename = "se_U")]
    pub se_u: f64,
    pub rho: f64,
    pub alpha: f64,
    pub rho_known_zero: u8,
}

impl ProblemFileRow {
    pub fn into_problem(self) -> Result<InferenceProblem> {
        let known = match self.rho_known_zero {
            0 => false,
            1 => true,
            other => {
                return Err(domain(format!(
                    "rho_known_zero must be 0 or 1, got {other}"
                )))
            }
        };
        let problem = InferenceProblem::new(
            self.theta_l,
            self.theta_u,
            self.se_l,
            self.se_u,
            Correlation::new(self.rho)?,
            self.alpha,
        )
        .with_known_zero(known)
        .with_label(self.label);
        problem.validate()?;
        Ok(problem)
    }
}

impl From<&InferenceProblem> for ProblemFileRow {
    fn from(p: &InferenceProblem) -> Self {
        ProblemFileRow {
            label: p.label.clone(),
            theta_l: p.theta_l_hat,
            theta_u: p.theta_u_hat,
            se_l: p.se_l,
            se_u: p.se_u,
            rho: p.rho_hat.get(),
            alpha: p.alpha,
            rho_known_zero: p.rho_known_zero as u8,
        }
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn row_error(line: Option<u64>, err: impl std::fmt::Display) -> Error {
    Error::Row {
        line: line.unwrap_or(0) as usize,
        message: err.to_string(),
    }
}

/// Parses a problem file. Each data row yields either a problem or an
/// [`Error::Row`] carrying its line number; a bad header fails the whole file.
pub fn read_problems<R: Read>(input: R) -> Result<Vec<Result<InferenceProblem>>> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let expected = [
        "label",
        "theta_L",
        "theta_U",
        "se_L",
        "se_U",
        "rho",
        "alpha",
        "rho_known_zero",
    ];
    if headers.iter().ne(expected) {
        return Err(Error::Row {
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line());
                out.push(Err(row_error(line, e)));
                continue;
            }
        };
        let line = record.position().map(|p| p.line());
        let parsed = record
            .deserialize::<ProblemFileRow>(Some(&headers))
            .map_err(|e| row_error(line, e))
            .and_then(|row| row.into_problem().map_err(|e| row_error(line, e)));
        out.push(parsed);
    }
    Ok(out)
}

pub fn write_problems<W: Write>(problems: &[InferenceProblem], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in problems {
        w.serialize(ProblemFileRow::from(p))?;
    }
    w.flush()?;
    Ok(())
}

/// One printed row of Table 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table2Row {
    pub game: String,
    pub theta_l_hat: f64,
    pub theta_u_hat: f64,
    pub ci_ma_lo: f64,
    pub ci_ma_hi: f64,
    pub ci_ti_lo: f64,
    pub ci_ti_hi: f64,
    pub rel_length: f64,
    #[serde(deserialize_with = "flag", serialize_with = "write_flag")]
    pub inverted: bool,
    #[serde(deserialize_with = "flag", serialize_with = "write_flag")]
    pub short: bool,
}

fn flag<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    match u8::deserialize(d)? {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(serde::de::Error::custom(format!(
            "flag must be 0 or 1, got {other}"
        ))),
    }
}

fn write_flag<S: serde::Serializer>(v: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u8(*v as u8)
}

pub fn read_table2<R: Read>(input: R) -> Result<Vec<Table2Row>> {
    let mut rdr = reader(input);
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row.map_err(|e: csv::Error| row_error(e.position().map(|p| p.line()), e))?);
    }
    Ok(rows)
}

pub fn bundled_table2() -> Vec<Table2Row> {
    read_table2(TABLE2_CSV.as_bytes()).expect("bundled Table 2 fixture parses")
}

/// Which component of `CI_MA` supplies each endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackoutCase {
    /// Both endpoints come from the bounds interval.
    SetSet,
    /// Lower from the bounds interval, upper from the pseudotrue interval.
    SetPseudo,
    PseudoSet,
    PseudoPseudo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Backout {
    pub row: Table2Row,
    /// `None` when no pair of standard errors in `[1e-6, 10]` reproduces the row.
    pub problem: Option<InferenceProblem>,
    pub case: Option<BackoutCase>,
    /// Largest endpoint discrepancy after rebuilding `CI_MA`.
    pub max_error: f64,
}

pub const BACKOUT_ALPHA: f64 = 0.05;
pub const BACKOUT_TOL: f64 = 0.001;
const SE_MIN: f64 = 1e-6;
const SE_MAX: f64 = 10.0;

fn ma_endpoints(tl: f64, tu: f64, sl: f64, su: f64, c: f64, z: f64) -> (f64, f64) {
    let set = Interval::new(tl - c * sl, tu + c * su);
    let w = sl / (sl + su);
    let center = tl + w * (tu - tl);
    let half = z * sl * su * std::f64::consts::SQRT_2 / (sl + su);
    let pseudo = Interval::new(center - half, center + half);
    let ma = set.hull(&pseudo);
    (ma.lower, ma.upper)
}

/// Roots of `f` on `[SE_MIN, SE_MAX]` found by a log-spaced scan and bisection.
fn scan_roots(f: impl Fn(f64) -> f64) -> Vec<f64> {
    const POINTS: usize = 4000;
    let ratio = (SE_MAX / SE_MIN).ln();
    let at = |i: usize| SE_MIN * (ratio * i as f64 / POINTS as f64).exp();
    let mut roots = Vec::new();
    let mut prev = (at(0), f(at(0)));
    for i in 1..=POINTS {
        let x = at(i);
        let fx = f(x);
        if prev.1 == 0.0 {
            roots.push(prev.0);
        } else if prev.1.signum() != fx.signum() && fx.is_finite() && prev.1.is_finite() {
            let (mut lo, mut hi, flo) = (prev.0, x, prev.1);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (f(mid) > 0.0) == (flo > 0.0) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        prev = (x, fx);
    }
    roots
}

/// Recovers `(se_L, se_U)` for one Table 2 row from its printed `CI_MA`,
/// taking `ρ = 0` as known and `α = .05`.
///
/// Each assignment of endpoints to interval components gives a system that is
/// closed form or one-dimensional; every candidate is rebuilt and the one that
/// reproduces the printed endpoints best is kept.
pub fn backout_row(row: &Table2Row) -> Backout {
    let c = normal::quantile(1.0 - BACKOUT_ALPHA);
    let z = normal::quantile(1.0 - BACKOUT_ALPHA / 2.0);
    let (tl, tu, lo, hi) = (row.theta_l_hat, row.theta_u_hat, row.ci_ma_lo, row.ci_ma_hi);
    let mut candidates: Vec<(BackoutCase, f64, f64)> = Vec::new();

    let sl_set = (tl - lo) / c;
    let su_set = (hi - tu) / c;
    candidates.push((BackoutCase::SetSet, sl_set, su_set));

    // both endpoints from θ̂* ± z·σ*: midpoint fixes the weight, half-width the scale
    if tu != tl {
        let w = ((lo + hi) / 2.0 - tl) / (tu - tl);
        if w > 0.0 && w < 1.0 {
            let sigma = (hi - lo) / (2.0 * z);
            let su = sigma / (std::f64::consts::SQRT_2 * w);
            let sl = w * su / (1.0 - w);
            candidates.push((BackoutCase::PseudoPseudo, sl, su));
        }
    }

    if sl_set > 0.0 {
        for su in scan_roots(|su| ma_pseudo_hi(tl, tu, sl_set, su, z) - hi) {
            candidates.push((BackoutCase::SetPseudo, sl_set, su));
        }
    }
    if su_set > 0.0 {
        for sl in scan_roots(|sl| ma_pseudo_lo(tl, tu, sl, su_set, z) - lo) {
            candidates.push((BackoutCase::PseudoSet, sl, su_set));
        }
    }

    let best = candidates
        .into_iter()
        .filter(|&(_, sl, su)| (SE_MIN..=SE_MAX).contains(&sl) && (SE_MIN..=SE_MAX).contains(&su))
        .map(|(case, sl, su)| {
            let (a, b) = ma_endpoints(tl, tu, sl, su, c, z);
            (case, sl, su, (a - lo).abs().max((b - hi).abs()))
        })
        .min_by(|x, y| x.3.total_cmp(&y.3));

    match best {
        Some((case, sl, su, err)) if err <= BACKOUT_TOL => Backout {
            row: row.clone(),
            problem: Some(
                InferenceProblem::new(tl, tu, sl, su, Correlation::ZERO, BACKOUT_ALPHA)
                    .with_known_zero(true)
                    .with_label(row.game.clone()),
            ),
            case: Some(case),
            max_error: err,
        },
        other => Backout {
            row: row.clone(),
            problem: None,
            case: None,
            max_error: other.map_or(f64::INFINITY, |b| b.3),
        },
    }
}

fn ma_pseudo_hi(tl: f64, tu: f64, sl: f64, su: f64, z: f64) -> f64 {
    tl + sl / (sl + su) * (tu - tl) + z * sl * su * std::f64::consts::SQRT_2 / (sl + su)
}

fn ma_pseudo_lo(tl: f64, tu: f64, sl: f64, su: f64, z: f64) -> f64 {
    tl + sl / (sl + su) * (tu - tl) - z * sl * su * std::f64::consts::SQRT_2 / (sl + su)
}

pub fn backout_table2_ses(rows: &[Table2Row]) -> Vec<Backout> {
    rows.iter().map(backout_row).collect()
}

/// `CI_MA` (and optionally `CI_TI`) for one problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemReport {
    pub label: String,
    pub theta_l: f64,
    pub theta_u: f64,
    #[serde(flatten)]
    pub report: IntervalReport,
    pub ci_ti: Option<Interval>,
    /// Excess length of `CI_MA` relative to `CI_TI`; needs a nonempty `CI_TI`.
    pub rel_length: Option<f64>,
}

pub fn report_problem(
    problem: &InferenceProblem,
    with_ti: bool,
    mode: CoverageMode,
    cache: &CriticalValueCache,
) -> Result<ProblemReport> {
    let report = build_ci_ma_with(problem, None, mode, Some(cache))?;
    let (ti, rel) = if with_ti {
        let ti = ci_ti(problem)?;
        let rel = relative_excess_length(&report.ci_ma, &ti, problem.delta_hat()).ok();
        (Some(ti), rel)
    } else {
        (None, None)
    };
    Ok(ProblemReport {
        label: problem.label.clone(),
        theta_l: problem.theta_l_hat,
        theta_u: problem.theta_u_hat,
        report,
        ci_ti: ti,
        rel_length: rel,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// CSV with columns `label,theta_L,theta_U,ci_ma_lo,ci_ma_hi,ci_ti_lo,ci_ti_hi,c_hat,rel_length`.
/// `CI_TI` cells are blank when not computed or empty.
pub fn write_reports_csv<W: Write>(reports: &[ProblemReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "label",
        "theta_L",
        "theta_U",
        "ci_ma_lo",
        "ci_ma_hi",
        "ci_ti_lo",
        "ci_ti_hi",
        "c_hat",
        "rel_length",
    ])?;
    for r in reports {
        let ti = r.ci_ti.filter(|t| !t.empty);
        w.write_record([
            r.label.clone(),
            r.theta_l.to_string(),
            r.theta_u.to_string(),
            r.report.ci_ma.lower.to_string(),
            r.report.ci_ma.upper.to_string(),
            opt(ti.map(|t| t.lower)),
            opt(ti.map(|t| t.upper)),
            r.report.c_hat.to_string(),
            opt(r.rel_length),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parsed `key = value` simulation settings. Every `(ρ, α)` pair becomes one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    pub rhos: Vec<f64>,
    pub alphas: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub replications: u64,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub workers: Option<usize>,
    pub c_override: Option<f64>,
    pub out_dir: Option<String>,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec {
            rhos: vec![0.0],
            alphas: vec![0.05],
            delta_grid: default_delta_grid(),
            replications: DEFAULT_REPLICATIONS,
            seed: 0,
            methods: Method::ALL.to_vec(),
            workers: None,
            c_override: None,
            out_dir: None,
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|e| domain(format!("{key}: cannot parse '{s}': {e}")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| domain(format!("{key}: cannot parse '{value}': {e}")))
}

/// `lo:step:hi`, inclusive of `hi` up to rounding.
pub fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = parse_list::<f64>("range", &spec.replace(':', ","))?;
    let [lo, step, hi] = parts[..] else {
        return Err(domain(format!(
            "range must look like lo:step:hi, got '{spec}'"
        )));
    };
    if !(step > 0.0) || hi < lo {
        return Err(domain(format!("empty or invalid range '{spec}'")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| lo + step * i as f64).collect())
}

impl SimulationSpec {
    /// Keys: `rho`, `alpha` (comma lists), `deltas` (comma list or `lo:step:hi`),
    /// `reps`, `seed`, `workers`, `c_override`, `methods`, `out_dir`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SimulationSpec::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Row {
                    line: i + 1,
                    message: format!("expected key=value, got '{line}'"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            spec.set(key, value).map_err(|e| Error::Row {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(spec)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "rho" | "rhos" => self.rhos = parse_list(key, value)?,
            "alpha" | "alphas" => self.alphas = parse_list(key, value)?,
            "deltas" | "delta_grid" => {
                self.delta_grid = if value.contains(':') {
                    parse_range(value)?
                } else {
                    parse_list(key, value)?
                }
            }
            "reps" | "replications" => self.replications = parse_one(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "workers" => self.workers = Some(parse_one(key, value)?),
            "c_override" => self.c_override = Some(parse_one(key, value)?),
            "methods" => self.methods = parse_list(key, value)?,
            "out_dir" => self.out_dir = Some(value.to_string()),
            _ => return Err(domain(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// One validated experiment per `(ρ, α)`, α-major.
    pub fn experiments(&self, workers: usize) -> Result<Vec<ExperimentConfig>> {
        let mut out = Vec::new();
        for &alpha in &self.alphas {
            for &rho in &self.rhos {
                let config = ExperimentConfig {
                    rho: Correlation::new(rho)?,
                    alpha,
                    delta_grid: self.delta_grid.clone(),
                    replications: self.replications,
                    seed: self.seed,
                    methods: self.methods.clone(),
                    workers,
                    c_override: self.c_override,
                };
                config.validate()?;
                out.push(config);
            }
        }
        Ok(out)
    }
}

/// `coverage_rho{ρ}_alpha{α}.csv`.
pub fn coverage_file_name(rho: f64, alpha: f64) -> String {
    format!("coverage_rho{rho}_alpha{alpha}.csv")
}
