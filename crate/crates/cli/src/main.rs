//! `bounds-ci`: critical values, confidence intervals, simulations and the
//! Table 2 pipeline from the command line.
//!
//! Exit codes: 0 on success, 1 when a computation fails (including any bad row
//! in an input file), 2 on usage errors.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use bounds_ci::coverage::{delta_profile, GridSpec};
use bounds_ci::critical::{
    format_table1_text, generate_table1, solve_critical_value, write_table1_csv,
    CriticalValueCache, DEFAULT_TOL, TABLE1_ALPHAS, TABLE1_RHOS,
};
use bounds_ci::interval::CoverageMode;
use bounds_ci::io::{
    backout_table2_ses, bundled_table2, coverage_file_name, read_problems, read_table2,
    report_problem, write_problems, write_reports_csv, SimulationSpec,
};
use bounds_ci::mc::{run_experiment, write_coverage_csv};
use bounds_ci::normal::Correlation;

#[derive(Parser, Debug)]
#[command(
    name = "bounds-ci",
    version,
    about = "Confidence intervals for partially identified parameters that are never empty"
)]
struct Cli {
    /// Seed for anything random (only `simulate` draws random numbers)
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the critical value ĉ at one (ρ, α)
    Crit {
        /// Correlation of the two bound estimators
        #[arg(long, allow_hyphen_values = true)]
        rho: f64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// ρ = 0 is known rather than estimated; enables the one-sided shortcut
        #[arg(long)]
        rho_known_zero: bool,
        /// Tolerance on infimal coverage
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Also write the coverage profile over Δ at ĉ to this CSV
        #[arg(long)]
        profile_out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = CritFormat::Text)]
        format: CritFormat,
    },
    /// Build intervals for every row of a problem file
    Ci {
        /// CSV with columns label,theta_L,theta_U,se_L,se_U,rho,alpha,rho_known_zero
        file: PathBuf,
        /// Add the test-inversion interval and the relative excess length
        #[arg(long)]
        with_ti: bool,
        /// Cover the whole identified set (ĉ = Φ⁻¹(1−α/2))
        #[arg(long)]
        set_coverage: bool,
        #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
        format: ReportFormat,
        /// Output file; stdout when omitted
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Critical values over a grid of (ρ, α)
    Table1 {
        /// Comma list of correlations (default 0.8,0.85,0.9,0.95,0.98,0.99,1)
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        rhos: Option<Vec<f64>>,
        /// Comma list of levels (default .1,.05,.01)
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value_t = TableFormat::Text)]
        format: TableFormat,
        /// Output file; stdout when omitted
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo coverage and excess length curves
    Simulate {
        /// key=value file; command-line flags override its entries
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma list of correlations
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        rho: Option<Vec<f64>>,
        /// Comma list of significance levels
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<f64>>,
        /// Replications per Δ (default 100000)
        #[arg(long)]
        reps: Option<u64>,
        /// Δ grid as a list or lo:step:hi
        #[arg(long, allow_hyphen_values = true)]
        deltas: Option<String>,
        /// Worker threads; capped by BOUNDS_CI_THREADS
        #[arg(long)]
        workers: Option<usize>,
        /// Use this c in CI_MA instead of the solved ĉ
        #[arg(long)]
        c_override: Option<f64>,
        /// Comma list of CI_MA, CI_TI, CI_TI_union
        #[arg(long)]
        methods: Option<String>,
        /// Directory for one CSV per (ρ, α); stdout when omitted and there is one experiment
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Recover standard errors from printed Table 2 intervals
    Backout {
        /// Table 2 CSV; the bundled copy when omitted
        file: Option<PathBuf>,
        /// Problem file to write; stdout when omitted
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum CritFormat {
    Text,
    Json,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ReportFormat {
    Csv,
    Json,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum TableFormat {
    Text,
    Csv,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Requested workers, or all cores, capped by `BOUNDS_CI_THREADS`.
fn worker_count(requested: Option<usize>) -> Result<usize> {
    let mut n =
        requested.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Ok(cap) = std::env::var("BOUNDS_CI_THREADS") {
        let cap: usize = cap.trim().parse().with_context(|| {
            format!("BOUNDS_CI_THREADS must be a positive integer, got '{cap}'")
        })?;
        if cap == 0 {
            bail!("BOUNDS_CI_THREADS must be a positive integer, got 0");
        }
        n = n.min(cap);
    }
    Ok(n.max(1))
}

fn cmd_crit(
    rho: f64,
    alpha: f64,
    known_zero: bool,
    tol: f64,
    profile_out: Option<PathBuf>,
    format: CritFormat,
) -> Result<ExitCode> {
    let r = Correlation::new(rho)?;
    let res = solve_critical_value(r, alpha, known_zero, tol)?;
    let mut out = output(None)?;
    match format {
        CritFormat::Text => {
            writeln!(out, "c_hat            {:.6}", res.c_hat)?;
            writeln!(out, "infimal_coverage {:.6}", res.infimal_coverage)?;
            writeln!(out, "argmin_delta     {}", res.argmin_delta)?;
            writeln!(out, "method           {}", res.method)?;
            writeln!(out, "iterations       {}", res.iterations)?;
        }
        CritFormat::Json => {
            serde_json::to_writer_pretty(&mut out, &res)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    if let Some(path) = profile_out {
        let profile = delta_profile(res.c_hat, r, alpha, GridSpec::default())?;
        profile.write_csv(output(Some(&path))?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_ci(
    file: &Path,
    with_ti: bool,
    set_coverage: bool,
    format: ReportFormat,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let input = File::open(file).with_context(|| format!("cannot open {}", file.display()))?;
    let rows = read_problems(input)?;
    let mode = if set_coverage {
        CoverageMode::SetCoverage
    } else {
        CoverageMode::PointCoverage
    };
    let cache = CriticalValueCache::default();
    let mut reports = Vec::new();
    let mut failed = 0;
    for row in rows {
        match row.and_then(|p| report_problem(&p, with_ti, mode, &cache)) {
            Ok(r) => reports.push(r),
            Err(e) => {
                failed += 1;
                eprintln!("error: {e}");
            }
        }
    }
    let mut w = output(out.as_deref())?;
    match format {
        ReportFormat::Csv => write_reports_csv(&reports, &mut w)?,
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut w, &reports)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(if failed > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_table1(
    rhos: Option<Vec<f64>>,
    alphas: Option<Vec<f64>>,
    format: TableFormat,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let rhos = rhos.unwrap_or_else(|| TABLE1_RHOS.to_vec());
    let alphas = alphas.unwrap_or_else(|| TABLE1_ALPHAS.to_vec());
    let cells = generate_table1(&rhos, &alphas)?;
    let mut w = output(out.as_deref())?;
    match format {
        TableFormat::Text => write!(w, "{}", format_table1_text(&cells))?,
        TableFormat::Csv => write_table1_csv(&cells, &mut w)?,
    }
    w.flush()?;
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    seed: Option<u64>,
    config: Option<PathBuf>,
    rho: Option<Vec<f64>>,
    alpha: Option<Vec<f64>>,
    reps: Option<u64>,
    deltas: Option<String>,
    workers: Option<usize>,
    c_override: Option<f64>,
    methods: Option<String>,
    out_dir: Option<PathBuf>,
) -> Result<ExitCode> {
    let mut spec = match &config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            SimulationSpec::parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => SimulationSpec::default(),
    };
    if let Some(v) = seed {
        spec.seed = v;
    }
    if let Some(v) = rho {
        spec.rhos = v;
    }
    if let Some(v) = alpha {
        spec.alphas = v;
    }
    if let Some(v) = reps {
        spec.replications = v;
    }
    if let Some(v) = deltas {
        spec.set("deltas", &v)?;
    }
    if let Some(v) = methods {
        spec.set("methods", &v)?;
    }
    if c_override.is_some() {
        spec.c_override = c_override;
    }
    let out_dir = out_dir.or_else(|| spec.out_dir.as_ref().map(PathBuf::from));
    let experiments = spec.experiments(worker_count(workers.or(spec.workers))?)?;
    if out_dir.is_none() && experiments.len() > 1 {
        bail!("{} experiments need --out-dir", experiments.len());
    }
    if let Some(dir) = &out_dir {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    for exp in &experiments {
        let points = run_experiment(exp)?;
        match &out_dir {
            Some(dir) => {
                let path = dir.join(coverage_file_name(exp.rho.get(), exp.alpha));
                write_coverage_csv(&points, output(Some(&path))?)?;
                eprintln!("wrote {}", path.display());
            }
            None => write_coverage_csv(&points, output(None)?)?,
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_backout(file: Option<PathBuf>, out: Option<PathBuf>) -> Result<ExitCode> {
    let rows = match &file {
        Some(path) => read_table2(
            File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
        )?,
        None => bundled_table2(),
    };
    let backed = backout_table2_ses(&rows);
    let mut problems = Vec::new();
    let mut flagged = 0;
    for b in &backed {
        match &b.problem {
            Some(p) => problems.push(p.clone()),
            None => {
                flagged += 1;
                eprintln!(
                    "flagged: {}: no standard errors in [1e-6, 10] reproduce the interval (best error {:.4})",
                    b.row.game, b.max_error
                );
            }
        }
    }
    let mut w = output(out.as_deref())?;
    write_problems(&problems, &mut w)?;
    w.flush()?;
    Ok(if flagged > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Crit {
            rho,
            alpha,
            rho_known_zero,
            tol,
            profile_out,
            format,
        } => cmd_crit(rho, alpha, rho_known_zero, tol, profile_out, format),
        Command::Ci {
            file,
            with_ti,
            set_coverage,
            format,
            out,
        } => cmd_ci(&file, with_ti, set_coverage, format, out),
        Command::Table1 {
            rhos,
            alphas,
            format,
            out,
        } => cmd_table1(rhos, alphas, format, out),
        Command::Simulate {
            config,
            rho,
            alpha,
            reps,
            deltas,
            workers,
            c_override,
            methods,
            out_dir,
        } => cmd_simulate(
            cli.seed, config, rho, alpha, reps, deltas, workers, c_override, methods, out_dir,
        ),
        Command::Backout { file, out } => cmd_backout(file, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
