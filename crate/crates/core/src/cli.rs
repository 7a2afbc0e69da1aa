//! Run configuration, single-run and convergence drivers, CSV and text output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;

use crate::cases::{l2_error, manufactured_case, ErrorReport};
use crate::error::{Error, Result};
use crate::forms::StabWeights;
use crate::linalg::SolverConfig;
use crate::meshio::{generate_cube_mesh, load_mesh, BoxDomain, PolyMesh};
use crate::stepper::{run, step_count, write_monitors, Discretization, StepConfig, StepMonitor};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const CSV_HEADER: &str = "label,h,tau,err_E,err_B,div_B,n_edge_dofs,n_face_dofs,cg_iters_total,wall_s";

/// Lowest-order virtual element solver for the time-dependent Maxwell equations.
#[derive(Debug, Clone, Parser)]
#[command(name = "vem-maxwell", version)]
pub struct Args {
    /// Mesh file in PVM-JSON format; repeat for a convergence study over files.
    #[arg(long, value_name = "PATH", conflicts_with = "generate", required_unless_present = "generate")]
    pub mesh: Vec<PathBuf>,
    /// Generated mesh, e.g. cube:4 for a 4x4x4 hexahedral grid of the unit cube.
    #[arg(long, value_name = "cube:N")]
    pub generate: Option<String>,
    /// Manufactured test case (1 or 2).
    #[arg(long, value_name = "1|2")]
    pub case: u32,
    /// Time step as p/q or a decimal.
    #[arg(long, value_name = "p/q")]
    pub tau: String,
    /// Final time; must be a multiple of tau.
    #[arg(long = "T", value_name = "FLOAT", default_value_t = 1.0)]
    pub final_time: f64,
    #[arg(long, default_value_t = 0.01)]
    pub eta_edge: f64,
    #[arg(long, default_value_t = 0.5)]
    pub eta_face: f64,
    /// Relative residual tolerance of the linear solver.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// CSV output path.
    #[arg(long, value_name = "CSV")]
    pub out: Option<PathBuf>,
    /// Number of levels of a simultaneous h/tau refinement study.
    #[arg(long, value_name = "N")]
    pub levels: Option<usize>,
    /// Per-step monitor CSV (one file per level in a study).
    #[arg(long, value_name = "PATH")]
    pub monitors: Option<PathBuf>,
    /// In a study, also run every mesh with every time step and print the full tables.
    #[arg(long)]
    pub full_table: bool,
    /// Run study levels on separate threads.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeshSource {
    Cube(usize),
    Files(Vec<PathBuf>),
}

impl MeshSource {
    pub fn parse_generator(text: &str) -> Result<Self> {
        let n =
            text.strip_prefix("cube:").and_then(|n| n.parse::<usize>().ok()).filter(|&n| n > 0).ok_or_else(|| {
                Error::Config(format!("unknown mesh generator '{text}' (expected cube:<n> with n >= 1)"))
            })?;
        Ok(Self::Cube(n))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub case: u32,
    pub tau: f64,
    pub final_time: f64,
    pub weights: StabWeights<f64>,
    pub tol: f64,
    pub out: Option<PathBuf>,
    pub monitors: Option<PathBuf>,
    pub levels: usize,
    pub full_table: bool,
    pub parallel: bool,
}

/// Parses `p/q` or a decimal into a positive time step.
pub fn parse_tau(text: &str) -> Result<f64> {
    let bad = || Error::Config(format!("invalid time step '{text}' (expected p/q or a positive number)"));
    let value = match text.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            let q: f64 = q.trim().parse().map_err(|_| bad())?;
            p / q
        }
        None => text.trim().parse().map_err(|_| bad())?,
    };
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

impl RunConfig {
    pub fn from_args(args: &Args) -> Result<Self> {
        let mesh = match (&args.generate, args.mesh.is_empty()) {
            (Some(g), true) => MeshSource::parse_generator(g)?,
            (None, false) => MeshSource::Files(args.mesh.clone()),
            _ => return Err(Error::Config("give exactly one of --mesh or --generate".into())),
        };
        if !(args.tol > 0.0 && args.tol < 1.0) {
            return Err(Error::Config(format!("solver tolerance must lie in (0, 1), got {}", args.tol)));
        }
        let levels = match (&mesh, args.levels) {
            (_, Some(0)) => return Err(Error::Config("--levels must be at least 1".into())),
            (MeshSource::Files(files), Some(l)) if l != files.len() => {
                return Err(Error::Config(format!("--levels {l} but {} mesh files given", files.len())))
            }
            (MeshSource::Files(files), _) => files.len(),
            (MeshSource::Cube(_), l) => l.unwrap_or(1),
        };
        let cfg = Self {
            mesh,
            case: args.case,
            tau: parse_tau(&args.tau)?,
            final_time: args.final_time,
            weights: StabWeights::new(args.eta_edge, args.eta_face)?,
            tol: args.tol,
            out: args.out.clone(),
            monitors: args.monitors.clone(),
            levels,
            full_table: args.full_table,
            parallel: args.parallel,
        };
        manufactured_case::<f64>(cfg.case)?;
        for level in 0..cfg.levels {
            step_count(cfg.level_tau(level), cfg.final_time)?;
        }
        Ok(cfg)
    }

    /// Time step of refinement level `level` (halved per level).
    pub fn level_tau(&self, level: usize) -> f64 {
        self.tau / f64::powi(2.0, level as i32)
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig { solver: SolverConfig { tol: self.tol, ..SolverConfig::default() }, ..StepConfig::default() }
    }

    fn level_mesh(&self, level: usize) -> Result<(String, PolyMesh<f64>)> {
        match &self.mesh {
            MeshSource::Cube(n) => {
                let n = n << level;
                Ok((format!("cube:{n}"), generate_cube_mesh(n, BoxDomain::unit())?))
            }
            MeshSource::Files(files) => {
                let path = &files[level];
                let mesh = load_mesh(path).map_err(|e| Error::from(e).context(format!("mesh {}", path.display())))?;
                let label = mesh.name().map(str::to_owned).unwrap_or_else(|| file_label(path));
                Ok((label, mesh))
            }
        }
    }
}

fn file_label(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// One finished run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub label: String,
    pub report: ErrorReport,
    pub monitors: Vec<StepMonitor>,
}

/// Builds the discretization, steps to `T` and measures the errors.
pub fn run_on_mesh(label: &str, mesh: PolyMesh<f64>, cfg: &RunConfig, tau: f64) -> Result<RunRecord> {
    let start = Instant::now();
    let case = manufactured_case::<f64>(cfg.case)?;
    let disc = Discretization::new(mesh, cfg.weights).map_err(|e| e.context(format!("mesh {label}")))?;
    let traj = run(&disc, case.as_ref(), tau, cfg.final_time, &cfg.step_config())
        .map_err(|e| e.context(format!("mesh {label}, tau {tau}")))?;
    let mut report = l2_error(&disc, &traj.state, case.as_ref(), cfg.final_time)?;
    report.cg_iters_total = traj.cg_iters_total;
    report.wall_s = start.elapsed().as_secs_f64();
    Ok(RunRecord { label: label.to_owned(), report, monitors: traj.monitors })
}

/// Single run on level 0 of the configuration.
pub fn run_single(cfg: &RunConfig) -> Result<RunRecord> {
    let (label, mesh) = cfg.level_mesh(0)?;
    run_on_mesh(&label, mesh, cfg, cfg.tau)
}

/// Observed rates between two successive rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rate {
    pub from: usize,
    pub to: usize,
    pub rate_e: f64,
    pub rate_b: f64,
}

/// `log(err_i / err_j) / log(h_i / h_j)`; both h and tau must be refined.
pub fn observed_rate(coarse: &ErrorReport, fine: &ErrorReport) -> Result<(f64, f64)> {
    let h_ratio = coarse.h / fine.h;
    if !(h_ratio > 1.0 + 1e-12) {
        return Err(Error::Config(format!("h not refined ({} -> {})", coarse.h, fine.h)));
    }
    if !(coarse.tau / fine.tau > 1.0 + 1e-12) {
        return Err(Error::Config(format!("tau not refined ({} -> {})", coarse.tau, fine.tau)));
    }
    let rate = |a: f64, b: f64| (a / b).ln() / h_ratio.ln();
    Ok((rate(coarse.err_e, fine.err_e), rate(coarse.err_b, fine.err_b)))
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    /// Diagonal runs: level `i` uses mesh `i` and time step `tau / 2^i`.
    pub rows: Vec<RunRecord>,
    pub rates: Vec<Rate>,
    /// `table[i][j]`: mesh `i` with time step `tau / 2^j`, when requested.
    pub table: Option<Vec<Vec<RunRecord>>>,
}

fn run_levels(cfg: &RunConfig, jobs: Vec<(usize, usize)>) -> Result<Vec<RunRecord>> {
    let job = |(mesh_level, tau_level): (usize, usize)| -> Result<RunRecord> {
        let (label, mesh) = cfg.level_mesh(mesh_level)?;
        run_on_mesh(&label, mesh, cfg, cfg.level_tau(tau_level))
    };
    if cfg.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs.iter().map(|&j| s.spawn(move || job(j))).collect();
            handles.into_iter().map(|h| h.join().expect("level thread panicked")).collect()
        })
    } else {
        jobs.into_iter().map(job).collect()
    }
}

/// Simultaneous refinement of h and tau over `cfg.levels` levels.
pub fn run_convergence(cfg: &RunConfig) -> Result<ConvergenceReport> {
    if cfg.levels < 2 {
        return Err(Error::Config("a convergence study needs at least 2 levels".into()));
    }
    let n = cfg.levels;
    let table = if cfg.full_table {
        let jobs: Vec<_> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        let flat = run_levels(cfg, jobs)?;
        Some(flat.chunks(n).map(<[RunRecord]>::to_vec).collect::<Vec<_>>())
    } else {
        None
    };
    let rows = match &table {
        Some(t) => (0..n).map(|i| t[i][i].clone()).collect(),
        None => run_levels(cfg, (0..n).map(|i| (i, i)).collect())?,
    };
    let rates = rows
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let (rate_e, rate_b) = observed_rate(&w[0].report, &w[1].report)?;
            Ok(Rate { from: i, to: i + 1, rate_e, rate_b })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport { rows, rates, table })
}

pub fn csv_row(label: &str, r: &ErrorReport) -> String {
    format!(
        "{label},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{},{},{},{:.15e}",
        r.h, r.tau, r.err_e, r.err_b, r.div_b, r.n_edge_dofs, r.n_face_dofs, r.cg_iters_total, r.wall_s
    )
}

pub fn csv<'a>(records: impl IntoIterator<Item = &'a RunRecord>) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in records {
        out.push_str(&csv_row(&r.label, &r.report));
        out.push('\n');
    }
    out
}

const MESH_NOTE: &str = "# absolute errors are specific to the mesh; values on Voronoi or random meshes are only comparable on the same mesh files";

fn grid_table(out: &mut String, title: &str, table: &[Vec<RunRecord>], value: impl Fn(&ErrorReport) -> f64) {
    let _ = writeln!(out, "\n{title} (rows: meshes, columns: tau)");
    let _ = write!(out, "{:<12}", "mesh");
    for r in &table[0] {
        let _ = write!(out, " {:>13}", format!("tau={:.6}", r.report.tau));
    }
    out.push('\n');
    for row in table {
        let _ = write!(out, "{:<12}", row[0].label);
        for r in row {
            let _ = write!(out, " {:>13.5e}", value(&r.report));
        }
        out.push('\n');
    }
}

/// Plain-text summary of a study.
pub fn text_report(report: &ConvergenceReport) -> String {
    let mut out = format!("{MESH_NOTE}\n");
    let _ = writeln!(
        out,
        "{:<12} {:>12} {:>12} {:>13} {:>7} {:>13} {:>7} {:>13}",
        "mesh", "h", "tau", "err_E", "rate", "err_B", "rate", "div_B"
    );
    for (i, r) in report.rows.iter().enumerate() {
        let rate = i.checked_sub(1).and_then(|p| report.rates.iter().find(|x| x.from == p));
        let fmt_rate = |v: Option<f64>| v.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<12} {:>12.5e} {:>12.5e} {:>13.5e} {:>7} {:>13.5e} {:>7} {:>13.5e}",
            r.label,
            r.report.h,
            r.report.tau,
            r.report.err_e,
            fmt_rate(rate.map(|x| x.rate_e)),
            r.report.err_b,
            fmt_rate(rate.map(|x| x.rate_b)),
            r.report.div_b
        );
    }
    if let Some(table) = &report.table {
        grid_table(&mut out, "err_E", table, |r| r.err_e);
        grid_table(&mut out, "err_B", table, |r| r.err_b);
        grid_table(&mut out, "div_B", table, |r| r.div_b);
    }
    out
}

pub fn single_report(record: &RunRecord) -> String {
    let r = &record.report;
    format!(
        "{MESH_NOTE}\nmesh {}  h {:.5e}  tau {:.5e}\nerr_E {:.6e}\nerr_B {:.6e}\ndiv_B {:.6e}\nedge dofs {}  face dofs {}  cg iterations {}  wall {:.3} s\n",
        record.label, r.h, r.tau, r.err_e, r.err_b, r.div_b, r.n_edge_dofs, r.n_face_dofs, r.cg_iters_total, r.wall_s
    )
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))
}

fn monitor_path(base: &Path, label: &str) -> PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let tag: String = label.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    base.with_file_name(format!("{stem}_{tag}.csv"))
}

/// Runs whatever `cfg` asks for and writes the requested files; returns the text report.
pub fn execute(cfg: &RunConfig) -> Result<String> {
    if cfg.levels == 1 {
        let record = run_single(cfg)?;
        if let Some(out) = &cfg.out {
            write_file(out, &csv([&record]))?;
        }
        if let Some(path) = &cfg.monitors {
            write_monitors(path, &record.monitors)?;
        }
        return Ok(single_report(&record));
    }
    let report = run_convergence(cfg)?;
    if let Some(out) = &cfg.out {
        let records: Vec<&RunRecord> = match &report.table {
            Some(t) => t.iter().flatten().collect(),
            None => report.rows.iter().collect(),
        };
        write_file(out, &csv(records))?;
    }
    if let Some(path) = &cfg.monitors {
        for r in &report.rows {
            write_monitors(monitor_path(path, &format!("{}_tau{}", r.label, r.report.tau)), &r.monitors)?;
        }
    }
    Ok(text_report(&report))
}

/// Process exit code for an error: 2 for bad input, 3 for numerical failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Mesh(_) | Error::Coefficient(_) => EXIT_CONFIG,
        Error::AtStep { source, .. } | Error::Context { source, .. } => exit_code(source),
        Error::Solve(_) | Error::InitialDivergence(_) | Error::BoundaryCoupling { .. } => EXIT_NUMERICAL,
    }
}
