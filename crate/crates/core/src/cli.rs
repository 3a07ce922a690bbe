//! Command-line front end.
//!
//! Exit codes: `0` success, `1` input or runtime error, `2` no certificate,
//! failed validation or violated bound, `3` blow-up detected by `solve`.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificate::{
    derive_inequality, search_exponential, search_power, verify_kernel_envelope,
    verify_solution_bound, BoundReport, Certificate, CertificateError, SearchResult,
};
use crate::comparison::{propagate_majorant, MajorantStatus};
use crate::model::{
    build_problem, validate_decay, CheckVerdict, DecayProfile, ForcingEnvelope, HypothesisCheck, KernelEnvelope,
    ModelError, ProblemFile, ProblemSpec, ValidationReport,
};
use crate::solver::{solve, write_columns, Grid, SolveError, SolveOptions, Status, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_REFUSED: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;

/// Majorant values may exceed `|u|` by rounding only.
const DOMINATION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Certificate(#[from] CertificateError),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot read certificate {path}: {reason}")]
    CertificateFile { path: PathBuf, reason: String },
}

#[derive(Debug, Parser)]
#[command(name = "volterra", version, about = "Nonlinear Volterra integral equations with certified growth bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the equation and write trajectory.csv.
    Solve(SolveArgs),
    /// Validate the envelopes and search for a growth certificate; writes certificate.json.
    Certify(CertifyArgs),
    /// Solve, certify and check the bound at every node; writes bound.csv and report.json.
    Verify(VerifyArgs),
    /// Walk through u = 1 + ∫₀ᵗ u² ds, whose solution 1/(1-t) escapes at t = 1.
    DemoBlowup(DemoArgs),
}

#[derive(Debug, Args)]
struct ProblemArgs {
    /// JSON problem file.
    #[arg(long)]
    problem: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    io: ProblemArgs,
    #[arg(long, default_value_t = 10.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Horizon of the envelope validation.
    #[arg(long, default_value_t = 20.0)]
    t_max: f64,
    /// Largest |u| sampled by the envelope validation.
    #[arg(long, default_value_t = 10.0)]
    u_max: f64,
}

#[derive(Debug, Args)]
struct CertifyArgs {
    #[command(flatten)]
    io: ProblemArgs,
    #[command(flatten)]
    check: CheckArgs,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    io: ProblemArgs,
    #[command(flatten)]
    check: CheckArgs,
    #[arg(long, default_value_t = 20.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-2)]
    step: f64,
    /// Use this certificate file instead of searching.
    #[arg(long)]
    certificate: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DemoArgs {
    /// Also write trajectory.csv to this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Contents of `certificate.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub decay: DecayProfile,
    pub validation: ValidationReport<f64>,
    pub search: SearchResult<f64>,
}

impl CertifyReport {
    /// The certificate, provided the envelopes also passed validation.
    pub fn certificate(&self) -> Option<&Certificate<f64>> {
        self.search.certificate().filter(|_| self.validation.passed())
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub certificate: Certificate<f64>,
    pub solver_status: Status<f64>,
    pub bound: BoundReport<f64>,
    pub majorant_status: MajorantStatus<f64>,
    /// `min over nodes of gₙ - |uₙ|`.
    pub majorant_min_slack: f64,
    pub majorant_dominates: bool,
    /// Time-derivative envelope re-checked along the computed trajectory.
    pub trajectory_envelope: HypothesisCheck<f64>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("VOLTERRA_LOG")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a),
        Command::Certify(a) => cmd_certify(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::DemoBlowup(a) => cmd_demo(&a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_ERROR
    })
}

fn load(path: &Path) -> Result<ProblemSpec<f64>, CliError> {
    let spec = ProblemFile::load(path)?.to_spec()?;
    debug!("loaded {}: f = {}, a = {}", path.display(), spec.f, spec.a);
    Ok(spec)
}

/// Writes `contents` to `dir/name` through a temporary file and rename.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    let wrap = |source| CliError::Write { path: path.clone(), source };
    std::fs::create_dir_all(dir).map_err(wrap)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(contents.as_bytes()).map_err(wrap)?;
    tmp.persist(&path).map_err(|e| wrap(e.error))?;
    info!("wrote {}", path.display());
    Ok(path)
}

fn to_json<V: Serialize>(value: &V) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn solve_spec(spec: &ProblemSpec<f64>, t_end: f64, step: f64) -> Result<Trajectory<f64>, CliError> {
    let grid = Grid::new(t_end, step)?;
    Ok(solve(spec, &grid, &SolveOptions::default())?)
}

fn cmd_solve(a: &SolveArgs) -> Result<i32, CliError> {
    let spec = load(&a.io.problem)?;
    let traj = solve_spec(&spec, a.t_end, a.step)?;
    write_atomic(&a.io.out, "trajectory.csv", &traj.to_csv())?;
    Ok(match &traj.status {
        Status::Completed => {
            println!("completed: {} nodes on [0, {}]", traj.values.len(), a.t_end);
            EXIT_OK
        }
        Status::BlowUp { t_star } => {
            println!("blow-up detected near t={t_star:.2}");
            EXIT_BLOWUP
        }
        Status::StepFailure { t, reason } => {
            eprintln!("step failure near t={t:.4}: {reason}");
            EXIT_ERROR
        }
    })
}

fn certify_spec(spec: &ProblemSpec<f64>, check: &CheckArgs) -> Result<CertifyReport, CliError> {
    let validation = validate_decay(spec, check.t_max, check.u_max, 201)?;
    for c in validation.checks.iter().filter(|c| c.verdict != CheckVerdict::Pass) {
        warn!("hypothesis {:?} fails: margin {:e} at {:?}", c.hypothesis, c.margin, c.worst);
    }
    let data = derive_inequality(spec)?;
    let search = match spec.decay {
        DecayProfile::Exponential => search_exponential(&data)?,
        DecayProfile::Power => search_power(&data)?,
    };
    Ok(CertifyReport {
        decay: spec.decay,
        validation,
        search,
    })
}

fn describe_refusal(report: &CertifyReport) -> String {
    let mut parts = Vec::new();
    if let SearchResult::NoCertificate { best_margin, reason, .. } = &report.search {
        parts.push(format!("best margin {best_margin:e}: {reason}"));
    }
    let failed: Vec<String> = report
        .validation
        .checks
        .iter()
        .filter(|c| c.verdict != CheckVerdict::Pass)
        .map(|c| format!("{:?} (margin {:e})", c.hypothesis, c.margin))
        .collect();
    if !failed.is_empty() {
        parts.push(format!("envelope validation failed: {}", failed.join(", ")));
    }
    parts.join("; ")
}

fn cmd_certify(a: &CertifyArgs) -> Result<i32, CliError> {
    let spec = load(&a.io.problem)?;
    let report = certify_spec(&spec, &a.check)?;
    write_atomic(&a.io.out, "certificate.json", &to_json(&report))?;
    Ok(match report.certificate() {
        Some(cert) => {
            println!("{cert}");
            EXIT_OK
        }
        None => {
            println!("no certificate; {}", describe_refusal(&report));
            EXIT_REFUSED
        }
    })
}

fn read_certificate(path: &Path) -> Result<Certificate<f64>, CliError> {
    let err = |reason: String| CliError::CertificateFile { path: path.to_path_buf(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let report: CertifyReport = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    report
        .search
        .certificate()
        .cloned()
        .ok_or_else(|| err("file holds no certificate".into()))
}

fn cmd_verify(a: &VerifyArgs) -> Result<i32, CliError> {
    let spec = load(&a.io.problem)?;
    let cert = match &a.certificate {
        Some(path) => read_certificate(path)?,
        None => {
            let report = certify_spec(&spec, &a.check)?;
            match report.certificate() {
                Some(cert) => cert.clone(),
                None => {
                    let traj = solve_spec(&spec, a.t_end, a.step)?;
                    match traj.status.blow_up_time() {
                        Some(t_star) => println!("no certificate; solution blows up near t={t_star:.2}"),
                        None => println!("no certificate; {}", describe_refusal(&report)),
                    }
                    return Ok(EXIT_REFUSED);
                }
            }
        }
    };
    let traj = solve_spec(&spec, a.t_end, a.step)?;
    let bound = verify_solution_bound(&traj, &cert);
    let curve = propagate_majorant(&derive_inequality(&spec)?, &traj.grid)?;

    let mut rows = Vec::with_capacity(traj.values.len());
    let mut majorant_min_slack = f64::INFINITY;
    for (k, (t, u)) in traj.times().zip(&traj.values).enumerate() {
        let g = curve.g_values.get(k).copied().unwrap_or(f64::NAN);
        let slack = g - u.abs();
        if !(slack >= majorant_min_slack) {
            majorant_min_slack = slack;
        }
        rows.push([t, *u, g, cert.mu.inverse(t).unwrap_or(f64::NAN)]);
    }
    let majorant_dominates = majorant_min_slack + DOMINATION_TOL >= 0.0;
    let report = VerifyReport {
        trajectory_envelope: verify_kernel_envelope(&spec, &traj),
        certificate: cert,
        solver_status: traj.status.clone(),
        bound,
        majorant_status: curve.status,
        majorant_min_slack,
        majorant_dominates,
    };
    write_atomic(
        &a.io.out,
        "bound.csv",
        &write_columns("t,u,g,mu_inv", rows.into_iter(), &traj.status.describe()),
    )?;
    write_atomic(&a.io.out, "report.json", &to_json(&report))?;
    if report.trajectory_envelope.verdict != CheckVerdict::Pass {
        warn!("time-derivative envelope fails along the trajectory (margin {:e})", report.trajectory_envelope.margin);
    }

    let holds = report.bound.holds && report.solver_status.is_completed() && majorant_dominates;
    if holds {
        println!("bound holds at all {} nodes; min slack {:e}", traj.values.len(), report.bound.min_slack);
        Ok(EXIT_OK)
    } else {
        match report.bound.worst_node {
            Some(w) if !report.bound.holds => {
                println!("bound violated at t={:.4}: |u|={:e} against 1/μ={:e}", w.t, w.u.abs(), w.bound)
            }
            _ if !report.solver_status.is_completed() => {
                println!("solver did not complete: {}", report.solver_status.describe())
            }
            _ => println!("majorant fails to dominate the solution (min slack {majorant_min_slack:e})"),
        }
        Ok(EXIT_REFUSED)
    }
}

fn cmd_demo(a: &DemoArgs) -> Result<i32, CliError> {
    println!("u(t) = 1 + ∫₀ᵗ u(s)² ds has the exact solution u = 1/(1-t), which escapes at t = 1.");
    let spec = build_problem(
        "1",
        "u^2",
        ForcingEnvelope::new(1.0, 0.0),
        KernelEnvelope::new(1.0, 0.0, 0.0, 0.0, 1.0),
    )?;
    let traj = solve_spec(&spec, 2.0, 1e-4)?;
    println!("{:>6} {:>14} {:>14}", "t", "computed", "exact");
    for t in [0.25, 0.5, 0.75, 0.9, 0.99] {
        if let Some(u) = traj.value_near(t) {
            println!("{t:>6} {u:>14.6} {:>14.6}", 1.0 / (1.0 - t));
        }
    }
    match traj.status.blow_up_time() {
        Some(t_star) => println!("blow-up detected near t={t_star:.2}"),
        None => println!("solver status: {}", traj.status.describe()),
    }
    match search_exponential(&derive_inequality(&spec)?)? {
        SearchResult::NoCertificate { reason, .. } => println!("certificate refused: {reason}"),
        SearchResult::Certified { certificate } => println!("unexpected certificate: {certificate}"),
    }
    if let Some(dir) = &a.out {
        write_atomic(dir, "trajectory.csv", &traj.to_csv())?;
    }
    Ok(EXIT_OK)
}
