use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use hvi_core::contact::{assemble, build_abstract, read_scenario, recover_stress, ContactConfig};
use hvi_core::convergence::run_study;
use hvi_core::fem::write_vtk;
use hvi_core::oracle::run_oracle_suite;
use hvi_core::rothe::{apriori_audit, interp_gap, interp_gap_bound};
use hvi_core::step::StepSolverConfig;
use hvi_core::HviError;

#[derive(Debug, Parser)]
#[command(
    name = "hvi",
    version,
    about = "Rothe/FEM solver for history-dependent contact problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the structural hypotheses and the smallness condition.
    Validate(Common),
    /// Run the time stepping and export the trajectory, fields and audit.
    Solve(Common),
    /// Joint space-time refinement study against a finer reference.
    Converge(Common),
    /// Compare the step solver with exhaustive search on random small problems.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Number of random instances.
        #[arg(long, default_value_t = 100)]
        count: u64,
        /// Allowed max-norm deviation from the search.
        #[arg(long, default_value_t = 1e-6)]
        deviation: f64,
    },
}

#[derive(Debug, Args, Clone)]
struct Common {
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override the number of time steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Override the number of study levels (at least 3).
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the step solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Override the step solver iteration limit.
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Debug, Serialize)]
struct ToleranceOverrides {
    tol: Option<f64>,
    max_iter: Option<usize>,
}

/// Everything needed to reproduce a run, written next to its outputs.
#[derive(Debug, Serialize)]
struct RunManifest {
    scenario: Option<PathBuf>,
    command: String,
    out: Option<PathBuf>,
    seed: u64,
    threads: usize,
    overrides: ToleranceOverrides,
}

impl RunManifest {
    fn new(command: &str, c: &Common) -> Self {
        Self {
            scenario: c.scenario.clone(),
            command: command.into(),
            out: c.out.clone(),
            seed: c.seed,
            threads: c.threads,
            overrides: ToleranceOverrides {
                tol: c.tol,
                max_iter: c.max_iter,
            },
        }
    }

    fn write(&self, dir: &Path) -> Result<(), Failure> {
        write_json(&dir.join("manifest.json"), self)
    }
}

enum Failure {
    /// Bad invocation or unreadable input: exit 2.
    Usage(String),
    /// The problem or the result fails a mathematical check: exit 1.
    Domain(String),
}

impl From<HviError> for Failure {
    fn from(e: HviError) -> Self {
        match e.root() {
            HviError::Parse { .. }
            | HviError::UnknownLaw(_)
            | HviError::InvalidTagging(_)
            | HviError::InvalidArgument(_)
            | HviError::Io(_) => Failure::Usage(e.to_string()),
            _ => Failure::Domain(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match &cli.command {
        Command::Validate(c) => validate(c),
        Command::Solve(c) => solve(c),
        Command::Converge(c) => converge(c),
        Command::Oracle {
            common,
            count,
            deviation,
        } => oracle(common, *count, *deviation),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(c: &Common) -> Result<ContactConfig, Failure> {
    let path = c
        .scenario
        .as_deref()
        .ok_or_else(|| Failure::Usage("--scenario is required".into()))?;
    let mut cc = read_scenario(path).map_err(|e| match e {
        HviError::Io(io) => Failure::Usage(format!("{}: {io}", path.display())),
        other => Failure::from(other),
    })?;
    if let Some(n) = c.steps {
        if n == 0 {
            return Err(Failure::Usage("--steps must be positive".into()));
        }
        cc.steps = n;
    }
    apply_overrides(&mut cc.solver, c)?;
    Ok(cc)
}

fn apply_overrides(cfg: &mut StepSolverConfig, c: &Common) -> Result<(), Failure> {
    if let Some(tol) = c.tol {
        cfg.tol = tol;
    }
    if let Some(m) = c.max_iter {
        cfg.max_iter = m;
    }
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))
}

fn out_dir(c: &Common) -> Result<&Path, Failure> {
    let dir = c
        .out
        .as_deref()
        .ok_or_else(|| Failure::Usage("--out is required".into()))?;
    fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Usage(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn validate(c: &Common) -> Result<(), Failure> {
    let cc = load(c)?;
    let cp = assemble(&cc)?;
    let report = &cp.report;
    println!("{report}");
    let tau = cc.horizon / cc.steps as f64;
    println!("tau = {tau} ({} steps)", cc.steps);
    if let Some(dir) = c.out.as_deref() {
        fs::create_dir_all(dir)?;
        RunManifest::new("validate", c).write(dir)?;
    }
    if !report.h0_holds {
        return Err(Failure::Domain(
            "(H0) violated: m_B <= m_J |M|^2, the steps are not uniquely solvable".into(),
        ));
    }
    if !report.all_hold() {
        let failed: Vec<&str> = report
            .margins
            .iter()
            .filter(|m| !m.holds)
            .map(|m| m.name.as_str())
            .collect();
        return Err(Failure::Domain(format!(
            "hypotheses violated: {}",
            failed.join(", ")
        )));
    }
    if tau >= report.tau0 {
        return Err(Failure::Domain(format!(
            "step length {tau} is not below tau0 = {}",
            report.tau0
        )));
    }
    println!("all hypotheses hold");
    Ok(())
}

fn solve(c: &Common) -> Result<(), Failure> {
    let cc = load(c)?;
    let dir = out_dir(c)?;
    RunManifest::new("solve", c).write(dir)?;
    let cp = build_abstract(&cc)?;
    let traj = cp.solve()?;

    let mut w = create(&dir.join("trajectory.csv"))?;
    traj.write_csv(&mut w)?;
    w.flush()?;

    let fields = dir.join("fields");
    fs::create_dir_all(&fields)?;
    let steps = traj.grid.steps;
    let width = steps.to_string().len().max(4);
    // The stress involves the rate, so the series starts at the first step.
    for k in 1..=steps {
        let u = cp.displacement(&traj, k)?;
        let stress = recover_stress(&cp, &traj, k)?;
        let mut w = create(&fields.join(format!("step_{k:0width$}.vtk")))?;
        let title = format!("t = {}", traj.grid.node(k));
        write_vtk(&cp.mesh, &u, &stress, &title, &mut w)?;
        w.flush()?;
    }

    let est = apriori_audit(&traj);
    let gap = interp_gap(&traj);
    let bound = interp_gap_bound(&traj);
    let audit = json!({
        "steps": steps,
        "tau": traj.grid.tau,
        "tau0": finite_or_null(cp.report.tau0),
        "max_state": est.max_state,
        "sum_sq_increments": est.sum_sq_increments,
        "max_selection": est.max_selection,
        "sum_sq_rates": est.sum_sq_rates,
        "interp_gap_sq": gap * gap,
        "interp_gap_sq_bound": bound,
    });
    write_json(&dir.join("audit.json"), &audit)?;
    println!(
        "solved {steps} steps, max |u^k| = {:.6e}, output in {}",
        est.max_state,
        dir.display()
    );
    Ok(())
}

fn finite_or_null(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}

fn converge(c: &Common) -> Result<(), Failure> {
    let cc = load(c)?;
    let levels = c.levels.unwrap_or(cc.study.levels);
    if levels < 3 {
        return Err(Failure::Usage(format!(
            "a rate fit needs at least 3 levels, got {levels}"
        )));
    }
    let dir = out_dir(c)?;
    RunManifest::new("converge", c).write(dir)?;
    let report = run_study(&cc, levels, cc.study.ref_extra)?;

    let mut w = create(&dir.join("report.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("summary.json"))?;
    report.write_summary(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("plot.dat"))?;
    report.write_plot_data(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("plot.gp"))?;
    report.write_plot_script("plot.dat", "convergence.png", &mut w)?;
    w.flush()?;

    println!("p = {:.4} (threshold {})", report.fitted_rate, report.threshold);
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Domain(format!(
            "fitted rate p = {:.4} below threshold {}",
            report.fitted_rate, report.threshold
        )))
    }
}

fn oracle(c: &Common, count: u64, deviation: f64) -> Result<(), Failure> {
    let mut cfg = StepSolverConfig {
        tol: 1e-12,
        max_iter: 100_000,
        ..Default::default()
    };
    apply_overrides(&mut cfg, c)?;
    let report = run_oracle_suite(count, c.seed, c.threads, deviation, &cfg)?;
    if let Some(dir) = c.out.as_deref() {
        fs::create_dir_all(dir)?;
        RunManifest::new("oracle", c).write(dir)?;
        write_json(&dir.join("oracle.json"), &report)?;
    }
    println!(
        "{} instances, seed {}, max deviation {:.3e} (allowed {:.1e})",
        report.cases.len(),
        report.seed,
        report.max_deviation,
        deviation
    );
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Domain(
            "step solver disagrees with exhaustive search".into(),
        ))
    }
}
