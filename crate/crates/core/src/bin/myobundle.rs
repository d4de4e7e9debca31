//! Command-line front end: runs, refinement studies against the force-free
//! solution, the small-force steady-state comparison, and oracle output.
//!
//! Every command writes into `--out` (default `out/`): the manifest it was
//! invoked with, the effective configuration, and a `summary.json`.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use myobundle::config::{validate, AssumptionViolated, ConfigLoadError, Mode, SimulationConfig, ValidatedConfig};
use myobundle::density::{DensityGrid, Family};
use myobundle::evolution::{run, write_trajectory_csv, BundleState, RunOutcome, Termination};
use myobundle::oracles::{explicit_velocity, ExplicitSolution};
use myobundle::studies::{convergence_study, steady_study, StudyError, MIN_ORDER_DENSITY, MIN_ORDER_SMOOTH};

const EXIT_CHECK_FAILED: u8 = 8;
const EXIT_USAGE: u8 = 64;
const EXIT_CONFIG: u8 = 65;
const EXIT_IO: u8 = 74;

#[derive(Parser, Debug)]
#[command(name = "myobundle", version, about = "Simulate a contracting two-phase actomyosin bundle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate and run one simulation.
    Run(Common),
    /// Refine a force-free configuration and fit convergence orders against the explicit solution.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Number of refinement levels (grid and step halved per level).
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Run a pulled bundle and compare its length with the small-force steady state.
    Steady(Common),
    /// Write the explicit force-free solution on the configured grid.
    Oracle(Common),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    Force,
    Length,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    nl: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Comma-separated snapshot times.
    #[arg(long, value_delimiter = ',')]
    snapshots: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    picard: Option<Switch>,
}

impl Common {
    /// Loads the configuration file and applies the command-line overrides.
    fn load(&self) -> Result<SimulationConfig, CliError> {
        let mut c = SimulationConfig::from_path(&self.config)?;
        if let Some(m) = self.mode {
            c.mode = match m {
                ModeArg::Force => Mode::Force,
                ModeArg::Length => Mode::Length,
            };
        }
        let n = &mut c.numerics;
        if let Some(v) = self.ny {
            n.n_y = v;
        }
        if let Some(v) = self.nl {
            n.n_l = v;
        }
        if let Some(v) = self.dt {
            n.dt = v;
        }
        if let Some(v) = self.t_end {
            n.t_end = v;
        }
        if let Some(v) = &self.snapshots {
            n.snapshots = v.clone();
        }
        if let Some(p) = self.picard {
            n.picard = p == Switch::On;
        }
        Ok(c)
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigLoadError),
    #[error("{0}")]
    Assumption(#[from] AssumptionViolated),
    #[error("{0}")]
    Unsupported(String),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
    #[error("cannot write CSV {context}: {source}")]
    Csv { context: String, source: csv::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(ConfigLoadError::Io { .. }) => EXIT_IO,
            CliError::Config(ConfigLoadError::Parse { .. }) => EXIT_CONFIG,
            CliError::Assumption(_) | CliError::Unsupported(_) => 2,
            CliError::Io { .. } | CliError::Csv { .. } => EXIT_IO,
        }
    }
}

/// Output directory with error context on every write.
struct OutDir {
    root: PathBuf,
}

impl OutDir {
    fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|source| CliError::Io { context: format!("cannot create {}", root.display()), source })?;
        Ok(Self { root: root.to_path_buf() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn writer(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .map_err(|source| CliError::Io { context: format!("cannot create {}", parent.display()), source })?;
        }
        let file = File::create(&path).map_err(|source| CliError::Io { context: format!("cannot write {}", path.display()), source })?;
        Ok(BufWriter::new(file))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.writer(name)?;
        let io_err = |source| CliError::Io { context: format!("cannot write {name}"), source };
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(e.into()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(io_err)
    }

    fn csv(&self, name: &str, write: impl FnOnce(BufWriter<File>) -> csv::Result<()>) -> Result<(), CliError> {
        let w = self.writer(name)?;
        write(w).map_err(|source| CliError::Csv { context: name.to_string(), source })
    }
}

fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Echoes the invocation and the effective configuration.
fn write_inputs(out: &OutDir, command: &str, common: &Common, config: &SimulationConfig) -> Result<(), CliError> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": common.config,
        "mode": config.mode,
        "out": common.out,
        "snapshots": config.numerics.snapshots,
        "overrides": {
            "n_y": common.ny,
            "n_l": common.nl,
            "dt": common.dt,
            "t_end": common.t_end,
            "picard": common.picard.map(|p| p == Switch::On),
            "mode": common.mode,
        },
    });
    out.json("manifest.json", &manifest)?;
    out.json("config.json", config)
}

fn validated(config: SimulationConfig) -> Result<ValidatedConfig, CliError> {
    Ok(validate(config)?)
}

fn snapshot_label(requested: Option<f64>) -> String {
    requested.map_or_else(|| "final".to_string(), |t| format!("t{t:.6}"))
}

fn write_state(out: &OutDir, label: &str, state: &BundleState) -> Result<(), CliError> {
    out.csv(&format!("snapshots/{label}_rho_plus.csv"), |w| state.rho_plus.write_csv(w))?;
    out.csv(&format!("snapshots/{label}_rho_minus.csv"), |w| state.rho_minus.write_csv(w))?;
    out.csv(&format!("snapshots/{label}_velocity.csv"), |w| state.profile.write_csv(w))
}

fn write_outcome(out: &OutDir, outcome: &RunOutcome) -> Result<(), CliError> {
    out.csv("trajectory.csv", |w| write_trajectory_csv(&outcome.trajectory, w))?;
    for snap in &outcome.snapshots {
        write_state(out, &snapshot_label(snap.requested), &snap.state)?;
    }
    if let Some(state) = &outcome.final_state {
        write_state(out, "final", state)?;
    }
    Ok(())
}

fn run_summary(outcome: &RunOutcome) -> serde_json::Value {
    let last = outcome.trajectory.last();
    let snapshot_times: Vec<_> = outcome.snapshots.iter().map(|s| json!({ "requested": s.requested, "t": s.state.t })).collect();
    json!({
        "termination": outcome.termination,
        "exit_code": outcome.termination.exit_code(),
        "steps": outcome.trajectory.len().saturating_sub(1),
        "final_t": last.map(|r| r.t),
        "final_x": last.map(|r| r.x),
        "final_xdot": last.map(|r| r.xdot),
        "final_force": last.map(|r| r.force),
        "snapshots": snapshot_times,
        "warnings": outcome.warnings,
        "written_at_unix": unix_seconds(),
    })
}

fn report_termination(termination: &Termination) {
    match termination {
        Termination::Completed => eprintln!("completed"),
        other => eprintln!("terminated: {} ({})", other.name(), serde_json::to_string(other).unwrap_or_default()),
    }
}

fn cmd_run(common: &Common) -> Result<u8, CliError> {
    let config = common.load()?;
    let out = OutDir::create(&common.out)?;
    write_inputs(&out, "run", common, &config)?;
    let config = validated(config)?;
    let outcome = run(&config);
    write_outcome(&out, &outcome)?;
    out.json("summary.json", &run_summary(&outcome))?;
    report_termination(&outcome.termination);
    if let Some(r) = outcome.trajectory.last() {
        eprintln!("t = {}, X = {}, F = {:e}", r.t, r.x, r.force);
    }
    Ok(outcome.termination.exit_code() as u8)
}

/// The explicit solution only exists for zero force in force mode.
fn require_force_free(config: &SimulationConfig, what: &str) -> Result<(), CliError> {
    let free = config.mode == Mode::Force && config.numerics.time_grid().iter().all(|&t| config.force_at(t) == 0.0);
    if free {
        Ok(())
    } else {
        Err(CliError::Unsupported(format!("{what} needs force mode with F = 0 (the explicit solution is force-free)")))
    }
}

fn study_error(e: StudyError) -> Result<u8, CliError> {
    eprintln!("error: {e}");
    Ok(match e {
        StudyError::Invalid(v) => return Err(v.into()),
        StudyError::Terminated { termination, .. } => termination.exit_code() as u8,
        StudyError::TooFewLevels => EXIT_USAGE,
        StudyError::Oracle(_) => 2,
    })
}

fn cmd_convergence(common: &Common, levels: usize) -> Result<u8, CliError> {
    let config = common.load()?;
    let out = OutDir::create(&common.out)?;
    write_inputs(&out, "convergence", common, &config)?;
    validated(config.clone())?;
    require_force_free(&config, "convergence")?;
    let report = match convergence_study(&config, levels) {
        Ok(r) => r,
        Err(e) => return study_error(e),
    };
    out.csv("convergence.csv", |w| report.write_csv(w))?;
    let passes = report.passes();
    out.json(
        "summary.json",
        &json!({
            "orders": report.orders,
            "monotone": report.monotone,
            "min_order_smooth": MIN_ORDER_SMOOTH,
            "min_order_density": MIN_ORDER_DENSITY,
            "passes": passes,
            "written_at_unix": unix_seconds(),
        }),
    )?;
    let o = &report.orders;
    eprintln!(
        "orders: X {}, V+ {}, V- {}, rho+ {}, rho- {} ({})",
        o.x,
        o.v_plus,
        o.v_minus,
        o.rho_plus,
        o.rho_minus,
        if passes { "pass" } else { "below threshold" }
    );
    Ok(if passes { 0 } else { EXIT_CHECK_FAILED })
}

#[derive(Serialize)]
struct OverlayRow {
    t: f64,
    #[serde(rename = "X")]
    x: f64,
    #[serde(rename = "X_limit")]
    x_limit: f64,
}

fn cmd_steady(common: &Common) -> Result<u8, CliError> {
    let config = common.load()?;
    let out = OutDir::create(&common.out)?;
    write_inputs(&out, "steady", common, &config)?;
    let config = validated(config)?;
    if config.mode != Mode::Force {
        return Err(CliError::Unsupported("steady needs force mode".into()));
    }
    let (report, outcome) = match steady_study(&config) {
        Ok(r) => r,
        Err(e) => return study_error(e),
    };
    write_outcome(&out, &outcome)?;
    // both series live on the run's time grid
    let rows: Vec<OverlayRow> = outcome
        .trajectory
        .iter()
        .zip(&report.limit_trajectory)
        .map(|(r, &(_, x_limit))| OverlayRow { t: r.t, x: r.x, x_limit })
        .collect();
    out.csv("steady_overlay.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.json(
        "summary.json",
        &json!({
            "steady": report.steady,
            "t_end": report.t_end,
            "x_end": report.x_end,
            "rel_gap": report.rel_gap,
            "run": run_summary(&outcome),
        }),
    )?;
    eprintln!("X_inf = {}, X(t = {}) = {}, relative gap {:.3e}", report.steady.x_inf, report.t_end, report.x_end, report.rel_gap);
    report_termination(&outcome.termination);
    Ok(outcome.termination.exit_code() as u8)
}

#[derive(Serialize)]
struct OracleRow {
    t: f64,
    #[serde(rename = "X")]
    x: f64,
    #[serde(rename = "V_plus")]
    v_plus: f64,
    #[serde(rename = "V_minus")]
    v_minus: f64,
}

fn cmd_oracle(common: &Common) -> Result<u8, CliError> {
    let config = common.load()?;
    let out = OutDir::create(&common.out)?;
    write_inputs(&out, "oracle", common, &config)?;
    validated(config.clone())?;
    require_force_free(&config, "oracle")?;
    let sol = ExplicitSolution::new(&config);
    let times = config.numerics.time_grid();
    let rows: Vec<OracleRow> = times
        .iter()
        .map(|&t| {
            let (v_plus, v_minus) = explicit_velocity(t, &config.boundary, config.params.eta);
            OracleRow { t, x: sol.x_bar(t), v_plus, v_minus }
        })
        .collect();
    out.csv("oracle_trajectory.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })?;
    let n = &config.numerics;
    let mut labels = Vec::new();
    let requested = n.snapshots.iter().map(|&t| (snapshot_label(Some(t)), t));
    for (label, t) in requested.chain([("final".to_string(), n.t_end.max(0.0))]) {
        for family in [Family::Plus, Family::Minus] {
            let grid = DensityGrid::from_fn(n.n_y, n.n_l, config.bounds.l_upper, family, |y, l| sol.density(t, y, l, family));
            let side = match family {
                Family::Plus => "plus",
                Family::Minus => "minus",
            };
            out.csv(&format!("oracle/{label}_rho_{side}.csv"), |w| grid.write_csv(w))?;
        }
        labels.push(json!({ "label": label, "t": t }));
    }
    out.json("summary.json", &json!({ "snapshots": labels, "x_end": sol.x_bar(n.t_end.max(0.0)) }))?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Convergence { common, levels } => cmd_convergence(common, *levels),
        Command::Steady(c) => cmd_steady(c),
        Command::Oracle(c) => cmd_oracle(c),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            if let CliError::Assumption(v) = &e {
                eprintln!("error: assumption violated ({})", v.names().join(", "));
                for violation in &v.violations {
                    eprintln!("  {violation}");
                }
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
