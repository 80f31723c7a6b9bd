//! Command-line front end: argument parsing, artifact layout and manifests.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::bench::{bench_file_name, run_bench, write_bench_series, write_bench_summary};
use crate::config::{parse_alphas, parse_grid, parse_sizes, Engine, RunConfig};
use crate::dtwa::{Axis, STEP_TOL_FACTOR};
use crate::error::{Error, Result};
use crate::exact::{evolve_states, husimi_csv, initial_product_state};
use crate::gap::{gap_scaling, GapScaling, GAP_COLUMNS};
use crate::phase::{
    boundary_fits, cell_lattice, cell_model, cells, run_cell, run_sweep, run_sweep_to_dir, scaling_fits, sweep_boundaries,
    write_boundaries_csv, write_summary_csv, CellResult, SCHEMA_VERSION,
};
use crate::series::fmt_num;

pub const WORKERS_ENV: &str = "XXZ_WORKERS";
pub const BUILD_ID: &str = env!("XXZ_BUILD_ID");

#[derive(Debug, Parser)]
#[command(name = "xxz", version, about = "Spin squeezing dynamics in power-law XXZ lattices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve a single parameter point and write its time series.
    Simulate(SimulateArgs),
    /// Sweep alpha, size and J_z/J_perp; locate phase boundaries.
    Sweep(CommonArgs),
    /// Sweep sizes and fit xi2_opt = a / N^nu.
    Scaling(ScalingArgs),
    /// Spin-wave spectral gap versus lattice size.
    Gap(CommonArgs),
    /// Compare DTWA against exact evolution.
    Bench(CommonArgs),
    /// Sweep filling fractions of randomly diluted lattices.
    Dilute(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Sweep(_) => "sweep",
            Command::Scaling(_) => "scaling",
            Command::Gap(_) => "gap",
            Command::Bench(_) => "bench",
            Command::Dilute(_) => "dilute",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a) => &a.common,
            Command::Scaling(a) => &a.common,
            Command::Sweep(a) | Command::Gap(a) | Command::Bench(a) | Command::Dilute(a) => a,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON run configuration or a manifest from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "xxz-out")]
    pub out: PathBuf,
    /// dtwa, exact, oat or ising.
    #[arg(long)]
    pub engine: Option<String>,
    #[arg(long)]
    pub dims: Option<usize>,
    /// Linear lattice sizes, comma separated.
    #[arg(long, alias = "sizes")]
    pub size: Option<String>,
    /// periodic or open.
    #[arg(long)]
    pub boundary: Option<String>,
    /// Decay exponents: list, `start:stop:step` grid, or `inf`.
    #[arg(long, alias = "alphas")]
    pub alpha: Option<String>,
    /// Anisotropy values: list or `start:stop:step` grid.
    #[arg(long, allow_hyphen_values = true)]
    pub jz_over_jperp: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub jperp: Option<f64>,
    /// Fixed time window in units of 1/|J_perp|.
    #[arg(long)]
    pub t_max: Option<f64>,
    /// Time window in units of 1/|J_z - J_perp|.
    #[arg(long)]
    pub tau_max: Option<f64>,
    /// Number of output times.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Integrator tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Filling fractions in (0, 1].
    #[arg(long, alias = "fillings")]
    pub filling: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Husimi Q on an `NTHETA,NPHI` sphere grid at the optimal time (exact engine).
    #[arg(long)]
    pub husimi: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ScalingArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Weight fits by the statistical errors of xi2_opt.
    #[arg(long)]
    pub weighted: bool,
}

/// Settings outside `RunConfig` that influence artifacts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommandOptions {
    pub husimi: Option<[usize; 2]>,
    pub weighted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub config: RunConfig,
    pub options: CommandOptions,
    pub build_id: String,
    pub workers: usize,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
}

/// Failure report printed to stderr as JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const INVALID: i32 = 3;
    pub const CAPACITY: i32 = 4;
    pub const INTEGRATION: i32 = 5;
    pub const IO: i32 = 6;
    pub const ANALYSIS: i32 = 7;
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let root = match &e {
            Error::Trajectory { source, .. } => source.as_ref(),
            other => other,
        };
        let exit_code = match root {
            Error::InvalidArgument(_) | Error::Parse(_) | Error::DimensionMismatch { .. } => exit::INVALID,
            Error::Capacity { .. } => exit::CAPACITY,
            Error::IntegrationFailure { .. } | Error::Trajectory { .. } => exit::INTEGRATION,
            Error::Io(_) => exit::IO,
            Error::DegenerateMeanSpin { .. } | Error::BoundaryNotFound(_) => exit::ANALYSIS,
        };
        CliError {
            kind: e.kind().to_string(),
            message: e.to_string(),
            exit_code,
        }
    }
}

impl CliError {
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self }).to_string()
    }
}

fn load_config(path: &Path) -> Result<(RunConfig, CommandOptions)> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value.get("config") {
        Some(cfg) => {
            let options = value
                .get("options")
                .map(|o| serde_json::from_value(o.clone()))
                .transpose()?
                .unwrap_or_default();
            Ok((serde_json::from_value(cfg.clone())?, options))
        }
        None => Ok((serde_json::from_value(value)?, CommandOptions::default())),
    }
}

impl CommonArgs {
    /// Start from `--config` when given, then apply explicit flags.
    pub fn resolve(&self) -> Result<(RunConfig, CommandOptions)> {
        let (mut c, options) = match &self.config {
            Some(p) => load_config(p)?,
            None => (RunConfig::default(), CommandOptions::default()),
        };
        if let Some(v) = &self.engine {
            c.engine = v.parse()?;
        }
        if let Some(v) = self.dims {
            c.dims = v;
        }
        if let Some(v) = &self.size {
            c.sizes = parse_sizes(v)?;
        }
        if let Some(v) = &self.boundary {
            c.boundary = v.parse()?;
        }
        if let Some(v) = &self.alpha {
            c.alphas = parse_alphas(v)?;
        }
        if let Some(v) = &self.jz_over_jperp {
            c.jz_over_jperp = parse_grid(v)?;
        }
        if let Some(v) = self.jperp {
            c.j_perp = v;
        }
        if let Some(v) = self.t_max {
            c.t_max = Some(v);
        }
        if let Some(v) = self.tau_max {
            c.tau_max = Some(v);
        }
        if let Some(v) = self.points {
            c.points = v;
        }
        if let Some(v) = self.trajectories {
            c.trajectories = Some(v);
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.tol {
            c.tol = Some(v);
        }
        if let Some(v) = &self.filling {
            c.fillings = parse_grid(v)?;
        }
        Ok((c, options))
    }
}

fn parse_husimi(text: &str) -> Result<[usize; 2]> {
    let v = parse_sizes(text)?;
    match v.as_slice() {
        [a, b] if *a >= 2 && *b >= 1 => Ok([*a, *b]),
        _ => Err(Error::Parse(format!("husimi grid `{text}` must be NTHETA,NPHI with NTHETA >= 2"))),
    }
}

/// Parsed command with its resolved configuration.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: &'static str,
    pub config: RunConfig,
    pub options: CommandOptions,
    pub out: PathBuf,
}

pub fn resolve(cli: &Cli) -> Result<Invocation> {
    let common = cli.command.common();
    let (config, mut options) = common.resolve()?;
    match &cli.command {
        Command::Simulate(a) => {
            if let Some(h) = &a.husimi {
                options.husimi = Some(parse_husimi(h)?);
            }
        }
        Command::Scaling(a) => {
            if a.weighted {
                options.weighted = true;
            }
        }
        _ => {}
    }
    Ok(Invocation {
        command: cli.command.name(),
        config,
        options,
        out: common.out.clone(),
    })
}

fn rel(name: &str) -> String {
    name.to_string()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn single_cell(config: &RunConfig) -> Result<crate::phase::CellSpec> {
    let all = cells(config);
    match all.as_slice() {
        [one] => Ok(*one),
        _ => Err(Error::invalid(format!(
            "simulate takes exactly one alpha, size, J_z/J_perp and filling; got {} combinations",
            all.len()
        ))),
    }
}

#[derive(Serialize)]
struct SeriesMeta<'a> {
    engine: Engine,
    n_spins: usize,
    dims: usize,
    size: usize,
    boundary: String,
    filling: f64,
    alpha: String,
    j_perp: f64,
    j_z: f64,
    master_seed: u64,
    seed: u64,
    trajectories: Option<usize>,
    integrator: &'a str,
    tolerance: f64,
    step_tolerance: Option<f64>,
}

fn simulate(inv: &Invocation) -> Result<Vec<String>> {
    let config = &inv.config;
    config.validate()?;
    let cell = single_cell(config)?;
    if inv.options.husimi.is_some() && config.engine != Engine::Exact {
        return Err(Error::invalid("husimi output needs the exact engine"));
    }
    let (series, summary, traj) = run_cell(config, &cell)?;
    let lattice = cell_lattice(config, &cell)?;
    let model = cell_model(config, &cell, &lattice);
    let mut outputs = Vec::new();

    series.write_csv(fs::File::create(inv.out.join("series.csv"))?)?;
    outputs.push(rel("series.csv"));

    let row = CellResult {
        spec: cell,
        n_spins: lattice.len(),
        engine: config.engine,
        seed: cell.seed(config.seed),
        trajectories: traj,
        summary: Some(summary.clone()),
        error: None,
    };
    write_summary_csv(&inv.out.join("summary.csv"), &[&row])?;
    outputs.push(rel("summary.csv"));

    let (integrator, step_tolerance) = match config.engine {
        Engine::Dtwa => ("dopri5", Some(config.tolerance() * STEP_TOL_FACTOR)),
        Engine::Exact => ("lanczos", None),
        Engine::Oat | Engine::Ising => ("closed-form", None),
    };
    let meta = SeriesMeta {
        engine: config.engine,
        n_spins: lattice.len(),
        dims: config.dims,
        size: cell.size,
        boundary: config.boundary.to_string(),
        filling: cell.filling,
        alpha: cell.alpha.to_string(),
        j_perp: model.j_perp,
        j_z: model.j_z,
        master_seed: config.seed,
        seed: cell.seed(config.seed),
        trajectories: traj,
        integrator,
        tolerance: config.tolerance(),
        step_tolerance,
    };
    write_json(&inv.out.join("series.json"), &meta)?;
    outputs.push(rel("series.json"));

    if let Some([nt, np]) = inv.options.husimi {
        let state0 = initial_product_state(lattice.len(), Axis::X)?;
        let grid: Vec<f64> = if summary.t_opt > 0.0 {
            vec![0.0, summary.t_opt]
        } else {
            vec![0.0]
        };
        let mut at_opt = None;
        evolve_states(&model, &state0, &grid, config.tolerance(), |k, _, s| {
            if k + 1 == grid.len() {
                at_opt = Some(s.clone());
            }
        })?;
        let state = at_opt.ok_or_else(|| Error::invalid("no state at the optimal time"))?;
        fs::write(inv.out.join("husimi.csv"), husimi_csv(&state, nt, np)?)?;
        outputs.push(rel("husimi.csv"));
    }
    Ok(outputs)
}

fn sweep(inv: &Invocation) -> Result<Vec<String>> {
    let (result, mut outputs) = run_sweep_to_dir(&inv.config, &inv.out)?;
    let boundaries = sweep_boundaries(&result);
    write_boundaries_csv(&inv.out.join("boundaries.csv"), &boundaries)?;
    write_json(&inv.out.join("boundary_fits.json"), &boundary_fits(&boundaries))?;
    outputs.push(rel("boundaries.csv"));
    outputs.push(rel("boundary_fits.json"));
    Ok(outputs)
}

fn scaling(inv: &Invocation) -> Result<Vec<String>> {
    let (result, mut outputs) = run_sweep_to_dir(&inv.config, &inv.out)?;
    let all: Vec<&CellResult> = result.cells.iter().collect();
    write_summary_csv(&inv.out.join("scaling.csv"), &all)?;
    write_json(&inv.out.join("fits.json"), &scaling_fits(&result, inv.options.weighted))?;
    outputs.push(rel("scaling.csv"));
    outputs.push(rel("fits.json"));
    Ok(outputs)
}

fn dilute(inv: &Invocation) -> Result<Vec<String>> {
    let result = run_sweep(&inv.config)?;
    let all: Vec<&CellResult> = result.cells.iter().collect();
    write_summary_csv(&inv.out.join("dilute.csv"), &all)?;
    Ok(vec![rel("dilute.csv")])
}

fn bench(inv: &Invocation) -> Result<Vec<String>> {
    let cases = run_bench(&inv.config)?;
    write_bench_summary(&inv.out.join("bench_summary.csv"), &cases)?;
    let mut outputs = vec![rel("bench_summary.csv")];
    for c in &cases {
        let name = bench_file_name(c.spec.alpha, c.spec.jz_over_jperp);
        write_bench_series(&inv.out.join(&name), c)?;
        outputs.push(name);
    }
    Ok(outputs)
}

fn gap(inv: &Invocation) -> Result<Vec<String>> {
    let config = &inv.config;
    config.validate_geometry()?;
    if config.alphas.is_empty() {
        return Err(Error::invalid("no alpha values given"));
    }
    let results: Vec<GapScaling> = config
        .alphas
        .iter()
        .map(|&a| gap_scaling(&config.sizes, config.dims, a, config.j_perp))
        .collect::<Result<_>>()?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(inv.out.join("gap.csv"))?;
    w.write_record(GAP_COLUMNS)?;
    for g in &results {
        for r in &g.rows {
            w.write_record([
                r.size.to_string(),
                fmt_num(r.epsilon),
                g.exponent.to_string(),
                g.dims.to_string(),
                fmt_num(r.energy),
                fmt_num(r.gap),
                g.slope().map(fmt_num).unwrap_or_default(),
                g.gamma.map(fmt_num).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    write_json(&inv.out.join("gap_fits.json"), &results)?;
    Ok(vec![rel("gap.csv"), rel("gap_fits.json")])
}

/// Run a resolved command on `workers` threads and write its manifest.
pub fn execute(inv: &Invocation, workers: usize) -> Result<Manifest> {
    let start = Instant::now();
    fs::create_dir_all(&inv.out).map_err(|e| Error::Io(format!("{}: {e}", inv.out.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let outputs = pool.install(|| match inv.command {
        "simulate" => simulate(inv),
        "sweep" => sweep(inv),
        "scaling" => scaling(inv),
        "gap" => gap(inv),
        "bench" => bench(inv),
        "dilute" => dilute(inv),
        other => Err(Error::invalid(format!("unknown command `{other}`"))),
    })?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        command: inv.command.to_string(),
        config: inv.config.clone(),
        options: inv.options.clone(),
        build_id: BUILD_ID.to_string(),
        workers,
        wall_time_s: start.elapsed().as_secs_f64(),
        outputs,
    };
    write_json(&inv.out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Worker count from the environment, defaulting to the available cores.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::invalid(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

/// Full entry point: returns the process exit code. Errors go to stderr as
/// a single JSON object.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return exit::OK;
            }
            let err = CliError {
                kind: "usage".into(),
                message: e
                    .to_string()
                    .lines()
                    .next()
                    .unwrap_or_default()
                    .trim_start_matches("error: ")
                    .to_string(),
                exit_code: exit::USAGE,
            };
            eprintln!("{}", err.to_json());
            return err.exit_code;
        }
    };
    let result = workers_from_env().and_then(|w| resolve(&cli).and_then(|inv| execute(&inv, w)));
    match result {
        Ok(_) => exit::OK,
        Err(e) => {
            let err = CliError::from(e);
            eprintln!("{}", err.to_json());
            err.exit_code
        }
    }
}
