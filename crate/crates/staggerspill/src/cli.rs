//! Command-line front end. Flags override the configuration file, which
//! overrides built-in defaults; every setting is validated before any work.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use staggerspill_core::exposure::exposure_path;
use staggerspill_core::{estimate, ExposurePath, InferenceReport, PanelDataset};

use crate::config::{Command, FirstStageName, KernelName, RunConfig, RunRecord};
use crate::error::{CliError, Result};
use crate::mc::{parallel_sums, run_parallel, thread_pool};
use crate::network_io::{load_network, Network};
use crate::output;
use crate::panel_io::read_panel;

#[derive(Debug, Parser)]
#[command(name = "staggerspill", version, about = "Staggered DID with network spillovers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Estimate DSE, CSE, DTE and diagnostics with spatial HAC intervals.
    Estimate(CommonArgs),
    /// Run the Monte Carlo designs and write performance tables.
    Simulate(SimulateArgs),
    /// Exposure-ignorant DID and group-time ATT on the admissible set.
    Benchmark(CommonArgs),
    /// Write raw exposure, state and dose for every unit and period.
    Exposure(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Long-format panel CSV.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    /// Edge list or distance matrix CSV; omitted means a line network.
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// TOML configuration, or a previous run.json.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelName>,
    #[arg(long)]
    pub min_cell: Option<usize>,
    /// Anticipation horizon.
    #[arg(long)]
    pub delta: Option<usize>,
    #[arg(long)]
    pub event_max: Option<usize>,
    #[arg(long, value_enum)]
    pub first_stage: Option<FirstStageName>,
    /// Neighbour radius for a distance-matrix network.
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long)]
    pub row_normalize: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Design name; repeatable.
    #[arg(long)]
    pub design: Vec<String>,
    /// Number of units; repeatable.
    #[arg(long)]
    pub n: Vec<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// `shuffled` or a 12-character block pattern.
    #[arg(long)]
    pub placement: Option<String>,
    #[arg(long)]
    pub keep_replications: bool,
}

fn apply(cfg: &mut RunConfig, a: &CommonArgs) {
    macro_rules! set {
        ($flag:expr => $($target:tt)+) => {
            if let Some(v) = $flag.clone() {
                $($target)+ = v.into();
            }
        };
    }
    set!(a.panel => cfg.panel.path);
    set!(a.network => cfg.network.path);
    set!(a.out => cfg.run.out);
    set!(a.seed => cfg.run.seed);
    set!(a.threads => cfg.run.threads);
    set!(a.alpha => cfg.inference.alpha);
    set!(a.bandwidth => cfg.inference.bandwidth);
    set!(a.kernel => cfg.inference.kernel);
    set!(a.min_cell => cfg.estimators.min_cell);
    set!(a.delta => cfg.estimators.delta);
    set!(a.event_max => cfg.estimators.event_max);
    set!(a.first_stage => cfg.estimators.first_stage);
    set!(a.cutoff => cfg.network.cutoff);
    if a.row_normalize {
        cfg.network.row_normalize = true;
    }
}

/// Effective configuration for a parsed command line.
pub fn resolve(sub: &Sub) -> Result<(Command, RunConfig)> {
    let (command, common) = match sub {
        Sub::Estimate(a) => (Command::Estimate, a),
        Sub::Simulate(a) => (Command::Simulate, &a.common),
        Sub::Benchmark(a) => (Command::Benchmark, a),
        Sub::Exposure(a) => (Command::Exposure, a),
    };
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    apply(&mut cfg, common);
    if let Sub::Simulate(a) = sub {
        if !a.design.is_empty() {
            cfg.simulate.designs = a.design.clone();
        }
        if !a.n.is_empty() {
            cfg.simulate.sizes = a.n.clone();
        }
        if let Some(r) = a.reps {
            cfg.simulate.reps = r;
        }
        if let Some(p) = &a.placement {
            cfg.simulate.placement = p.clone();
        }
        if a.keep_replications {
            cfg.simulate.keep_replications = true;
        }
    }
    Ok((command, cfg.resolve(command)?))
}

struct Loaded {
    ds: PanelDataset,
    network: Network,
    path: ExposurePath,
}

fn load(cfg: &RunConfig) -> Result<Loaded> {
    let panel = cfg
        .panel
        .path
        .as_deref()
        .ok_or_else(|| CliError::validation("a panel file is required (--panel)"))?;
    // Check the network file before the panel so a missing network is reported as such.
    if let Some(p) = &cfg.network.path {
        if !p.exists() {
            return Err(CliError::validation(format!("network not found: {}", p.display())));
        }
    }
    let ds = read_panel(panel, &cfg.panel, cfg.estimators.delta)?;
    let network = load_network(&cfg.network, &ds)?;
    let path = exposure_path(&ds, &network.weights, &cfg.exposure_config()?)?;
    Ok(Loaded { ds, network, path })
}

fn estimate_and_infer(
    cfg: &RunConfig,
    data: &Loaded,
    pool: &rayon::ThreadPool,
) -> Result<(staggerspill_core::Estimates, InferenceReport)> {
    if cfg.estimators.first_stage == Some(FirstStageName::Structured) && !data.ds.has_basis() {
        return Err(CliError::validation(
            "the structured first stage needs basis columns in the panel",
        ));
    }
    let est = estimate(&data.ds, &data.path, &cfg.estimation_config())?;
    let inf = pool.install(|| {
        staggerspill_core::inference::infer_with(
            &data.ds,
            &data.path,
            &est,
            &cfg.inference_config(),
            &data.network.distance,
            &parallel_sums,
        )
    })?;
    Ok((est, inf))
}

fn write_run(dir: &Path, command: Command, cfg: &RunConfig) -> Result<()> {
    let record = RunRecord {
        command,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
    };
    output::write_json(&dir.join("run.json"), &record)
}

/// Execute one resolved command, writing every artifact under `cfg.run.out`.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<String> {
    let pool = thread_pool(cfg.run.threads)?;
    let data = match command {
        Command::Simulate => None,
        _ => Some(load(cfg)?),
    };
    let dir = cfg.run.out.as_path();
    std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    let summary = match (command, &data) {
        (Command::Estimate, Some(d)) => {
            let (est, inf) = estimate_and_infer(cfg, d, &pool)?;
            output::write_estimates(dir, &d.ds, &est, Some(&inf))?;
            output::write_support(dir, &d.ds, &est, &cfg.exposure_config()?)?;
            format!(
                "{} records for {} units over {} periods",
                est.records().len() + est.event_time.len(),
                d.ds.n_units(),
                d.ds.n_periods()
            )
        }
        (Command::Benchmark, Some(d)) => {
            let (est, inf) = estimate_and_infer(cfg, d, &pool)?;
            output::write_benchmark(dir, &d.ds, &est, Some(&inf))?;
            let rows = output::benchmark_rows(&d.ds, &est, Some(&inf));
            format!("{} benchmark rows", rows.len())
        }
        (Command::Exposure, Some(d)) => {
            output::write_exposure(dir, &d.ds, &d.path, &cfg.exposure_config()?)?;
            format!("exposure for {} units", d.ds.n_units())
        }
        (Command::Simulate, _) => {
            let mut reports = Vec::new();
            let mut runs = Vec::new();
            for design in cfg.designs()? {
                for &n in &cfg.simulate.sizes {
                    let mc = cfg.mc_config(design, n)?;
                    let (report, results) = run_parallel(&mc, &pool)?;
                    reports.push(report);
                    runs.push(results);
                }
            }
            output::write_mc(dir, &reports)?;
            if cfg.simulate.keep_replications {
                let pairs: Vec<_> = reports.iter().zip(runs.iter().map(Vec::as_slice)).collect();
                output::write_replications(dir, &pairs)?;
            }
            staggerspill_core::simulate::format_tables(&reports)
        }
        _ => unreachable!("every non-simulation command loads data"),
    };
    write_run(dir, command, cfg)?;
    Ok(summary)
}

/// Parse and run without printing; help and version requests come back as
/// their rendered text.
pub fn try_main<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => return Ok(e.to_string()),
        Err(e) => return Err(CliError::validation(e.to_string().trim().to_string())),
    };
    let (command, cfg) = resolve(&cli.command)?;
    execute(command, &cfg)
}

/// Parse, run and report; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match try_main(args) {
        Ok(text) => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.kind.exit_code()
        }
    }
}
