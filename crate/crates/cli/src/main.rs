//! `epm`: command-line front end for the explicit penalty particle solver.
//!
//! Every subcommand is turned into the same flat TOML table a config file would hold,
//! so flags and files go through one validation path. Thread count comes from
//! `RAYON_NUM_THREADS`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use epm_core::config::parse_config;
use epm_core::runner::{self, RunOutcome};
use epm_core::Preset;
use toml::{Table, Value};

/// Exit status when a run diverged. Its diagnostics and partial outputs are still written.
const EXIT_UNSTABLE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "epm", version, about = "Explicit penalty particle method with generalized SPH/MPS operators")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// Output directory (default: `out/<experiment>`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized studies
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Weight triple: g-s, s-c, s-q, s-w or m
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Write a snapshot every this many steps
    #[arg(long, global = true)]
    snapshots: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Periodic Taylor-Green vortex, optionally as a convergence sweep
    TaylorGreen(TaylorGreenArgs),
    /// Lid-driven cavity at Re = 100 against the bundled reference profiles
    Cavity(CavityArgs),
    /// Reduced 2-D dam break with right-wall pressure sensors
    Dambreak(DambreakArgs),
    /// Laplacian truncation error on (perturbed) lattices
    Truncation(TruncationArgs),
    /// Minimize the weight-function objective over polynomials of degree n
    OptimizeWeight(OptimizeArgs),
    /// Run a TOML configuration file
    Run {
        config: PathBuf,
    },
}

#[derive(Args, Debug)]
struct TaylorGreenArgs {
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    h_factor: Option<f64>,
    #[arg(long)]
    end_time: Option<f64>,
    /// Skip the pressure recalculation step
    #[arg(long)]
    no_recalc: bool,
    /// Run the sweep h = C_m dx^(1/m) over the given spacings instead of one resolution
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    convergence: Option<Vec<f64>>,
    /// Exponent m of the sweep
    #[arg(long, default_value_t = 2)]
    m: u32,
}

#[derive(Args, Debug)]
struct CavityArgs {
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    h_factor: Option<f64>,
    #[arg(long)]
    max_time: Option<f64>,
}

#[derive(Args, Debug)]
struct DambreakArgs {
    #[arg(long)]
    dx: Option<f64>,
    #[arg(long)]
    end_time: Option<f64>,
    /// Sensor reference CSV (time, p1, p2, ...) to compute relative errors against
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TruncationArgs {
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    h_factors: Option<Vec<f64>>,
    #[arg(long)]
    eps_max: Option<f64>,
    /// Number of seeds, counted up from --seed
    #[arg(long)]
    seeds: Option<usize>,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    dim: usize,
}

fn put<V: Into<Value>>(table: &mut Table, key: &str, value: Option<V>) {
    if let Some(v) = value {
        table.insert(key.to_string(), v.into());
    }
}

fn float_list(v: Option<Vec<f64>>) -> Option<Value> {
    v.map(|v| Value::Array(v.into_iter().map(Value::Float).collect()))
}

fn apply_common(table: &mut Table, common: &Common) -> Result<()> {
    put(table, "preset", common.preset.clone());
    if let Some(seed) = common.seed {
        table.insert("seed".into(), Value::Integer(i64::try_from(seed).context("--seed is too large")?));
    }
    if let Some(every) = common.snapshots {
        table.insert("snapshots".into(), Value::Integer(i64::try_from(every).context("--snapshots is too large")?));
    }
    Ok(())
}

fn subcommand_table(experiment: &str, command: &Command) -> Table {
    let mut t = Table::new();
    t.insert("experiment".into(), experiment.into());
    match command {
        Command::TaylorGreen(a) => {
            put(&mut t, "dx", a.dx);
            put(&mut t, "h_factor", a.h_factor);
            put(&mut t, "end_time", a.end_time);
            if a.no_recalc {
                t.insert("pressure_recalc".into(), false.into());
            }
        }
        Command::Cavity(a) => {
            put(&mut t, "dx", a.dx);
            put(&mut t, "h_factor", a.h_factor);
            put(&mut t, "max_time", a.max_time);
        }
        Command::Dambreak(a) => {
            put(&mut t, "dx", a.dx);
            put(&mut t, "end_time", a.end_time);
            put(&mut t, "reference", a.reference.as_ref().map(|p| p.display().to_string()));
        }
        Command::Truncation(a) => {
            put(&mut t, "h_factors", float_list(a.h_factors.clone()));
            put(&mut t, "eps_max", a.eps_max);
            put(&mut t, "seeds", a.seeds.map(|s| s as i64));
        }
        Command::OptimizeWeight(a) => {
            t.insert("n".into(), (a.n as i64).into());
            t.insert("dim".into(), (a.dim as i64).into());
        }
        Command::Run { .. } => {}
    }
    t
}

fn run_table(table: Table, common: &Common) -> Result<RunOutcome> {
    let text = toml::to_string(&table).context("serializing the configuration")?;
    let config = parse_config(&text)?;
    let out = output_dir(common.out.as_deref(), config.out.as_deref(), config.experiment.tag());
    Ok(runner::run(&config, &out)?)
}

fn output_dir(flag: Option<&Path>, file: Option<&Path>, experiment: &str) -> PathBuf {
    flag.or(file).map(Path::to_path_buf).unwrap_or_else(|| Path::new("out").join(experiment))
}

fn execute(cli: &Cli) -> Result<RunOutcome> {
    let common = &cli.common;
    match &cli.command {
        Command::TaylorGreen(TaylorGreenArgs { convergence: Some(dxs), m, .. }) => {
            let preset: Preset = match &common.preset {
                Some(p) => p.parse()?,
                None => Preset::GeneralizedSpike,
            };
            let out = output_dir(common.out.as_deref(), None, "taylor-green-convergence");
            Ok(runner::run_convergence(preset, dxs, *m, &out)?)
        }
        Command::Run { config } => {
            let text = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
            // Validate the file as written first so errors carry its line numbers.
            parse_config(&text).with_context(|| format!("in {}", config.display()))?;
            let mut table: Table = text.parse().with_context(|| format!("parsing {}", config.display()))?;
            apply_common(&mut table, common)?;
            run_table(table, common)
        }
        command => {
            let experiment = match command {
                Command::TaylorGreen(_) => "taylor-green",
                Command::Cavity(_) => "cavity",
                Command::Dambreak(_) => "dambreak",
                Command::Truncation(_) => "truncation",
                Command::OptimizeWeight(_) => "optimize-weight",
                Command::Run { .. } => unreachable!("handled above"),
            };
            let mut table = subcommand_table(experiment, command);
            apply_common(&mut table, common)?;
            run_table(table, common)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                log::debug!("wrote {}", f.display());
            }
            if outcome.ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("run became unstable; diagnostics were written to the output directory");
                ExitCode::from(EXIT_UNSTABLE)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
