//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 configuration or input schema
//! error, 3 runtime failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dml4ssi_core::dgp::{true_ade_oracle, true_gate_oracle, DgpConfig};
use dml4ssi_core::{Regime, RngStream};

use crate::config::{ConfigFileError, FileConfig};
use crate::harness::{self, Scenario, STAGE_FIT, STAGE_INFERENCE};
use crate::number::format_g17;
use crate::presets;
use crate::report;
use crate::trajectory_csv::{read_trajectory_file, write_trajectory_file};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable that overrides `scenario.base_seed`.
pub const SEED_ENV: &str = "DML4SSI_SEED";

#[derive(Debug, Parser)]
#[command(name = "dml4ssi", version, about = "Debiased treatment-effect estimation under shared-state interference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one trajectory from the configured model.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit nuisances on an auxiliary trajectory and estimate on another.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        aux: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a Monte Carlo experiment, or a sweep when `T_grid` is set.
    Experiment(ExperimentArgs),
    /// Print the true effect of the configured model.
    TrueEffect {
        #[arg(long)]
        config: PathBuf,
        /// Also estimate it by Monte Carlo with this many replications.
        #[arg(long, value_name = "R")]
        oracle: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List bundled presets, or print one.
    Presets { name: Option<String> },
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the number of replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Use the simulator's true nuisances instead of fitted forests.
    #[arg(long)]
    oracle: bool,
}

struct Failure {
    code: i32,
    message: String,
}

fn config_err(message: impl ToString) -> Failure {
    Failure { code: EXIT_CONFIG, message: message.to_string() }
}

fn runtime_err(message: impl ToString) -> Failure {
    Failure { code: EXIT_RUNTIME, message: message.to_string() }
}

impl From<ConfigFileError> for Failure {
    fn from(e: ConfigFileError) -> Self {
        match e {
            ConfigFileError::Io { .. } => runtime_err(e),
            _ => config_err(e),
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Simulate { config, out, seed } => simulate(&config, &out, seed),
        Command::Estimate { config, traj, aux, out } => estimate(&config, &traj, &aux, &out),
        Command::Experiment(args) => experiment(args),
        Command::TrueEffect { config, oracle, seed } => true_effect(&config, oracle, seed),
        Command::Presets { name } => list_presets(name.as_deref()),
    }
}

/// Flag first, then the environment, then the config file.
fn resolve_seed(flag: Option<u64>, config_seed: u64) -> Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| config_err(format!("{SEED_ENV}={v} is not a 64-bit unsigned integer"))),
        Err(_) => Ok(config_seed),
    }
}

fn load_scenario(config: &FileConfig, seed: Option<u64>) -> Result<Scenario, Failure> {
    let mut scenario = config.scenario()?;
    scenario.base_seed = resolve_seed(seed, scenario.base_seed)?;
    Ok(scenario)
}

fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = FileConfig::load(config)?;
    let scenario = load_scenario(&cfg, seed)?;
    let traj = scenario
        .dgp
        .simulate(scenario.t_len, &scenario.stage_stream(0, STAGE_INFERENCE))
        .map_err(config_err)?;
    write_trajectory_file(&traj, out).map_err(runtime_err)?;
    println!("wrote {} steps to {}", traj.len(), out.display());
    Ok(())
}

fn regime_of(dgp: &DgpConfig) -> (Regime, Option<dml4ssi_core::SwitchbackDesign>) {
    match dgp {
        DgpConfig::Ade(_) => (Regime::GeometricErgodic, None),
        DgpConfig::Switchback(c) => (Regime::MDependent { m: c.design.m }, Some(c.design)),
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn estimate(config: &Path, traj_path: &Path, aux_path: &Path, out: &Path) -> Result<(), Failure> {
    let cfg = FileConfig::load(config)?;
    let scenario = load_scenario(&cfg, None)?;
    let (regime, design) = regime_of(&scenario.dgp);
    if same_file(traj_path, aux_path) {
        eprintln!(
            "warning: auxiliary and inference trajectories are the same file; \
             nuisance estimates are not independent of the inference sample"
        );
    }
    let traj = read_trajectory_file(traj_path, regime, design).map_err(config_err)?;
    let aux = read_trajectory_file(aux_path, regime, design).map_err(config_err)?;
    let nuisances = harness::fit_nuisances(
        &scenario,
        (!scenario.oracle_nuisances).then_some(&aux),
        scenario.stage_stream(0, STAGE_FIT),
    );
    let outcomes = harness::estimate_all(&scenario, &traj, &nuisances);
    let mut text = String::from("estimator,variance,psi_hat,sigma2_hat,degenerate,ci_low,ci_high,alpha,T\n");
    let mut failed = Vec::new();
    for o in &outcomes {
        match &o.report {
            Ok(r) => text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                o.estimator,
                o.variance,
                format_g17(r.psi_hat),
                format_g17(r.sigma2_hat),
                r.degenerate,
                format_g17(r.ci_low),
                format_g17(r.ci_high),
                format_g17(r.alpha),
                r.t_len
            )),
            Err(e) => failed.push(format!("{}: {e}", o.estimator)),
        }
    }
    std::fs::write(out, text).map_err(|e| runtime_err(format!("{}: {e}", out.display())))?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(runtime_err(format!("estimation failed for {}", failed.join("; "))))
    }
}

fn experiment(args: ExperimentArgs) -> Result<(), Failure> {
    let cfg = match (&args.config, &args.preset) {
        (Some(path), _) => FileConfig::load(path)?,
        (None, Some(name)) => {
            let text = presets::preset(name).ok_or_else(|| {
                let names: Vec<&str> = presets::PRESETS.iter().map(|(n, _)| *n).collect();
                Failure { code: EXIT_USAGE, message: format!("unknown preset `{name}` (available: {})", names.join(", ")) }
            })?;
            FileConfig::parse(text)?
        }
        (None, None) => unreachable!("clap requires --config or --preset"),
    };
    let mut scenario = load_scenario(&cfg, args.seed)?;
    if let Some(j) = args.jobs {
        scenario.jobs = j;
    }
    if let Some(r) = args.reps {
        scenario.replications = r;
    }
    scenario.oracle_nuisances |= args.oracle;
    scenario.validate().map_err(config_err)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match &cfg.scenario.t_grid {
        Some(grid) => {
            let reports = harness::coverage_sweep(&scenario, grid).map_err(runtime_err)?;
            report::emit_sweep(&reports, &args.out_dir).map_err(runtime_err)?;
            for r in &reports {
                let _ = out.write_all(report::summary_csv(&r.summaries).as_bytes());
            }
        }
        None => {
            let r = harness::run_experiment(&scenario).map_err(runtime_err)?;
            report::emit_csv(&r, &args.out_dir).map_err(runtime_err)?;
            let _ = out.write_all(report::summary_csv(&r.summaries).as_bytes());
        }
    }
    Ok(())
}

fn true_effect(config: &Path, oracle: Option<usize>, seed: Option<u64>) -> Result<(), Failure> {
    let cfg = FileConfig::load(config)?;
    let scenario = load_scenario(&cfg, seed)?;
    let truth = scenario.dgp.truth(scenario.t_len);
    println!("psi_star = {}", format_g17(truth.psi_star));
    if let Some(reps) = oracle {
        if reps < 2 {
            return Err(config_err("--oracle needs at least 2 replications"));
        }
        let stream = RngStream::new(scenario.base_seed, u64::MAX);
        let o = match &scenario.dgp {
            DgpConfig::Ade(c) => true_ade_oracle(c, scenario.t_len, reps, stream),
            DgpConfig::Switchback(c) => true_gate_oracle(c, scenario.t_len, reps, stream),
        };
        println!("oracle = {} (se {}, R = {reps}, T = {})", format_g17(o.psi_star), format_g17(o.se()), scenario.t_len);
    }
    Ok(())
}

fn list_presets(name: Option<&str>) -> Result<(), Failure> {
    match name {
        None => {
            for (n, _) in presets::PRESETS {
                println!("{n}");
            }
            Ok(())
        }
        Some(n) => {
            let text = presets::preset(n)
                .ok_or_else(|| Failure { code: EXIT_USAGE, message: format!("unknown preset `{n}`") })?;
            print!("{text}");
            Ok(())
        }
    }
}
