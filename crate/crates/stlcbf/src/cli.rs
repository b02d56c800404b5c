//! Command-line interface: `train`, `rollout`, `eval` and `plot-data`.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use stlcbf_core::controller::{self, CurveRow, EvalSummary, Executor, Policy, PolicyConfig, RolloutRecord, TrainOptions};
use stlcbf_core::scenario::{Ablation, Scenario, ScenarioConfig};

use crate::checkpoint::Checkpoint;
use crate::config;
use crate::error::CliError;
use crate::exec::Parallel;
use crate::output::{self, Meta};
use crate::plotdata::{plot_data, PlotKind};

#[derive(Debug, Parser)]
#[command(name = "stlcbf", version, about = "Train and evaluate barrier-net controllers for STL tasks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AblationArg {
    BnFixedp,
    BnVarp,
    FeasibnVarp,
    Fcnet,
    HocbfBaseline,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::BnFixedp => Ablation::BnFixedp,
            AblationArg::BnVarp => Ablation::BnVarp,
            AblationArg::FeasibnVarp => Ablation::FeasibnVarp,
            AblationArg::Fcnet => Ablation::Fcnet,
            AblationArg::HocbfBaseline => Ablation::HocbfBaseline,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a controller and write checkpoint, curves and construction report.
    Train {
        /// Scenario TOML file or bundled scenario name.
        #[arg(long)]
        config: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, value_enum)]
        ablation: Option<AblationArg>,
        #[arg(long, value_enum)]
        memory: Option<Switch>,
    },
    /// Roll out a checkpoint from sampled initial states and write per-step files.
    Rollout {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Must describe the same environment as the checkpoint.
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print summary metrics over sampled rollouts.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<String>,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reshape a rollout directory into a plot-ready file.
    PlotData {
        /// Directory written by `rollout` (and `train` for curves).
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// Output directory, defaults to `--dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Restrict `multipliers` to one slot.
        #[arg(long)]
        slot: Option<String>,
    },
}

/// Apply command-line overrides to a loaded config.
pub fn apply_overrides(
    c: &mut ScenarioConfig,
    seed: Option<u64>,
    iters: Option<usize>,
    ablation: Option<Ablation>,
    memory: Option<bool>,
) {
    if let Some(s) = seed {
        c.training.seed = s;
    }
    if let Some(i) = iters {
        c.training.iters = i;
    }
    if let Some(a) = ablation {
        c.policy.ablation = a;
    }
    if let Some(m) = memory {
        c.policy.memory = m;
    }
}

fn executor() -> Result<Parallel, CliError> {
    Parallel::from_env().map_err(|e| CliError::Other(e.to_string()))
}

/// Evaluation rollouts with streams disjoint from training draws.
pub fn eval_records<E: Executor>(policy: &Policy, scenario: &Scenario, n: usize, seed: u64, exec: &E) -> Result<Vec<RolloutRecord>, CliError> {
    Ok(controller::evaluate(policy, scenario, n, seed, exec)?)
}

/// Train under `config` and write the artifacts into `out`.
pub fn train(config: ScenarioConfig, out: &Path, exec: &impl Executor) -> Result<(Checkpoint, Vec<CurveRow>), CliError> {
    let scenario = config.compile()?;
    let seed = config.training.seed;
    let mut policy = Policy::new(&scenario, PolicyConfig::from_scenario(&scenario), seed);
    let hash = config::env_hash(&config);
    // Probe the construction before spending time on training.
    let probe = eval_records(&policy, &scenario, 3, seed, exec)?;
    output::ensure_dir(out)?;
    let opts = TrainOptions::from_scenario(&scenario);
    log::info!(
        "training {} on {} for {} iterations, {} rollouts each, {} parameters",
        policy.config.ablation.name(),
        scenario.config.name,
        opts.iters,
        opts.rollouts,
        policy.num_params()
    );
    let curves = controller::train(&mut policy, &scenario, &opts, exec, |row| {
        if row.iter % 10 == 0 || row.iter + 1 == opts.iters {
            log::info!(
                "iter {:>4}  rho_uni {:+.4}  rho_task {:+.4}  objective {:+.4}  infeasible {}",
                row.iter,
                row.mean_rho_uni,
                row.mean_rho_task,
                row.mean_objective,
                row.infeasible_qp
            );
        }
    })?;
    output::write_curves(&out.join(output::CURVES), &curves)?;
    let after = if curves.is_empty() { probe } else { eval_records(&policy, &scenario, 3, seed, exec)? };
    let report = crate::report::construction_report(&scenario, &hash, &after);
    std::fs::write(out.join(output::REPORT), report).map_err(|e| CliError::io(out.join(output::REPORT), e))?;
    let ck = Checkpoint::new(config, policy);
    ck.save(&out.join(output::CHECKPOINT))?;
    Ok((ck, curves))
}

/// Load a checkpoint and the scenario to run it in.
pub fn load_for_replay(checkpoint: &Path, config_spec: Option<&str>) -> Result<(Checkpoint, Scenario), CliError> {
    let ck = Checkpoint::load(checkpoint)?;
    let config = match config_spec {
        Some(spec) => {
            let mut c = config::load(spec)?;
            ck.check_against(&c)?;
            // The checkpoint decides the policy layout.
            c.policy = ck.config.policy.clone();
            c.training = ck.config.training.clone();
            c
        }
        None => ck.config.clone(),
    };
    let scenario = config.compile()?;
    if ck.policy.n_slots != scenario.slots.len() {
        return Err(CliError::Checkpoint("slot count differs from scenario".into()));
    }
    Ok((ck, scenario))
}

/// `n` rollouts written to `out`; returns the records.
pub fn rollout(ck: &Checkpoint, scenario: &Scenario, n: usize, seed: u64, out: &Path, exec: &impl Executor) -> Result<Vec<RolloutRecord>, CliError> {
    let records = eval_records(&ck.policy, scenario, n, seed, exec)?;
    output::ensure_dir(out)?;
    // Drop files from a previous, longer run so the directory stays consistent.
    for stale in output::rollout_files(out)?.into_iter().skip(n) {
        std::fs::remove_file(&stale).map_err(|e| CliError::io(&stale, e))?;
    }
    for (i, r) in records.iter().enumerate() {
        output::write_rollout(&out.join(output::rollout_file(i)), scenario.model, r)?;
    }
    let names: Vec<String> = scenario.slots.iter().map(|s| s.pred.name.clone()).collect();
    output::write_summary(&out.join(output::SUMMARY), &records, &names)?;
    let summary = controller::summarize(&records);
    Meta::new(scenario, ck.env_hash.clone(), ck.policy.config.ablation.name(), n, seed, summary).save(&out.join(output::META))?;
    Ok(records)
}

pub fn print_summary(s: &EvalSummary) {
    println!("rollouts            {}", s.n);
    println!("mean_rho_classical  {:.6}", s.mean_rho_classical);
    println!("min_rho_classical   {:.6}", if s.n == 0 { 0.0 } else { s.min_rho_classical });
    println!("mean_rho_uni        {:.6}", s.mean_rho_uni);
    println!("satisfied           {}/{}", s.satisfied, s.n);
    println!("infeasible_qp       {}", s.infeasible_qp);
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            config: spec,
            out,
            seed,
            iters,
            ablation,
            memory,
        } => {
            let mut c = config::load(&spec)?;
            apply_overrides(&mut c, seed, iters, ablation.map(Into::into), memory.map(|m| m == Switch::On));
            let (_, curves) = train(c, &out, &executor()?)?;
            if let Some(last) = curves.last() {
                println!("final mean_rho_uni {:.6}  mean_rho_task {:.6}", last.mean_rho_uni, last.mean_rho_task);
            }
            println!("wrote {}", out.display());
        }
        Command::Rollout {
            checkpoint,
            config: spec,
            n,
            seed,
            out,
        } => {
            let (ck, scenario) = load_for_replay(&checkpoint, spec.as_deref())?;
            let records = rollout(&ck, &scenario, n, seed, &out, &executor()?)?;
            print_summary(&controller::summarize(&records));
            println!("wrote {}", out.display());
        }
        Command::Eval {
            checkpoint,
            config: spec,
            n,
            seed,
        } => {
            let (ck, scenario) = load_for_replay(&checkpoint, spec.as_deref())?;
            let records = eval_records(&ck.policy, &scenario, n, seed, &executor()?)?;
            print_summary(&controller::summarize(&records));
        }
        Command::PlotData { dir, kind, out, slot } => {
            let out = out.unwrap_or_else(|| dir.clone());
            let dest = plot_data(&dir, kind, &out, slot.as_deref())?;
            println!("wrote {}", dest.display());
        }
    }
    Ok(())
}
