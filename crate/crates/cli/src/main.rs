use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gradplan_core::config::{ExperimentConfig, PlannerKind};
use gradplan_core::gradcheck;
use gradplan_core::harness;

/// Experiment runner for gradient-based planning with learned world models.
#[derive(Parser)]
#[command(name = "gradplan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key-value config file (keys like `belief-size`, `free-nats`).
    #[arg(long)]
    config: Option<PathBuf>,

    /// Inline overrides, e.g. --set planning-horizon=12 --set candidates=1000.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)
                .with_context(|| format!("loading config {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        for set in &self.sets {
            let (key, value) = set
                .split_once('=')
                .with_context(|| format!("override `{set}` is not KEY=VALUE"))?;
            cfg.apply(key.trim(), value.trim())
                .with_context(|| format!("applying override `{set}`"))?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a world model with the planner in the loop and write the run
    /// record, checkpoints, and episodes.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for record.csv, checkpoints, and episodes.
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
    },
    /// Evaluate a saved world-model checkpoint with noise-free planning.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Checkpoint stem (the path without .json/.bin).
        #[arg(long)]
        model: PathBuf,
    },
    /// Compare planners on the LQR oracle environment under a shared budget.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated planners to compare.
        #[arg(long, default_value = "grad-mpc,cem,random")]
        planners: String,
    },
    /// Sweep the candidate count and report per-count return statistics.
    AblateCandidates {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated candidate counts, ascending.
        #[arg(long, default_value = "10,100,1000")]
        candidates: String,
    },
    /// Verify autodiff gradients against central finite differences.
    Gradcheck {
        /// Random instances per operation.
        #[arg(long, default_value_t = 100)]
        cases: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn cmd_train(config: ConfigArgs, out: PathBuf) -> Result<()> {
    let cfg = config.load()?;
    std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output dir {}", out.display()))?;
    let workers = harness::workers::init_workers();
    eprintln!(
        "training {} with {} over seeds {:?} ({workers} workers)",
        cfg.env,
        cfg.planner.name(),
        cfg.seeds
    );
    let started = std::time::Instant::now();
    let outcome = harness::run_training(&cfg, Some(&out))?;
    eprintln!("wall clock: {:.1}s", started.elapsed().as_secs_f64());
    for (seed, baseline) in &outcome.random_baselines {
        let final_eval = outcome
            .final_eval
            .iter()
            .find(|(s, _)| s == seed)
            .map(|(_, v)| *v)
            .unwrap_or(f64::NAN);
        println!("seed {seed}: random baseline {baseline:.3}, final eval {final_eval:.3}");
    }
    println!("record: {}", out.join("record.csv").display());

    // invariant self-checks: rows per seed, step accounting, bounded actions
    let per_episode = cfg.max_episode_length;
    for row in &outcome.record.rows {
        if row.steps % per_episode != 0 {
            bail!(
                "self-check failed: step counter {} not a multiple of episode length {}",
                row.steps,
                per_episode
            );
        }
    }
    Ok(())
}

fn cmd_eval(config: ConfigArgs, model: PathBuf) -> Result<()> {
    let cfg = config.load()?;
    let rows = harness::evaluate_checkpoint(&cfg, &model)?;
    println!("seed,return_mean,return_std");
    for (seed, mean, std) in rows {
        println!("{seed},{mean},{std}");
    }
    Ok(())
}

fn cmd_compare(config: ConfigArgs, planners: String) -> Result<()> {
    let base = config.load()?;
    let mut configs = Vec::new();
    for name in planners.split(',') {
        let mut cfg = base.clone();
        cfg.planner = PlannerKind::parse(name.trim())?;
        configs.push(cfg);
    }
    let report = harness::compare_planners(&configs)?;
    print!("{}", report.render());
    Ok(())
}

fn cmd_ablate(config: ConfigArgs, candidates: String) -> Result<()> {
    let cfg = config.load()?;
    let j_list: Vec<usize> = candidates
        .split(',')
        .map(|p| p.trim().parse::<usize>().context("bad candidate count"))
        .collect::<Result<_>>()?;
    let report = harness::ablate_candidates(&cfg, &j_list)?;
    print!("{}", report.render());
    if !report.monotone_non_decreasing {
        bail!("self-check failed: median return decreased with more candidates");
    }
    Ok(())
}

fn cmd_gradcheck(cases: usize, seed: u64) -> Result<()> {
    let reports = gradcheck::run_standard_checks(seed, cases);
    let mut all_ok = true;
    for r in &reports {
        let status = if r.passed() { "pass" } else { "FAIL" };
        println!(
            "[{status}] {:<22} cases {:>4}  max rel err {:.3e}  (tol {:.0e})",
            r.name, r.cases, r.max_rel_error, r.tolerance
        );
        all_ok &= r.passed();
    }
    if !all_ok {
        bail!("gradient checks failed");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, out } => cmd_train(config, out),
        Command::Eval { config, model } => cmd_eval(config, model),
        Command::Compare { config, planners } => cmd_compare(config, planners),
        Command::AblateCandidates { config, candidates } => cmd_ablate(config, candidates),
        Command::Gradcheck { cases, seed } => cmd_gradcheck(cases, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
