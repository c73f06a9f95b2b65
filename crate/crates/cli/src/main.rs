//! Experiment harness CLI: seeded runs of every load balancing controller
//! with CSV artifacts written per seed.

use anyhow::Context;
use clap::Parser;
use std::path::PathBuf;
use udn_mlb::config::ExperimentConfig;
use udn_mlb::harness::{run_experiment, RunSummary};

/// UDN mobility load balancing workbench.
///
/// Precedence: built-in defaults, then the config file, then flags.
#[derive(Debug, Parser)]
#[command(name = "udn-mlb", version, about)]
struct Cli {
    /// Flat key=value configuration file applied before any flag.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Controller: nomlb|rule-static|rule-adaptive|qlearning|drl-sbp|drl-mbp.
    #[arg(long)]
    controller: Option<String>,

    /// Agent scoping: two-layer|centralized.
    #[arg(long)]
    mode: Option<String>,

    /// Number of seeds (runs use seeds 0..N).
    #[arg(long)]
    seeds: Option<usize>,

    /// Total steps per run, warmup included.
    #[arg(long)]
    steps: Option<u64>,

    /// Per-user constant bit rate demand in bits/s.
    #[arg(long)]
    cbr: Option<f64>,

    /// Number of small cells.
    #[arg(long)]
    n_sbs: Option<usize>,

    /// Number of users.
    #[arg(long)]
    n_users: Option<usize>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Warmup steps before the controller activates.
    #[arg(long)]
    warmup: Option<u64>,

    /// Steps between top-layer re-clusterings.
    #[arg(long)]
    stage_length: Option<u64>,

    /// Hidden layer sizes, comma separated (e.g. 400,300).
    #[arg(long)]
    hidden: Option<String>,

    /// Run the offline-evaluation safeguard (DRL controllers only).
    #[arg(long)]
    safeguard: bool,

    /// Evaluation replicas per policy evaluation.
    #[arg(long)]
    eval_seeds: Option<usize>,
}

fn build_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        config
            .apply_file(path)
            .with_context(|| format!("loading config file {}", path.display()))?;
    }
    let mut set = |key: &str, value: Option<String>| -> anyhow::Result<()> {
        if let Some(v) = value {
            config.set(key, &v)?;
        }
        Ok(())
    };
    set("controller", cli.controller.clone())?;
    set("mode", cli.mode.clone())?;
    set("seeds", cli.seeds.map(|v| v.to_string()))?;
    set("steps", cli.steps.map(|v| v.to_string()))?;
    set("cbr", cli.cbr.map(|v| v.to_string()))?;
    set("n_sbs", cli.n_sbs.map(|v| v.to_string()))?;
    set("n_users", cli.n_users.map(|v| v.to_string()))?;
    set("out", cli.out.as_ref().map(|v| v.display().to_string()))?;
    set("warmup", cli.warmup.map(|v| v.to_string()))?;
    set("stage_length", cli.stage_length.map(|v| v.to_string()))?;
    set("hidden", cli.hidden.clone())?;
    set("eval_seeds", cli.eval_seeds.map(|v| v.to_string()))?;
    if cli.safeguard {
        config.safeguard = true;
    }
    config.validate()?;
    Ok(config)
}

fn print_summaries(rows: &[RunSummary]) {
    println!(
        "{:>5} {:>14} {:>12} {:>12} {:>14} {:>8} {:>10}",
        "seed", "controller", "mean_reward", "final_reward", "final_max_load", "hfr", "load_std"
    );
    for r in rows {
        println!(
            "{:>5} {:>14} {:>12.4} {:>12.4} {:>14.4} {:>8.4} {:>10.4}",
            r.seed,
            r.controller.to_string(),
            r.mean_reward,
            r.final_window_reward,
            r.final_window_max_load,
            r.hfr,
            r.load_std
        );
    }
    let n = rows.len() as f64;
    println!(
        "mean over {} seed(s): reward {:.4}, final reward {:.4}, final max load {:.4}, hfr {:.4}",
        rows.len(),
        rows.iter().map(|r| r.mean_reward).sum::<f64>() / n,
        rows.iter().map(|r| r.final_window_reward).sum::<f64>() / n,
        rows.iter().map(|r| r.final_window_max_load).sum::<f64>() / n,
        rows.iter().map(|r| r.hfr).sum::<f64>() / n,
    );
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let config = build_config(&cli)?;
    let summaries = run_experiment(&config).context("experiment failed")?;
    print_summaries(&summaries);
    println!("artifacts written to {}", config.out_dir.display());
    Ok(())
}
