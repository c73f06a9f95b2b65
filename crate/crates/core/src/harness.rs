//! Experiment orchestration: seeded runs of every controller, per-stage
//! re-clustering, metric computation, and CSV emission. All outputs are
//! deterministic functions of the configuration and seed.

use crate::agent::{
    AgentError, BehaviorPolicy, DeterministicPolicy, Trainer, TrainParams, WorkerLogRow,
};
use crate::baselines::{all_ordered_pairs, rule_adaptive, rule_static, QLearningController};
use crate::clustering::{select_num_clusters, stage_averaged_load, ClusteringError, LoadHistory};
use crate::config::{ArchMode, ConfigError, Controller, ExperimentConfig};
use crate::env::{generate_scenario, CioMatrix, EnvError, NetworkState, Scenario};
use crate::metrics::{hfr, load_std, moving_average, MetricsSeries};
use crate::nn::save_network;
use crate::safeguard::{
    run_safeguard, SafeguardConfig, StageRecord,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

/// RNG stream of the tabular Q-learning controller.
const QLEARNING_STREAM: u64 = 0x5000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn io_err(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io { path: path.display().to_string(), source }
}

/// Everything one seeded run produces.
#[derive(Debug)]
pub struct RunResult {
    pub seed: u64,
    pub scenario: Scenario<f64>,
    /// Per-step series over the whole horizon (warmup included). For DRL
    /// controllers this is the first worker's live environment.
    pub metrics: MetricsSeries<f64>,
    /// Final clustering of the run (one cluster with every cell when the
    /// mode is centralized).
    pub clusters: Vec<Vec<usize>>,
    /// Calinski-Harabasz score per candidate H (empty when clustering was
    /// not searched).
    pub ch_scores: Vec<(usize, f64)>,
    /// Per-worker training logs (DRL controllers only).
    pub worker_logs: Vec<(&'static str, Vec<WorkerLogRow<f64>>)>,
    /// Trained policy (DRL controllers only).
    pub policy: Option<DeterministicPolicy<f64>>,
    /// Trained critics aligned with `policy` clusters (DRL only).
    pub critics: Vec<crate::nn::DenseNetwork<f64>>,
    /// Stage ledger (safeguarded runs only).
    pub stage_records: Vec<StageRecord<f64>>,
}

/// One row of the cross-seed summary.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub seed: u64,
    pub controller: Controller,
    pub mode: ArchMode,
    pub steps: u64,
    pub mean_reward: f64,
    /// Mean of the moving-averaged reward over the final 1,000 steps.
    pub final_window_reward: f64,
    pub mean_max_load: f64,
    pub final_window_max_load: f64,
    pub hfr: f64,
    pub load_std: f64,
}

/// Window used for "converged" summary metrics.
pub const FINAL_WINDOW: usize = 1_000;

pub fn summarize(config: &ExperimentConfig, result: &RunResult) -> RunSummary {
    let m = &result.metrics;
    let n = m.len();
    let ma = moving_average(&m.rewards, config.ma_window);
    let window = FINAL_WINDOW.min(n);
    let max_loads = m.max_loads();
    RunSummary {
        seed: result.seed,
        controller: config.controller,
        mode: config.mode,
        steps: n as u64,
        mean_reward: m.rewards.iter().sum::<f64>() / n as f64,
        final_window_reward: ma[n - window..].iter().sum::<f64>() / window as f64,
        mean_max_load: max_loads.iter().sum::<f64>() / n as f64,
        final_window_max_load: max_loads[n - window..].iter().sum::<f64>() / window as f64,
        hfr: hfr(m.ho_fail_total(), m.ho_success_total()),
        load_std: load_std(&m.loads),
    }
}

fn warmup_env(
    env: &mut NetworkState<f64>,
    steps: u64,
    metrics: &mut MetricsSeries<f64>,
    history: &mut LoadHistory<f64>,
) -> Result<(), HarnessError> {
    let zero = CioMatrix::zero(env.n_cells());
    for _ in 0..steps {
        let step = env.step(&zero)?;
        history.push(&step.loads);
        metrics.push(step.reward, step.loads, step.ho_success, step.ho_fail);
    }
    Ok(())
}

/// Top-layer clustering for the configured mode; centralized mode (and
/// networks too small to search) collapse to a single cluster.
fn cluster_for(
    config: &ExperimentConfig,
    scenario: &Scenario<f64>,
    history: &LoadHistory<f64>,
) -> Result<(Vec<Vec<usize>>, Vec<(usize, f64)>), HarnessError> {
    let n = scenario.cells.len();
    if config.mode == ArchMode::Centralized || n < 3 {
        return Ok((vec![(0..n).collect()], Vec::new()));
    }
    let positions: Vec<[f64; 2]> = scenario.cells.iter().map(|c| c.position).collect();
    let avg = stage_averaged_load(history)?;
    let (assignment, scores) = select_num_clusters(&positions, &avg, config.h_range())?;
    Ok((assignment.clusters(), scores))
}

fn drl_behaviors(config: &ExperimentConfig) -> Vec<BehaviorPolicy<f64>> {
    match config.controller {
        Controller::DrlSbp => vec![BehaviorPolicy::NoisyTarget { sigma_db: config.noise_sigma_db }],
        Controller::DrlMbp => vec![
            BehaviorPolicy::NoisyTarget { sigma_db: config.noise_sigma_db },
            BehaviorPolicy::RuleStatic,
            BehaviorPolicy::RuleAdaptive,
        ],
        _ => Vec::new(),
    }
}

fn train_params(config: &ExperimentConfig) -> TrainParams<f64> {
    TrainParams {
        gamma: config.gamma,
        tau: config.tau,
        batch_size: config.batch_size,
        actor_rate: config.actor_rate,
        critic_rate: config.critic_rate,
        replay_capacity: config.replay_capacity,
        max_staleness: config.max_staleness,
        hidden: config.hidden.clone(),
        critic_adam: config.critic_optimizer_adam,
        actor_adam: config.actor_optimizer_adam,
        actor_weight_decay: config.actor_weight_decay,
        critic_weight_decay: config.critic_weight_decay,
        control_interval: config.control_interval,
    }
}

/// Executes one seeded run of the configured controller.
pub fn run_single(config: &ExperimentConfig, seed: u64) -> Result<RunResult, HarnessError> {
    config.validate()?;
    let scenario =
        generate_scenario::<f64>(seed, config.n_sbs, config.n_users, config.area_side, config.cbr)?;
    if config.safeguard {
        return run_safeguarded(config, seed, scenario);
    }
    match config.controller {
        Controller::DrlSbp | Controller::DrlMbp => run_drl(config, seed, scenario),
        _ => run_plain(config, seed, scenario),
    }
}

/// Rule, tabular, and no-op controllers over a single live environment.
fn run_plain(
    config: &ExperimentConfig,
    seed: u64,
    scenario: Scenario<f64>,
) -> Result<RunResult, HarnessError> {
    let n = scenario.cells.len();
    let mut env = NetworkState::from_scenario(&scenario, 0);
    let mut metrics = MetricsSeries::new();
    let mut history = LoadHistory::new(n, 0);
    warmup_env(&mut env, config.warmup, &mut metrics, &mut history)?;
    let (clusters, ch_scores) = cluster_for(config, &scenario, &history)?;

    let pairs = all_ordered_pairs(n);
    let mut cio = CioMatrix::zero(n);
    let mut qlearner = if config.controller == Controller::QLearning {
        let positions: Vec<[f64; 2]> = scenario.cells.iter().map(|c| c.position).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(QLEARNING_STREAM);
        Some(QLearningController::new(&positions, rng))
    } else {
        None
    };

    for _ in config.warmup..config.steps {
        let loads = env.loads();
        cio = match config.controller {
            Controller::NoMlb => CioMatrix::zero(n),
            Controller::RuleStatic => rule_static(&loads, &cio, &pairs),
            Controller::RuleAdaptive => rule_adaptive(&loads, &cio, &pairs),
            Controller::QLearning => qlearner.as_mut().expect("qlearning state").act(&loads, &cio),
            Controller::DrlSbp | Controller::DrlMbp => unreachable!("handled by run_drl"),
        };
        let step = env.step(&cio)?;
        if let Some(q) = qlearner.as_mut() {
            q.observe(step.reward, &step.loads);
        }
        metrics.push(step.reward, step.loads, step.ho_success, step.ho_fail);
    }

    Ok(RunResult {
        seed,
        scenario,
        metrics,
        clusters,
        ch_scores,
        worker_logs: Vec::new(),
        policy: None,
        critics: Vec::new(),
        stage_records: Vec::new(),
    })
}

/// DRL controllers: per-stage clustering, round-robin training of one
/// agent per cluster, agents re-instantiated when the clustering changes.
fn run_drl(
    config: &ExperimentConfig,
    seed: u64,
    scenario: Scenario<f64>,
) -> Result<RunResult, HarnessError> {
    let n = scenario.cells.len();
    let behaviors = drl_behaviors(config);
    let params = train_params(config);

    // Warm every worker replica identically; metrics and load history
    // follow the first worker's environment.
    let mut envs: Vec<NetworkState<f64>> = (0..behaviors.len())
        .map(|m| NetworkState::from_scenario(&scenario, m as u64))
        .collect();
    let mut metrics = MetricsSeries::new();
    let mut history = LoadHistory::new(n, 0);
    for (m, env) in envs.iter_mut().enumerate() {
        if m == 0 {
            warmup_env(env, config.warmup, &mut metrics, &mut history)?;
        } else {
            let mut scratch_metrics = MetricsSeries::new();
            let mut scratch_history = LoadHistory::new(n, 0);
            warmup_env(env, config.warmup, &mut scratch_metrics, &mut scratch_history)?;
        }
    }

    let mut worker_logs: Vec<(&'static str, Vec<WorkerLogRow<f64>>)> =
        behaviors.iter().map(|b| (b.kind_name(), Vec::new())).collect();
    let mut clusters;
    let mut ch_scores;
    let policy;
    let critics;
    let mut remaining = config.steps - config.warmup;
    let mut stage = 0u64;
    let mut prev_clusters: Option<Vec<Vec<usize>>> = None;
    let mut carried: Option<Trainer<f64>> = None;

    loop {
        let (new_clusters, new_scores) = cluster_for(config, &scenario, &history)?;
        clusters = new_clusters;
        ch_scores = new_scores;

        // Warm-start only when the partition is unchanged; otherwise the
        // agent dimensions shift and fresh nets are required.
        let mut trainer = match carried.take() {
            Some(t) if prev_clusters.as_deref() == Some(&clusters[..]) => t,
            Some(t) => {
                let envs = t.into_envs();
                Trainer::with_envs(seed, envs, clusters.clone(), behaviors.clone(), params.clone(), stage)
            }
            None => Trainer::with_envs(
                seed,
                std::mem::take(&mut envs),
                clusters.clone(),
                behaviors.clone(),
                params.clone(),
                stage,
            ),
        };

        // One training iteration consumes one control interval of
        // simulator time; sub-interval tails are dropped.
        let interval = config.control_interval.max(1);
        let iterations = remaining.min(config.stage_length) / interval;
        if iterations == 0 {
            policy = Some(trainer.policy());
            critics = trainer.critics();
            break;
        }
        trainer.train_round_robin(iterations)?;
        let sim_consumed = iterations * interval;
        remaining -= sim_consumed;

        // Live metrics and next-stage history from the first worker.
        let stage_metrics = &trainer.workers[0].metrics;
        let offset = stage_metrics.len() - sim_consumed as usize;
        history.clear(0);
        for i in offset..stage_metrics.len() {
            let loads = stage_metrics.loads[i].clone();
            history.push(&loads);
            metrics.push(
                stage_metrics.rewards[i],
                loads,
                stage_metrics.ho_success[i],
                stage_metrics.ho_fail[i],
            );
        }

        for (log, worker) in worker_logs.iter_mut().zip(&trainer.workers) {
            let start = worker.log.len() - (iterations as usize).min(worker.log.len());
            log.1.extend(worker.log[start..].iter().cloned());
        }

        if remaining < interval {
            policy = Some(trainer.policy());
            critics = trainer.critics();
            break;
        }
        stage += 1;
        prev_clusters = Some(clusters.clone());
        carried = Some(trainer);
    }

    Ok(RunResult {
        seed,
        scenario,
        metrics,
        clusters,
        ch_scores,
        worker_logs,
        policy,
        critics,
        stage_records: Vec::new(),
    })
}

fn run_safeguarded(
    config: &ExperimentConfig,
    seed: u64,
    scenario: Scenario<f64>,
) -> Result<RunResult, HarnessError> {
    let stages = ((config.steps - config.warmup) / config.stage_length).max(1) as usize;
    let cfg = SafeguardConfig {
        stages,
        stage_length: config.stage_length,
        warmup: config.warmup,
        eval_horizon: config.stage_length,
        eval_seeds: config.eval_seeds,
        behaviors: drl_behaviors(config),
        train: train_params(config),
        h_range: config.h_range(),
    };
    let outcome = run_safeguard(&scenario, &cfg)?;
    let (clusters, policy) = match &outcome.final_policy {
        crate::safeguard::OnlinePolicy::Learned(p) => (p.clusters.clone(), Some(p.clone())),
        crate::safeguard::OnlinePolicy::ZeroCio => (vec![(0..scenario.cells.len()).collect()], None),
    };
    Ok(RunResult {
        seed,
        scenario,
        metrics: outcome.online_metrics,
        clusters,
        ch_scores: Vec::new(),
        worker_logs: Vec::new(),
        policy,
        critics: Vec::new(),
        stage_records: outcome.records,
    })
}

// --- CSV emission -------------------------------------------------------

fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn config_echo(config: &ExperimentConfig) -> String {
    let hidden: Vec<String> = config.hidden.iter().map(|h| h.to_string()).collect();
    format!(
        "n_sbs={}\nn_users={}\narea_side={}\ncbr={}\ncontroller={}\nmode={}\nseeds={}\nsteps={}\nwarmup={}\nstage_length={}\ngamma={}\ntau={}\nbatch_size={}\nactor_rate={}\ncritic_rate={}\nreplay_capacity={}\nmax_staleness={}\nhidden={}\nnoise_sigma_db={}\nh_max={}\nma_window={}\nsafeguard={}\neval_seeds={}\n",
        config.n_sbs,
        config.n_users,
        config.area_side,
        config.cbr,
        config.controller,
        config.mode,
        config.seeds,
        config.steps,
        config.warmup,
        config.stage_length,
        config.gamma,
        config.tau,
        config.batch_size,
        config.actor_rate,
        config.critic_rate,
        config.replay_capacity,
        config.max_staleness,
        hidden.join(","),
        config.noise_sigma_db,
        config.h_max,
        config.ma_window,
        config.safeguard,
        config.eval_seeds,
    )
}

pub fn per_step_csv(metrics: &MetricsSeries<f64>) -> String {
    let mut out = String::from("step,reward,max_load,ho_success,ho_fail\n");
    for t in 0..metrics.len() {
        let max = metrics.loads[t].iter().cloned().fold(0.0, f64::max);
        let _ = writeln!(
            out,
            "{t},{},{max},{},{}",
            metrics.rewards[t], metrics.ho_success[t], metrics.ho_fail[t]
        );
    }
    out
}

pub fn loads_csv(metrics: &MetricsSeries<f64>) -> String {
    let n = metrics.loads.first().map_or(0, Vec::len);
    let mut out = String::from("step");
    for i in 0..n {
        let _ = write!(out, ",load_{i}");
    }
    out.push('\n');
    for (t, loads) in metrics.loads.iter().enumerate() {
        let _ = write!(out, "{t}");
        for l in loads {
            let _ = write!(out, ",{l}");
        }
        out.push('\n');
    }
    out
}

pub fn summary_csv(rows: &[RunSummary]) -> String {
    let mut out = String::from(
        "seed,controller,mode,steps,mean_reward,final_window_reward,mean_max_load,final_window_max_load,hfr,load_std\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.controller,
            r.mode,
            r.steps,
            r.mean_reward,
            r.final_window_reward,
            r.mean_max_load,
            r.final_window_max_load,
            r.hfr,
            r.load_std
        );
    }
    out
}

pub fn clustering_csv(clusters: &[Vec<usize>]) -> String {
    let mut rows: Vec<(usize, usize)> = clusters
        .iter()
        .enumerate()
        .flat_map(|(h, members)| members.iter().map(move |&c| (c, h)))
        .collect();
    rows.sort_unstable();
    let mut out = String::from("sbs_id,cluster_index\n");
    for (c, h) in rows {
        let _ = writeln!(out, "{c},{h}");
    }
    out
}

pub fn ch_scores_csv(scores: &[(usize, f64)], selected_h: usize) -> String {
    let mut out = String::from("h,score,selected\n");
    for (h, s) in scores {
        let _ = writeln!(out, "{h},{s},{}", if *h == selected_h { 1 } else { 0 });
    }
    out
}

pub fn worker_log_csv(log: &[WorkerLogRow<f64>]) -> String {
    let mut out = String::from("iteration,behavior,reward,critic_loss\n");
    for row in log {
        let loss = row.critic_loss.map_or(String::new(), |l| l.to_string());
        let _ = writeln!(out, "{},{},{},{loss}", row.iteration, row.behavior, row.reward);
    }
    out
}

pub fn stage_ledger_csv(records: &[StageRecord<f64>]) -> String {
    let mut out = String::from("stage,online_score,offline_score,decision\n");
    for r in records {
        let _ = writeln!(out, "{},{},{},{}", r.stage, r.online_score, r.offline_score, r.decision);
    }
    out
}

/// Writes every artifact of one run into `dir`.
pub fn write_run_outputs(
    dir: &Path,
    config: &ExperimentConfig,
    result: &RunResult,
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_file(&dir.join("config.txt"), &config_echo(config))?;
    write_file(&dir.join("scenario.txt"), &result.scenario.snapshot())?;
    write_file(&dir.join("per_step.csv"), &per_step_csv(&result.metrics))?;
    write_file(&dir.join("loads.csv"), &loads_csv(&result.metrics))?;
    write_file(&dir.join("clustering.csv"), &clustering_csv(&result.clusters))?;
    if !result.ch_scores.is_empty() {
        write_file(
            &dir.join("ch_scores.csv"),
            &ch_scores_csv(&result.ch_scores, result.clusters.len()),
        )?;
    }
    for (m, (_, log)) in result.worker_logs.iter().enumerate() {
        write_file(&dir.join(format!("training_worker{m}.csv")), &worker_log_csv(log))?;
    }
    if !result.stage_records.is_empty() {
        write_file(&dir.join("stage_ledger.csv"), &stage_ledger_csv(&result.stage_records))?;
    }
    if let Some(policy) = &result.policy {
        for (h, actor) in policy.actors.iter().enumerate() {
            save_network(actor, &dir.join(format!("actor_{h}.ckpt")))
                .map_err(|e| HarnessError::Agent(AgentError::Nn(e)))?;
        }
        for (h, critic) in result.critics.iter().enumerate() {
            save_network(critic, &dir.join(format!("critic_{h}.ckpt")))
                .map_err(|e| HarnessError::Agent(AgentError::Nn(e)))?;
        }
    }
    Ok(())
}

/// Runs every seed (in parallel), writes per-seed artifacts plus the
/// cross-seed `summary.csv`, and returns the summaries in seed order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunSummary>, HarnessError> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir).map_err(|e| io_err(&config.out_dir, e))?;
    let seeds: Vec<u64> = (0..config.seeds as u64).collect();
    let results: Vec<Result<RunSummary, HarnessError>> = seeds
        .par_iter()
        .map(|&seed| {
            let result = run_single(config, seed)?;
            write_run_outputs(&config.out_dir.join(format!("seed{seed}")), config, &result)?;
            Ok(summarize(config, &result))
        })
        .collect();
    let mut summaries = Vec::with_capacity(results.len());
    for r in results {
        summaries.push(r?);
    }
    write_file(&config.out_dir.join("summary.csv"), &summary_csv(&summaries))?;
    Ok(summaries)
}
