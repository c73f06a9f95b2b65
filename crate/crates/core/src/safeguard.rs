//! Offline-evaluation based online control: an online branch executes the
//! best policy found so far while an offline branch keeps learning; at
//! every stage boundary the freshly trained policy replaces the online one
//! only when it evaluates strictly better under a shared protocol.

use crate::agent::{AgentError, BehaviorPolicy, DeterministicPolicy, Trainer, TrainParams};
use crate::clustering::{select_num_clusters, stage_averaged_load, LoadHistory};
use crate::env::{CioMatrix, NetworkState, Scenario};
use crate::metrics::MetricsSeries;
use crate::nn::network_to_string;
use crate::scalar::Real;

/// Environment replica streams reserved for policy evaluation.
const EVAL_REPLICA_BASE: u64 = 10_000;
/// Replica stream of the live online branch.
const ONLINE_REPLICA: u64 = 20_000;

/// Default number of steps between re-clusterings (one stage).
pub const DEFAULT_STAGE_LENGTH: u64 = 10_000;

/// The policy the online branch executes.
#[derive(Debug, Clone)]
pub enum OnlinePolicy<F> {
    /// All offsets zero; the starting policy before any training completed.
    ZeroCio,
    Learned(DeterministicPolicy<F>),
}

impl<F: Real> OnlinePolicy<F> {
    pub fn act(&self, env: &NetworkState<F>) -> Result<CioMatrix<F>, AgentError> {
        match self {
            OnlinePolicy::ZeroCio => Ok(CioMatrix::zero(env.n_cells())),
            OnlinePolicy::Learned(p) => p.act(env),
        }
    }

    /// Canonical byte representation, used to check that KEEP decisions
    /// leave the online checkpoint untouched.
    pub fn fingerprint(&self) -> String {
        match self {
            OnlinePolicy::ZeroCio => "zero-cio".to_string(),
            OnlinePolicy::Learned(p) => {
                let mut s = String::new();
                for (members, actor) in p.clusters.iter().zip(&p.actors) {
                    s.push_str(&format!("{members:?}\n"));
                    s.push_str(&network_to_string(actor));
                }
                s
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Swap,
    Keep,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Decision::Swap => "SWAP",
            Decision::Keep => "KEEP",
        })
    }
}

/// Outcome of one stage: both branch scores and the boundary decision.
#[derive(Debug, Clone)]
pub struct StageRecord<F> {
    pub stage: usize,
    /// Policy the online branch executed during this stage.
    pub online_policy: OnlinePolicy<F>,
    /// Candidate trained by the offline branch during this stage.
    pub offline_policy: OnlinePolicy<F>,
    pub online_score: F,
    pub offline_score: F,
    pub decision: Decision,
}

/// Runs `policy` deterministically (no exploration, no learning) on one
/// seeded replica and returns the per-step metrics. The policy is
/// re-evaluated every `control_interval` steps, matching the training
/// cadence.
pub fn rollout_with_interval<F: Real>(
    policy: &OnlinePolicy<F>,
    scenario: &Scenario<F>,
    replica: u64,
    horizon: u64,
    control_interval: u64,
) -> Result<MetricsSeries<F>, AgentError> {
    let mut env = NetworkState::from_scenario(scenario, replica);
    let mut metrics = MetricsSeries::new();
    let interval = control_interval.max(1);
    let mut action = policy.act(&env)?;
    for t in 0..horizon {
        if t % interval == 0 {
            action = policy.act(&env)?;
        }
        let step = env.step(&action)?;
        metrics.push(step.reward, step.loads, step.ho_success, step.ho_fail);
    }
    Ok(metrics)
}

/// [`rollout_with_interval`] at the default 10-second control period.
pub fn rollout<F: Real>(
    policy: &OnlinePolicy<F>,
    scenario: &Scenario<F>,
    replica: u64,
    horizon: u64,
) -> Result<MetricsSeries<F>, AgentError> {
    rollout_with_interval(policy, scenario, replica, horizon, 10)
}

/// Evaluation protocol shared by both branches: the deterministic policy
/// runs on `n_seeds` fixed replicas for `horizon` steps; the score is the
/// mean per-step reward across replicas.
pub fn evaluate_policy<F: Real>(
    policy: &OnlinePolicy<F>,
    scenario: &Scenario<F>,
    horizon: u64,
    n_seeds: usize,
) -> Result<F, AgentError> {
    assert!(horizon >= 1, "evaluation horizon must be at least one step");
    assert!(n_seeds >= 1);
    let mut total = F::zero();
    for i in 0..n_seeds {
        let metrics = rollout(policy, scenario, EVAL_REPLICA_BASE + i as u64, horizon)?;
        total += metrics.rewards.iter().copied().sum::<F>() / F::lit(metrics.len() as f64);
    }
    Ok(total / F::lit(n_seeds as f64))
}

/// Boundary rule: adopt the offline policy only on strict improvement.
pub fn stage_boundary<F: Real>(online_score: F, offline_score: F) -> Decision {
    if offline_score > online_score {
        Decision::Swap
    } else {
        Decision::Keep
    }
}

/// Safeguarded run configuration.
#[derive(Debug, Clone)]
pub struct SafeguardConfig<F> {
    pub stages: usize,
    pub stage_length: u64,
    /// Warmup steps feeding the first clustering.
    pub warmup: u64,
    pub eval_horizon: u64,
    pub eval_seeds: usize,
    pub behaviors: Vec<BehaviorPolicy<F>>,
    pub train: TrainParams<F>,
    pub h_range: std::ops::RangeInclusive<usize>,
}

/// Result of a safeguarded run.
#[derive(Debug)]
pub struct SafeguardOutcome<F> {
    pub records: Vec<StageRecord<F>>,
    /// Live per-step metrics of the online branch (stages concatenated,
    /// warmup included).
    pub online_metrics: MetricsSeries<F>,
    pub final_policy: OnlinePolicy<F>,
}

/// Runs the two branches for `cfg.stages` stages.
///
/// Each stage: the offline branch re-clusters on the previous stage's
/// online load history and trains fresh agents on seeded replicas; the
/// online branch executes the adopted policy live. At the boundary the
/// candidate is evaluated and swapped in only on strict improvement. The
/// adopted score is cached, so the sequence of adopted evaluation scores
/// is non-decreasing by construction.
pub fn run_safeguard<F: Real>(
    scenario: &Scenario<F>,
    cfg: &SafeguardConfig<F>,
) -> Result<SafeguardOutcome<F>, AgentError> {
    let n = scenario.cells.len();
    let positions: Vec<[F; 2]> = scenario.cells.iter().map(|c| c.position).collect();
    let mut online_env = NetworkState::from_scenario(scenario, ONLINE_REPLICA);
    let mut online_metrics = MetricsSeries::new();
    let mut history = LoadHistory::new(n, 0);

    // Warmup under zero offsets to seed the first clustering.
    let zero = CioMatrix::zero(n);
    for _ in 0..cfg.warmup {
        let step = online_env.step(&zero)?;
        history.push(&step.loads);
        online_metrics.push(step.reward, step.loads, step.ho_success, step.ho_fail);
    }

    let mut online_policy = OnlinePolicy::ZeroCio;
    let mut online_score =
        evaluate_policy(&online_policy, scenario, cfg.eval_horizon, cfg.eval_seeds)?;
    let mut records = Vec::with_capacity(cfg.stages);

    for stage in 0..cfg.stages {
        // Offline branch: re-cluster on the previous stage's loads and
        // train fresh agents against seeded replicas.
        let avg = stage_averaged_load(&history).expect("warmup fills the history");
        let (assignment, _) = select_num_clusters(&positions, &avg, cfg.h_range.clone())
            .expect("valid cluster range");
        let clusters = assignment.clusters();
        let envs = (0..cfg.behaviors.len())
            .map(|m| NetworkState::from_scenario(scenario, m as u64))
            .collect();
        let mut trainer = Trainer::with_envs(
            scenario.seed,
            envs,
            clusters,
            cfg.behaviors.clone(),
            cfg.train.clone(),
            stage as u64,
        );
        trainer.train_round_robin(cfg.stage_length)?;
        let offline_policy = OnlinePolicy::Learned(trainer.policy());

        // Online branch: execute the adopted policy live over the stage.
        history.clear(online_env.time());
        for _ in 0..cfg.stage_length {
            let action = online_policy.act(&online_env)?;
            let step = online_env.step(&action)?;
            history.push(&step.loads);
            online_metrics.push(step.reward, step.loads, step.ho_success, step.ho_fail);
        }

        // Boundary: evaluate the candidate under the shared protocol.
        let offline_score =
            evaluate_policy(&offline_policy, scenario, cfg.eval_horizon, cfg.eval_seeds)?;
        let decision = stage_boundary(online_score, offline_score);
        records.push(StageRecord {
            stage,
            online_policy: online_policy.clone(),
            offline_policy: offline_policy.clone(),
            online_score,
            offline_score,
            decision,
        });
        if decision == Decision::Swap {
            online_policy = offline_policy;
            online_score = offline_score;
        }
    }

    Ok(SafeguardOutcome { records, online_metrics, final_policy: online_policy })
}
