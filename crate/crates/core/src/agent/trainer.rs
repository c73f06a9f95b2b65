//! Parallel learning loop: each worker owns an environment replica, local
//! and guide networks, and a replay per cluster agent; the parameter
//! servers (one per cluster) aggregate gradients. A single-threaded
//! round-robin mode provides bit-reproducible runs; a threaded mode runs
//! workers concurrently against mutex－guarded servers.

use super::server::{GradientSubmission, ParameterServer};
use super::{
    actor_minibatch_gradient, behavior_action, critic_minibatch_gradient, select_action,
    AgentError, BehaviorPolicy, CriticNet, ReplayBuffer, Transition,
};
use crate::env::{reward, CioBounds, CioMatrix, NetworkState, Scenario};
use crate::nn::GradientSet;
use crate::metrics::MetricsSeries;
use crate::nn::{soft_update, DenseNetwork, Optimizer, OutputActivation};
use crate::scalar::Real;
use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Mutex;

/// RNG stream offsets (the environment replica stream is the worker id).
const NET_INIT_STREAM_BASE: u64 = 0x4000;
const WORKER_RNG_STREAM_BASE: u64 = 0x3000;

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainParams<F> {
    pub gamma: F,
    pub tau: F,
    pub batch_size: usize,
    pub actor_rate: F,
    pub critic_rate: F,
    pub replay_capacity: usize,
    pub max_staleness: u64,
    /// Simulator seconds each selected action is held. One training
    /// iteration spans one interval.
    pub control_interval: u64,
    pub hidden: Vec<usize>,
    /// Adaptive-moment updates for the critic when true.
    pub critic_adam: bool,
    /// Adaptive-moment updates for the actor when true. Plain gradient
    /// steps are the default: the bounded output's shrinking derivative
    /// then damps the update near saturation, which a normalized step
    /// would override.
    pub actor_adam: bool,
    /// Decoupled weight decay per optimizer; damps the rectifier net's
    /// far-field extrapolation so ascent cannot ride it out of the
    /// explored action region.
    pub actor_weight_decay: F,
    pub critic_weight_decay: F,
}

impl<F: Real> Default for TrainParams<F> {
    fn default() -> Self {
        TrainParams {
            gamma: F::lit(0.99),
            tau: F::lit(0.001),
            batch_size: super::DEFAULT_BATCH_SIZE,
            actor_rate: F::lit(1e-4),
            critic_rate: F::lit(1e-3),
            replay_capacity: super::DEFAULT_REPLAY_CAPACITY,
            max_staleness: super::server::DEFAULT_MAX_STALENESS,
            control_interval: 10,
            hidden: vec![400, 300],
            critic_adam: true,
            actor_adam: false,
            actor_weight_decay: F::lit(1e-3),
            critic_weight_decay: F::lit(1e-2),
        }
    }
}

/// One log row per worker iteration.
#[derive(Debug, Clone)]
pub struct WorkerLogRow<F> {
    pub iteration: u64,
    pub behavior: &'static str,
    pub reward: F,
    pub critic_loss: Option<F>,
}

/// Local and guide networks of one worker for one cluster agent.
#[derive(Debug, Clone)]
struct ClusterAgents<F> {
    actor: DenseNetwork<F>,
    critic: DenseNetwork<F>,
    guide_actor: DenseNetwork<F>,
    guide_critic: DenseNetwork<F>,
    sync_stamp: u64,
}

/// One exploration worker: environment replica, behavior policy, local
/// nets, and per-cluster replays. Shares nothing mutable with its peers.
#[derive(Debug)]
pub struct Worker<F> {
    pub id: usize,
    pub behavior: BehaviorPolicy<F>,
    pub env: NetworkState<F>,
    nets: Vec<ClusterAgents<F>>,
    replays: Vec<ReplayBuffer<F>>,
    rng: ChaCha8Rng,
    pub log: Vec<WorkerLogRow<F>>,
    pub metrics: MetricsSeries<F>,
    iteration: u64,
}

impl<F: Real> Worker<F> {
    pub fn replay_len(&self, cluster: usize) -> usize {
        self.replays[cluster].len()
    }

    /// Local actor parameters for one cluster (testing and inspection).
    pub fn local_actor(&self, cluster: usize) -> &DenseNetwork<F> {
        &self.nets[cluster].actor
    }

    /// One full worker iteration against pre-fetched server snapshots:
    /// synchronize, soft-update guides, act, store, and (once the replay
    /// holds a full batch) compute and return gradient submissions.
    fn iterate(
        &mut self,
        clusters: &[Vec<usize>],
        snapshots: &[(DenseNetwork<F>, DenseNetwork<F>, u64)],
        params: &TrainParams<F>,
        bounds: CioBounds<F>,
    ) -> Result<Vec<(usize, GradientSubmission<F>)>, AgentError> {
        // Synchronize local nets and move guides toward them.
        for (agents, snap) in self.nets.iter_mut().zip(snapshots) {
            agents.actor = snap.0.clone();
            agents.critic = snap.1.clone();
            agents.sync_stamp = snap.2;
            soft_update(&mut agents.guide_actor, &agents.actor, params.tau)?;
            soft_update(&mut agents.guide_critic, &agents.critic, params.tau)?;
        }

        // Observe cluster states and pick behavior actions.
        let states: Vec<_> = clusters.iter().map(|c| self.env.observe_state(c)).collect();
        let mut actions = Vec::with_capacity(clusters.len());
        for (h, members) in clusters.iter().enumerate() {
            let current = restrict_cio(self.env.cio(), members, bounds);
            let action = behavior_action(
                &self.behavior,
                &states[h],
                &current,
                &self.nets[h].actor,
                &mut self.rng,
            )?;
            actions.push(action);
        }
        // Hold the composed action over the control interval; associations
        // re-equilibrate under the held offsets, so the interval-mean
        // reward carries the action's steady effect rather than a single
        // second's marginal.
        let full = compose_full_cio(self.env.n_cells(), clusters, &actions, bounds);
        let interval = params.control_interval.max(1);
        // The transition reward averages the interval's tail half only:
        // the first seconds still reflect associations inherited from the
        // previous action, the tail shows the held action's effect.
        let tail_start = interval / 2;
        let tail_len = F::lit((interval - tail_start) as f64);
        let mut cluster_reward = vec![F::zero(); clusters.len()];
        let mut global_reward = F::zero();
        for t in 0..interval {
            let step = self.env.step(&full)?;
            if t >= tail_start {
                for (h, members) in clusters.iter().enumerate() {
                    let cluster_loads: Vec<F> =
                        members.iter().map(|&i| step.loads[i]).collect();
                    cluster_reward[h] += reward(&cluster_loads);
                }
            }
            global_reward += step.reward;
            self.metrics.push(step.reward, step.loads, step.ho_success, step.ho_fail);
        }
        let global_reward = global_reward / F::lit(interval as f64);

        // Store one transition per cluster.
        for (h, members) in clusters.iter().enumerate() {
            let next_state = self.env.observe_state(members);
            self.replays[h].push(Transition {
                state: Array1::from_vec(states[h].to_vec()),
                action: Array1::from_vec(actions[h].upper_triangle()),
                reward: cluster_reward[h] / tail_len,
                next_state: Array1::from_vec(next_state.to_vec()),
            });
        }

        // Learn once the replay can fill a batch.
        let mut submissions = Vec::new();
        let mut loss_sum = F::zero();
        let mut loss_count = 0usize;
        for (h, members) in clusters.iter().enumerate() {
            if self.replays[h].len() < params.batch_size {
                continue;
            }
            let agents = &self.nets[h];
            let batch = self.replays[h].sample_uniform(params.batch_size, &mut self.rng)?;
            let (mut critic_grads, loss) = critic_minibatch_gradient(
                &batch,
                &agents.critic,
                &agents.guide_actor,
                &agents.guide_critic,
                params.gamma,
            )?;
            let q_fn = CriticNet { net: &agents.critic, state_dim: 2 * members.len() };
            let mut actor_grads = actor_minibatch_gradient(&batch, &agents.actor, &q_fn)?;
            critic_grads.timestamp = agents.sync_stamp;
            actor_grads.timestamp = agents.sync_stamp;
            submissions.push((h, GradientSubmission { actor: actor_grads, critic: critic_grads }));
            loss_sum += loss;
            loss_count += 1;
        }

        self.log.push(WorkerLogRow {
            iteration: self.iteration,
            behavior: self.behavior.kind_name(),
            reward: global_reward,
            critic_loss: (loss_count > 0).then(|| loss_sum / F::lit(loss_count as f64)),
        });
        self.iteration += 1;
        Ok(submissions)
    }
}

/// Builds the full offset matrix from per-cluster actions; pairs that
/// cross cluster boundaries stay at zero.
pub fn compose_full_cio<F: Real>(
    n_cells: usize,
    clusters: &[Vec<usize>],
    actions: &[CioMatrix<F>],
    bounds: CioBounds<F>,
) -> CioMatrix<F> {
    let mut full = CioMatrix::zero_with_bounds(n_cells, bounds);
    for (members, action) in clusters.iter().zip(actions) {
        for a in 0..members.len() {
            for b in (a + 1)..members.len() {
                full.set(members[a], members[b], action.get(a, b));
            }
        }
    }
    full
}

/// Extracts the sub-matrix of `full` spanned by `members` (sorted ids).
pub fn restrict_cio<F: Real>(
    full: &CioMatrix<F>,
    members: &[usize],
    bounds: CioBounds<F>,
) -> CioMatrix<F> {
    let mut out = CioMatrix::zero_with_bounds(members.len(), bounds);
    for a in 0..members.len() {
        for b in (a + 1)..members.len() {
            out.set(a, b, full.get(members[a], members[b]));
        }
    }
    out
}

/// A frozen control policy: per-cluster actors applied deterministically.
#[derive(Debug, Clone)]
pub struct DeterministicPolicy<F> {
    pub clusters: Vec<Vec<usize>>,
    pub actors: Vec<DenseNetwork<F>>,
    pub bounds: CioBounds<F>,
}

impl<F: Real> DeterministicPolicy<F> {
    pub fn act(&self, env: &NetworkState<F>) -> Result<CioMatrix<F>, AgentError> {
        let mut actions = Vec::with_capacity(self.clusters.len());
        for (members, actor) in self.clusters.iter().zip(&self.actors) {
            let state = env.observe_state(members);
            actions.push(select_action(actor, &state, members.len(), self.bounds)?);
        }
        Ok(compose_full_cio(env.n_cells(), &self.clusters, &actions, self.bounds))
    }
}

/// Multi-worker trainer over a fixed clustering of one scenario.
#[derive(Debug)]
pub struct Trainer<F> {
    clusters: Vec<Vec<usize>>,
    servers: Vec<ParameterServer<F>>,
    pub workers: Vec<Worker<F>>,
    params: TrainParams<F>,
    bounds: CioBounds<F>,
}

impl<F: Real> Trainer<F> {
    /// One worker per behavior policy; each worker steps its own replica
    /// of `scenario`. Worker `m` uses environment replica `m`, so the
    /// first worker sees the same mobility as a plain baseline run.
    pub fn new(
        scenario: &Scenario<F>,
        clusters: Vec<Vec<usize>>,
        behaviors: Vec<BehaviorPolicy<F>>,
        params: TrainParams<F>,
    ) -> Self {
        let envs = (0..behaviors.len())
            .map(|m| NetworkState::from_scenario(scenario, m as u64))
            .collect();
        Self::with_envs(scenario.seed, envs, clusters, behaviors, params, 0)
    }

    /// Builds a trainer over caller-provided worker environments (already
    /// warmed up or carried over from a previous stage). `salt`
    /// disambiguates RNG streams across stages of one run.
    pub fn with_envs(
        seed: u64,
        envs: Vec<NetworkState<F>>,
        clusters: Vec<Vec<usize>>,
        behaviors: Vec<BehaviorPolicy<F>>,
        params: TrainParams<F>,
        salt: u64,
    ) -> Self {
        assert_eq!(envs.len(), behaviors.len(), "one environment per behavior policy");
        assert!(!envs.is_empty(), "at least one worker required");
        let bounds = CioBounds::default();
        // Critic output bias starts at the discounted-return scale of the
        // current reward, so the slow guide-tracked bootstrap spends its
        // budget on action structure instead of climbing a DC offset.
        let value_scale: Vec<F> = clusters
            .iter()
            .map(|members| {
                let loads: Vec<F> = members.iter().map(|&i| envs[0].cells[i].load).collect();
                let horizon = (F::one() - params.gamma).max(F::lit(1e-4));
                (reward(&loads) / horizon).min(F::lit(1e6))
            })
            .collect();
        let servers: Vec<ParameterServer<F>> = clusters
            .iter()
            .enumerate()
            .map(|(h, members)| {
                let c = members.len();
                let state_dim = 2 * c;
                let action_dim = c * (c - 1) / 2;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(NET_INIT_STREAM_BASE + 97 * salt + h as u64);
                let mut actor_sizes = vec![state_dim];
                actor_sizes.extend_from_slice(&params.hidden);
                actor_sizes.push(action_dim);
                let actor = DenseNetwork::new(
                    &actor_sizes,
                    OutputActivation::Bounded { lo: bounds.min_db, hi: bounds.max_db },
                    &mut rng,
                );
                let mut critic_sizes = vec![state_dim + action_dim];
                critic_sizes.extend_from_slice(&params.hidden);
                critic_sizes.push(1);
                let mut critic =
                    DenseNetwork::new(&critic_sizes, OutputActivation::Identity, &mut rng);
                let mut dc = GradientSet::zeros_like(&critic);
                let last = dc.biases.len() - 1;
                dc.biases[last][0] = value_scale[h];
                let mut seed_opt = Optimizer::sgd(F::one());
                seed_opt.apply(&mut critic, &dc).expect("finite bias seed");
                let actor_opt = if params.actor_adam {
                    Optimizer::adam(params.actor_rate)
                } else {
                    Optimizer::sgd(params.actor_rate)
                }
                .with_weight_decay(params.actor_weight_decay);
                let critic_opt = if params.critic_adam {
                    Optimizer::adam(params.critic_rate)
                } else {
                    Optimizer::sgd(params.critic_rate)
                }
                .with_weight_decay(params.critic_weight_decay);
                ParameterServer::new(actor, critic, actor_opt, critic_opt, params.max_staleness)
            })
            .collect();

        let workers: Vec<Worker<F>> = behaviors
            .into_iter()
            .zip(envs)
            .enumerate()
            .map(|(m, (behavior, env))| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(WORKER_RNG_STREAM_BASE + 97 * salt + m as u64);
                let nets: Vec<ClusterAgents<F>> = servers
                    .iter()
                    .map(|s| {
                        let (actor, critic, stamp) = s.snapshot();
                        ClusterAgents {
                            guide_actor: actor.clone(),
                            guide_critic: critic.clone(),
                            actor,
                            critic,
                            sync_stamp: stamp,
                        }
                    })
                    .collect();
                let replays = clusters
                    .iter()
                    .map(|_| ReplayBuffer::new(params.replay_capacity))
                    .collect();
                Worker {
                    id: m,
                    behavior,
                    env,
                    nets,
                    replays,
                    rng,
                    log: Vec::new(),
                    metrics: MetricsSeries::new(),
                    iteration: 0,
                }
            })
            .collect();

        Trainer { clusters, servers, workers, params, bounds }
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn params(&self) -> &TrainParams<F> {
        &self.params
    }

    pub fn server(&self, cluster: usize) -> &ParameterServer<F> {
        &self.servers[cluster]
    }

    /// Frozen copy of the current global policy.
    pub fn policy(&self) -> DeterministicPolicy<F> {
        DeterministicPolicy {
            clusters: self.clusters.clone(),
            actors: self.servers.iter().map(|s| s.actor().clone()).collect(),
            bounds: self.bounds,
        }
    }

    /// Global critics, aligned with [`Trainer::clusters`].
    pub fn critics(&self) -> Vec<DenseNetwork<F>> {
        self.servers.iter().map(|s| s.critic().clone()).collect()
    }

    /// Tears the trainer down, handing the worker environments back in
    /// worker order (stage transitions carry them to the next trainer).
    pub fn into_envs(self) -> Vec<NetworkState<F>> {
        self.workers.into_iter().map(|w| w.env).collect()
    }

    /// One deterministic round: every worker iterates against the same
    /// snapshots in worker order, then each server applies the collected
    /// round of gradients.
    pub fn round_robin_step(&mut self) -> Result<(), AgentError> {
        let mut pending: Vec<Vec<GradientSubmission<F>>> =
            self.clusters.iter().map(|_| Vec::new()).collect();
        let snapshots: Vec<_> = self.servers.iter().map(|s| s.snapshot()).collect();
        for worker in &mut self.workers {
            let subs = worker.iterate(&self.clusters, &snapshots, &self.params, self.bounds)?;
            for (h, sub) in subs {
                pending[h].push(sub);
            }
        }
        for (server, subs) in self.servers.iter_mut().zip(&pending) {
            server.apply(subs)?;
        }
        Ok(())
    }

    /// Runs `iterations` deterministic round-robin rounds.
    pub fn train_round_robin(&mut self, iterations: u64) -> Result<(), AgentError> {
        for _ in 0..iterations {
            self.round_robin_step()?;
        }
        Ok(())
    }

    /// Runs workers on their own threads against mutex-guarded servers;
    /// gradient submissions apply as they arrive (fire-and-forget order).
    pub fn train_threaded(&mut self, iterations: u64) -> Result<(), AgentError> {
        let servers: Vec<Mutex<ParameterServer<F>>> =
            self.servers.drain(..).map(Mutex::new).collect();
        let clusters = &self.clusters;
        let params = &self.params;
        let bounds = self.bounds;
        let result: Result<(), AgentError> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for worker in &mut self.workers {
                let servers = &servers;
                handles.push(scope.spawn(move || -> Result<(), AgentError> {
                    for _ in 0..iterations {
                        let snapshots: Vec<_> = servers
                            .iter()
                            .map(|s| s.lock().expect("server lock").snapshot())
                            .collect();
                        let subs = worker.iterate(clusters, &snapshots, params, bounds)?;
                        for (h, sub) in subs {
                            servers[h].lock().expect("server lock").apply(&[sub])?;
                        }
                    }
                    Ok(())
                }));
            }
            let mut first_err = None;
            for handle in handles {
                if let Err(e) = handle.join().expect("worker thread panicked") {
                    first_err.get_or_insert(e);
                }
            }
            first_err.map_or(Ok(()), Err)
        });
        self.servers = servers
            .into_iter()
            .map(|m| m.into_inner().expect("server mutex"))
            .collect();
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::generate_scenario;

    fn tiny_params() -> TrainParams<f64> {
        TrainParams {
            hidden: vec![8, 6],
            batch_size: 4,
            control_interval: 1,
            ..TrainParams::default()
        }
    }

    fn tiny_trainer(behaviors: Vec<BehaviorPolicy<f64>>) -> Trainer<f64> {
        let scn = generate_scenario::<f64>(5, 4, 24, 150.0, 96_000.0).unwrap();
        let clusters = vec![vec![0, 1], vec![2, 3]];
        Trainer::new(&scn, clusters, behaviors, tiny_params())
    }

    #[test]
    fn collect_only_before_batch_fills() {
        let mut t = tiny_trainer(vec![BehaviorPolicy::noisy_default()]);
        let before = t.server(0).actor().clone();
        // batch_size = 4: the first 3 rounds only collect.
        for _ in 0..3 {
            t.round_robin_step().unwrap();
        }
        assert_eq!(t.workers[0].replay_len(0), 3);
        assert_eq!(t.server(0).actor().weights(), before.weights());
        // After synchronization local equals global bit for bit.
        for h in 0..2 {
            let (ga, _, _) = t.server(h).snapshot();
            assert_eq!(t.workers[0].local_actor(h).weights(), ga.weights());
        }
        // One more round fills the batch and updates the globals.
        t.round_robin_step().unwrap();
        assert_eq!(t.workers[0].replay_len(0), 4);
        assert_ne!(t.server(0).actor().weights(), before.weights());
    }

    #[test]
    fn each_iteration_stores_one_transition_per_cluster() {
        let mut t = tiny_trainer(vec![
            BehaviorPolicy::noisy_default(),
            BehaviorPolicy::RuleStatic,
        ]);
        for i in 1..=5 {
            t.round_robin_step().unwrap();
            for w in &t.workers {
                assert_eq!(w.replay_len(0), i);
                assert_eq!(w.replay_len(1), i);
            }
        }
        assert_eq!(t.workers[0].log.len(), 5);
        assert_eq!(t.workers[1].log[0].behavior, "rule-static");
    }

    #[test]
    fn round_robin_is_bit_reproducible() {
        let behaviors = || {
            vec![
                BehaviorPolicy::noisy_default(),
                BehaviorPolicy::RuleStatic,
                BehaviorPolicy::RuleAdaptive,
            ]
        };
        let mut a = tiny_trainer(behaviors());
        let mut b = tiny_trainer(behaviors());
        a.train_round_robin(12).unwrap();
        b.train_round_robin(12).unwrap();
        for h in 0..2 {
            let (wa, wb) = (a.server(h).actor(), b.server(h).actor());
            for (x, y) in wa.weights().iter().zip(wb.weights()) {
                for (p, q) in x.iter().zip(y.iter()) {
                    assert_eq!(p.to_bits(), q.to_bits());
                }
            }
        }
        for (ra, rb) in a.workers[0].log.iter().zip(&b.workers[0].log) {
            assert_eq!(ra.reward.to_bits(), rb.reward.to_bits());
        }
    }

    #[test]
    fn threaded_training_keeps_parameters_finite() {
        let mut t = tiny_trainer(vec![
            BehaviorPolicy::noisy_default(),
            BehaviorPolicy::RuleStatic,
            BehaviorPolicy::UniformRandom,
        ]);
        t.train_threaded(10).unwrap();
        for h in 0..2 {
            assert!(t.server(h).actor().parameters_finite());
            assert!(t.server(h).critic().parameters_finite());
            assert!(t.server(h).iteration() > 0);
        }
        for w in &t.workers {
            assert_eq!(w.replay_len(0), 10);
            assert_eq!(w.metrics.len(), 10);
        }
    }

    #[test]
    fn compose_and_restrict_are_inverse_on_cluster_pairs() {
        let clusters = vec![vec![0usize, 2, 3], vec![1usize, 4]];
        let bounds = CioBounds::default();
        let mut a0 = CioMatrix::zero_with_bounds(3, bounds);
        a0.set(0, 1, 2.0);
        a0.set(1, 2, -3.5);
        let mut a1 = CioMatrix::zero_with_bounds(2, bounds);
        a1.set(0, 1, 4.0);
        let full = compose_full_cio(5, &clusters, &[a0.clone(), a1.clone()], bounds);
        assert!(full.is_valid());
        // Cross-cluster pairs stay zero.
        assert_eq!(full.get(0, 1), 0.0);
        assert_eq!(full.get(2, 4), 0.0);
        // Intra-cluster offsets land on the right global pairs.
        assert_eq!(full.get(0, 2), 2.0);
        assert_eq!(full.get(2, 3), -3.5);
        assert_eq!(full.get(1, 4), 4.0);
        assert_eq!(restrict_cio(&full, &clusters[0], bounds), a0);
        assert_eq!(restrict_cio(&full, &clusters[1], bounds), a1);
    }

    #[test]
    fn deterministic_policy_emits_valid_actions() {
        let scn = generate_scenario::<f64>(8, 5, 30, 200.0, 96_000.0).unwrap();
        let t = Trainer::new(
            &scn,
            vec![vec![0, 1, 2], vec![3, 4]],
            vec![BehaviorPolicy::noisy_default()],
            tiny_params(),
        );
        let policy = t.policy();
        let env = NetworkState::from_scenario(&scn, 99);
        let action = policy.act(&env).unwrap();
        assert!(action.is_valid());
        assert_eq!(action.n(), 5);
    }
}
