//! Off-policy deep actor-critic learner: replay buffers, guided TD
//! targets, mini-batch actor/critic gradients, behavior policies, and the
//! parameter-server training loops.

mod server;
mod trainer;

pub use server::{GradientSubmission, ParameterServer, DEFAULT_MAX_STALENESS};
pub use trainer::{compose_full_cio, restrict_cio, DeterministicPolicy, Trainer, TrainParams, Worker, WorkerLogRow};

use crate::baselines;
use crate::env::{CioBounds, CioMatrix, EnvError, StateVector};
use crate::nn::{DenseNetwork, GradientSet, NnError};
use crate::scalar::Real;
use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use std::collections::VecDeque;
use thiserror::Error;

/// Local experience replay capacity.
pub const DEFAULT_REPLAY_CAPACITY: usize = 100_000;
/// Mini-batch size.
pub const DEFAULT_BATCH_SIZE: usize = 64;
/// Exploration noise of the noisy-target behavior policy (dB).
pub const DEFAULT_NOISE_SIGMA_DB: f64 = 1.0;
/// Offsets are scaled by this factor at the critic input so that action
/// features share the magnitude of the load/edge features (matched to the
/// default +/-6 dB bounds).
pub const ACTION_INPUT_SCALE: f64 = 1.0 / 6.0;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("replay holds {have} transitions, need {need}")]
    UnderfullReplay { have: usize, need: usize },
    #[error("empty mini-batch")]
    EmptyBatch,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// One stored interaction: cluster state, upper-triangle action, reward,
/// next state.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<F> {
    pub state: Array1<F>,
    pub action: Array1<F>,
    pub reward: F,
    pub next_state: Array1<F>,
}

/// Bounded FIFO store of transitions; eviction is strictly oldest-first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<F> {
    buf: VecDeque<Transition<F>>,
    capacity: usize,
}

impl<F: Real> ReplayBuffer<F> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer { buf: VecDeque::new(), capacity }
    }

    pub fn push(&mut self, t: Transition<F>) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition<F>> {
        self.buf.iter()
    }

    /// Draws `k` transitions uniformly with replacement. Deterministic
    /// under a seeded RNG; rejects an underfull replay.
    pub fn sample_uniform<R: Rng>(
        &self,
        k: usize,
        rng: &mut R,
    ) -> Result<Vec<&Transition<F>>, AgentError> {
        if self.len() < k {
            return Err(AgentError::UnderfullReplay { have: self.len(), need: k });
        }
        Ok((0..k).map(|_| &self.buf[rng.gen_range(0..self.buf.len())]).collect())
    }
}

/// Exploration policy followed by one worker.
#[derive(Debug, Clone, PartialEq)]
pub enum BehaviorPolicy<F> {
    /// Target policy plus independent Gaussian noise, re-clamped.
    NoisyTarget { sigma_db: F },
    /// Fixed-step offset rule on the cluster loads.
    RuleStatic,
    /// Adaptive-step offset rule on the cluster loads.
    RuleAdaptive,
    /// Uniform draws within the offset bounds.
    UniformRandom,
}

impl<F: Real> BehaviorPolicy<F> {
    pub fn noisy_default() -> Self {
        BehaviorPolicy::NoisyTarget { sigma_db: F::lit(DEFAULT_NOISE_SIGMA_DB) }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            BehaviorPolicy::NoisyTarget { .. } => "noisy-target",
            BehaviorPolicy::RuleStatic => "rule-static",
            BehaviorPolicy::RuleAdaptive => "rule-adaptive",
            BehaviorPolicy::UniformRandom => "uniform-random",
        }
    }
}

/// Deterministic target policy: actor forward pass reshaped into the
/// antisymmetric offset matrix for an `n`-cell scope.
pub fn select_action<F: Real>(
    actor: &DenseNetwork<F>,
    state: &StateVector<F>,
    n: usize,
    bounds: CioBounds<F>,
) -> Result<CioMatrix<F>, AgentError> {
    let input = Array1::from_vec(state.to_vec());
    let out = actor.forward(input.view())?;
    if out.len() != n * (n - 1) / 2 {
        return Err(AgentError::DimensionMismatch(format!(
            "actor emits {} offsets, scope of {n} cells needs {}",
            out.len(),
            n * (n - 1) / 2
        )));
    }
    Ok(CioMatrix::from_upper_triangle(n, out.as_slice().unwrap(), bounds))
}

/// Exploration action for one cluster scope. Every branch yields a valid
/// bounded antisymmetric matrix.
pub fn behavior_action<F: Real, R: Rng>(
    policy: &BehaviorPolicy<F>,
    state: &StateVector<F>,
    current_cio: &CioMatrix<F>,
    actor: &DenseNetwork<F>,
    rng: &mut R,
) -> Result<CioMatrix<F>, AgentError> {
    let n = current_cio.n();
    let bounds = current_cio.bounds();
    match policy {
        BehaviorPolicy::NoisyTarget { sigma_db } => {
            let base = select_action(actor, state, n, bounds)?;
            let mut out = base.clone();
            for i in 0..n {
                for j in (i + 1)..n {
                    let noise = F::standard_normal(rng) * *sigma_db;
                    out.set(i, j, base.get(i, j) + noise);
                }
            }
            Ok(out)
        }
        BehaviorPolicy::RuleStatic => {
            let pairs = baselines::all_ordered_pairs(n);
            Ok(baselines::rule_static(&state.centered_loads, current_cio, &pairs))
        }
        BehaviorPolicy::RuleAdaptive => {
            let pairs = baselines::all_ordered_pairs(n);
            Ok(baselines::rule_adaptive(&state.centered_loads, current_cio, &pairs))
        }
        BehaviorPolicy::UniformRandom => {
            let lo = bounds.clamp_pair(F::neg_infinity());
            let hi = bounds.clamp_pair(F::infinity());
            let mut out = CioMatrix::zero_with_bounds(n, bounds);
            for i in 0..n {
                for j in (i + 1)..n {
                    out.set(i, j, rng.gen_range(lo..=hi));
                }
            }
            Ok(out)
        }
    }
}

/// Critic input rows: `[state | action * ACTION_INPUT_SCALE]`.
pub fn critic_input<F: Real>(states: ArrayView2<F>, actions: ArrayView2<F>) -> Array2<F> {
    let scaled = actions.mapv(|v| v * F::lit(ACTION_INPUT_SCALE));
    let views = [states.reborrow(), scaled.view()];
    concatenate(Axis(1), &views).expect("row counts match")
}

/// Single-sample form of [`critic_input`].
pub fn critic_input_vec<F: Real>(state: &Array1<F>, action: &Array1<F>) -> Array1<F> {
    let scaled = action.mapv(|v| v * F::lit(ACTION_INPUT_SCALE));
    concatenate(Axis(0), &[state.view(), scaled.view()]).expect("1-d concat")
}

fn stack_rows<F: Real>(rows: &[&Array1<F>]) -> Array2<F> {
    let k = rows.len();
    let d = rows.first().map_or(0, |r| r.len());
    Array2::from_shape_fn((k, d), |(i, j)| rows[i][j])
}

/// Guided one-step target: `r + gamma * Q_guide(s', pi_guide(s'))`.
pub fn td_target<F: Real>(
    transition: &Transition<F>,
    guide_actor: &DenseNetwork<F>,
    guide_critic: &DenseNetwork<F>,
    gamma: F,
) -> Result<F, AgentError> {
    let next_action = guide_actor.forward(transition.next_state.view())?;
    let input = critic_input_vec(&transition.next_state, &next_action);
    let q = guide_critic.forward(input.view())?;
    Ok(transition.reward + gamma * q[0])
}

/// Mini-batch critic gradient: the average of `(y_i - Q(s_i, a_i)) *
/// grad_w Q(s_i, a_i)`, oriented so a positive-rate update reduces the
/// squared TD loss. Also returns that loss for logging.
pub fn critic_minibatch_gradient<F: Real>(
    batch: &[&Transition<F>],
    critic: &DenseNetwork<F>,
    guide_actor: &DenseNetwork<F>,
    guide_critic: &DenseNetwork<F>,
    gamma: F,
) -> Result<(GradientSet<F>, F), AgentError> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let k = batch.len();
    let kf = F::lit(k as f64);
    let states = stack_rows(&batch.iter().map(|t| &t.state).collect::<Vec<_>>());
    let actions = stack_rows(&batch.iter().map(|t| &t.action).collect::<Vec<_>>());
    let next_states = stack_rows(&batch.iter().map(|t| &t.next_state).collect::<Vec<_>>());

    let next_actions = guide_actor.forward_batch(next_states.view())?;
    let q_next =
        guide_critic.forward_batch(critic_input(next_states.view(), next_actions.view()).view())?;
    let q = critic.forward_batch(critic_input(states.view(), actions.view()).view())?;

    let mut upstream = Array2::zeros((k, 1));
    let mut loss = F::zero();
    for i in 0..k {
        let y = batch[i].reward + gamma * q_next[[i, 0]];
        let delta = y - q[[i, 0]];
        loss += delta * delta;
        upstream[[i, 0]] = delta / kf;
    }
    let grads =
        critic.param_gradient_batch(critic_input(states.view(), actions.view()).view(), upstream.view())?;
    Ok((grads, loss / kf))
}

/// Anything that can score a (state, action) pair and differentiate the
/// score with respect to the action. Implemented by the dense critic and
/// by closed-form toys in tests.
pub trait ActionValue<F: Real> {
    /// `d Q / d a` evaluated row-wise: one gradient row per sample.
    fn action_gradient_batch<'a>(
        &self,
        states: ArrayView2<'a, F>,
        actions: ArrayView2<'a, F>,
    ) -> Result<Array2<F>, AgentError>;
}

/// Dense critic over concatenated `[state | action]` inputs.
pub struct CriticNet<'a, F> {
    pub net: &'a DenseNetwork<F>,
    pub state_dim: usize,
}

impl<F: Real> ActionValue<F> for CriticNet<'_, F> {
    fn action_gradient_batch<'a>(
        &self,
        states: ArrayView2<'a, F>,
        actions: ArrayView2<'a, F>,
    ) -> Result<Array2<F>, AgentError> {
        let full = self.net.input_gradient_batch(critic_input(states, actions).view())?;
        // Chain rule through the input scaling.
        Ok(full
            .slice(ndarray::s![.., self.state_dim..])
            .mapv(|v| v * F::lit(ACTION_INPUT_SCALE)))
    }
}

/// Mini-batch policy gradient: the average of `grad_theta pi(s_i) *
/// grad_a Q(s_i, a)|_{a = pi(s_i)}` — the ascent direction on the
/// objective.
pub fn actor_minibatch_gradient<F: Real>(
    batch: &[&Transition<F>],
    actor: &DenseNetwork<F>,
    q: &impl ActionValue<F>,
) -> Result<GradientSet<F>, AgentError> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let k = batch.len();
    let kf = F::lit(k as f64);
    let states = stack_rows(&batch.iter().map(|t| &t.state).collect::<Vec<_>>());
    let actions = actor.forward_batch(states.view())?;
    let mut upstream = q.action_gradient_batch(states.view(), actions.view())?;
    upstream.mapv_inplace(|v| v / kf);
    Ok(actor.param_gradient_batch(states.view(), upstream.view())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{apply_gradients, Optimizer, OutputActivation};
    use ndarray::{arr1, arr2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn transition(state: &[f64], action: &[f64], reward: f64, next: &[f64]) -> Transition<f64> {
        Transition {
            state: arr1(state),
            action: arr1(action),
            reward,
            next_state: arr1(next),
        }
    }

    #[test]
    fn replay_fifo_eviction() {
        let mut replay = ReplayBuffer::<f64>::new(10);
        for i in 0..13 {
            replay.push(transition(&[i as f64], &[0.0], i as f64, &[0.0]));
        }
        assert_eq!(replay.len(), 10);
        let rewards: Vec<f64> = replay.iter().map(|t| t.reward).collect();
        // The 3 oldest are gone, the newest 10 are present in order.
        assert_eq!(rewards, (3..13).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn sampling_rejects_underfull_replay() {
        let mut replay = ReplayBuffer::<f64>::new(10);
        replay.push(transition(&[0.0], &[0.0], 1.0, &[0.0]));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(replay.sample_uniform(2, &mut rng).is_err());
        let one = replay.sample_uniform(1, &mut rng).unwrap();
        assert_eq!(one[0].reward, 1.0);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mut replay = ReplayBuffer::<f64>::new(100);
        for i in 0..50 {
            replay.push(transition(&[i as f64], &[0.0], i as f64, &[0.0]));
        }
        let a: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            replay.sample_uniform(20, &mut rng).unwrap().iter().map(|t| t.reward).collect()
        };
        let b: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            replay.sample_uniform(20, &mut rng).unwrap().iter().map(|t| t.reward).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_chi_square_uniformity() {
        let mut replay = ReplayBuffer::<f64>::new(10);
        for i in 0..10 {
            replay.push(transition(&[0.0], &[0.0], i as f64, &[0.0]));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000;
        let mut counts = [0u64; 10];
        for _ in 0..draws / 10 {
            for t in replay.sample_uniform(10, &mut rng).unwrap() {
                counts[t.reward as usize] += 1;
            }
        }
        let expected = draws as f64 / 10.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // 9 degrees of freedom at the 0.01 significance level.
        assert!(chi2 < 21.666, "chi-square statistic {chi2} too large");
    }

    fn toy_actor(n_cells: usize, state_dim: usize) -> DenseNetwork<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        DenseNetwork::new(
            &[state_dim, 8, n_cells * (n_cells - 1) / 2],
            OutputActivation::Bounded { lo: -6.0, hi: 6.0 },
            &mut rng,
        )
    }

    #[test]
    fn select_action_is_antisymmetric_and_bounded() {
        let actor = toy_actor(4, 8);
        let state = StateVector {
            centered_loads: vec![0.1, -0.05, 0.0, -0.05],
            edge_fractions: vec![0.3, 0.2, 0.5, 0.1],
        };
        let cio = select_action(&actor, &state, 4, CioBounds::default()).unwrap();
        assert!(cio.is_valid());
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(cio.get(i, j), -cio.get(j, i));
            }
        }
    }

    #[test]
    fn select_action_near_zero_at_init() {
        let actor = toy_actor(4, 8);
        let state = StateVector {
            centered_loads: vec![0.2, -0.1, -0.05, -0.05],
            edge_fractions: vec![0.5, 0.5, 0.5, 0.5],
        };
        let cio = select_action(&actor, &state, 4, CioBounds::default()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!(cio.get(i, j).abs() < 0.1);
            }
        }
    }

    #[test]
    fn saturated_actor_pins_offsets_at_the_bound() {
        // One linear layer into the bounded head with huge weights.
        let actor = DenseNetwork::from_parameters(
            vec![arr2(&[[1e9], [1e9]])],
            vec![arr1(&[0.0])],
            OutputActivation::Bounded { lo: -6.0, hi: 6.0 },
        );
        let state = StateVector { centered_loads: vec![0.5], edge_fractions: vec![0.5] };
        let cio: CioMatrix<f64> = select_action(&actor, &state, 2, CioBounds::default()).unwrap();
        assert_eq!(cio.get(0, 1).abs(), 6.0);
    }

    #[test]
    fn noisy_target_with_zero_sigma_equals_target() {
        let actor = toy_actor(3, 6);
        let state = StateVector {
            centered_loads: vec![0.1, 0.0, -0.1],
            edge_fractions: vec![0.4, 0.2, 0.6],
        };
        let current = CioMatrix::zero(3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noisy = behavior_action(
            &BehaviorPolicy::NoisyTarget { sigma_db: 0.0 },
            &state,
            &current,
            &actor,
            &mut rng,
        )
        .unwrap();
        let target = select_action(&actor, &state, 3, current.bounds()).unwrap();
        assert_eq!(noisy, target);
    }

    #[test]
    fn uniform_random_mean_is_near_zero() {
        let actor = toy_actor(2, 4);
        let state = StateVector { centered_loads: vec![0.0, 0.0], edge_fractions: vec![0.0, 0.0] };
        let current = CioMatrix::zero(2);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut sum = 0.0;
        let draws = 10_000;
        for _ in 0..draws {
            let a = behavior_action(
                &BehaviorPolicy::UniformRandom,
                &state,
                &current,
                &actor,
                &mut rng,
            )
            .unwrap();
            sum += a.get(0, 1);
        }
        // Law of large numbers at this sample size.
        assert!((sum / draws as f64).abs() < 0.3);
    }

    #[test]
    fn rule_delegation_matches_baseline() {
        let actor = toy_actor(2, 4);
        // Raw loads [0.8, 0.2] centred to [0.3, -0.3]: the difference 0.6
        // drives the same step as the raw values.
        let state = StateVector { centered_loads: vec![0.3, -0.3], edge_fractions: vec![0.0, 0.0] };
        let current = CioMatrix::zero(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = behavior_action(
            &BehaviorPolicy::RuleStatic,
            &state,
            &current,
            &actor,
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.get(0, 1), -1.0);
    }

    #[test]
    fn all_behavior_actions_are_valid() {
        let actor = toy_actor(4, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let current = CioMatrix::zero(4);
        for policy in [
            BehaviorPolicy::noisy_default(),
            BehaviorPolicy::RuleStatic,
            BehaviorPolicy::RuleAdaptive,
            BehaviorPolicy::UniformRandom,
        ] {
            for _ in 0..100 {
                let state = StateVector {
                    centered_loads: (0..4).map(|_| rng.gen_range(-0.5..0.5)).collect(),
                    edge_fractions: (0..4).map(|_| rng.gen_range(0.0..1.0)).collect(),
                };
                let a = behavior_action(&policy, &state, &current, &actor, &mut rng).unwrap();
                assert!(a.is_valid(), "{} emitted an invalid action", policy.kind_name());
            }
        }
    }

    #[test]
    fn td_target_cases() {
        // Guide critic returning a constant 2 regardless of input.
        let guide_critic = DenseNetwork::from_parameters(
            vec![arr2(&[[0.0], [0.0]])],
            vec![arr1(&[2.0])],
            OutputActivation::Identity,
        );
        let guide_actor = DenseNetwork::from_parameters(
            vec![arr2(&[[0.0]])],
            vec![arr1(&[0.0])],
            OutputActivation::Identity,
        );
        let t = transition(&[0.0], &[0.0], 1.0, &[0.0]);
        let y = td_target(&t, &guide_actor, &guide_critic, 0.99).unwrap();
        assert!((y - 2.98).abs() < 1e-12);
        // Myopic case.
        assert_eq!(td_target(&t, &guide_actor, &guide_critic, 0.0).unwrap(), 1.0);
        // Zero guide critic: y = r.
        let zero_critic = DenseNetwork::from_parameters(
            vec![arr2(&[[0.0], [0.0]])],
            vec![arr1(&[0.0])],
            OutputActivation::Identity,
        );
        assert_eq!(td_target(&t, &guide_actor, &zero_critic, 0.99).unwrap(), 1.0);
    }

    #[test]
    fn critic_gradient_fitted_batch_is_zero() {
        // Critic already matching the targets: zero gradient.
        let critic = DenseNetwork::from_parameters(
            vec![arr2(&[[0.0], [0.0]])],
            vec![arr1(&[5.0])],
            OutputActivation::Identity,
        );
        let guide_actor = DenseNetwork::from_parameters(
            vec![arr2(&[[0.0]])],
            vec![arr1(&[0.0])],
            OutputActivation::Identity,
        );
        // Targets: r + 0 * anything = 5 = Q everywhere with gamma = 0.
        let t1 = transition(&[1.0], &[2.0], 5.0, &[0.0]);
        let t2 = transition(&[-1.0], &[0.5], 5.0, &[0.0]);
        let (g, loss) =
            critic_minibatch_gradient(&[&t1, &t2], &critic, &guide_actor, &critic, 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn critic_gradient_matches_hand_arithmetic() {
        // Scalar linear critic Q = w_s*s + w_a*a with w = (1, 2), bias 0.
        let critic = DenseNetwork::from_parameters(
            vec![arr2(&[[1.0], [2.0]])],
            vec![arr1(&[0.0])],
            OutputActivation::Identity,
        );
        // Guides pinned to zero: y_i = r_i.
        let guide_actor = DenseNetwork::from_parameters(
            vec![arr2(&[[0.0]])],
            vec![arr1(&[0.0])],
            OutputActivation::Identity,
        );
        let guide_critic = DenseNetwork::from_parameters(
            vec![arr2(&[[0.0], [0.0]])],
            vec![arr1(&[0.0])],
            OutputActivation::Identity,
        );
        // The critic reads [s | a/6]. Samples:
        //   (s=1, a=6, r=10) -> u = 1, Q = 3, delta = 7;
        //   (s=0, a=3, r=0)  -> u = 0.5, Q = 1, delta = -1.
        let t1 = transition(&[1.0], &[6.0], 10.0, &[0.0]);
        let t2 = transition(&[0.0], &[3.0], 0.0, &[0.0]);
        let (g, loss) =
            critic_minibatch_gradient(&[&t1, &t2], &critic, &guide_actor, &guide_critic, 0.99)
                .unwrap();
        // Hand arithmetic: grad w_s = (7*1 + -1*0)/2 = 3.5;
        //                  grad w_a = (7*1 + -1*0.5)/2 = 3.25;
        //                  grad b   = (7 - 1)/2 = 3; loss = (49+1)/2.
        assert!((g.weights[0][[0, 0]] - 3.5).abs() < 1e-12);
        assert!((g.weights[0][[1, 0]] - 3.25).abs() < 1e-12);
        assert!((g.biases[0][0] - 3.0).abs() < 1e-12);
        assert!((loss - 25.0).abs() < 1e-12);
    }

    #[test]
    fn k1_minibatch_equals_single_sample_rule_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..100 {
            let state_dim = 3;
            let action_dim = 2;
            let critic = DenseNetwork::<f64>::new(
                &[state_dim + action_dim, 6, 1],
                OutputActivation::Identity,
                &mut rng,
            );
            let actor = DenseNetwork::<f64>::new(
                &[state_dim, 5, action_dim],
                OutputActivation::Bounded { lo: -6.0, hi: 6.0 },
                &mut rng,
            );
            let guide_actor = actor.clone();
            let guide_critic = critic.clone();
            let t = Transition {
                state: Array1::from_iter((0..state_dim).map(|_| rng.gen_range(-1.0..1.0))),
                action: Array1::from_iter((0..action_dim).map(|_| rng.gen_range(-6.0..6.0))),
                reward: rng.gen_range(0.1..3.0),
                next_state: Array1::from_iter((0..state_dim).map(|_| rng.gen_range(-1.0..1.0))),
            };
            let gamma = 0.99;

            // K = 1 mini-batch.
            let (batch_grad, _) =
                critic_minibatch_gradient(&[&t], &critic, &guide_actor, &guide_critic, gamma)
                    .unwrap();

            // Single-sample rule: delta * grad_w Q(s, a).
            let y = td_target(&t, &guide_actor, &guide_critic, gamma).unwrap();
            let input = critic_input_vec(&t.state, &t.action);
            let q = critic.forward(input.view()).unwrap()[0];
            let delta = y - q;
            let single = critic
                .param_gradient(input.view(), arr1(&[delta]).view())
                .unwrap();
            for (a, b) in batch_grad.weights.iter().zip(&single.weights) {
                for (x, y) in a.iter().zip(b.iter()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }

            // Actor side: K = 1 equals grad_theta pi * grad_a Q.
            let q_fn = CriticNet { net: &critic, state_dim };
            let batch_actor = actor_minibatch_gradient(&[&t], &actor, &q_fn).unwrap();
            let a_pi = actor.forward(t.state.view()).unwrap();
            let s_row = t.state.view().insert_axis(Axis(0));
            let a_row = a_pi.view().insert_axis(Axis(0));
            let upstream = q_fn
                .action_gradient_batch(s_row, a_row)
                .unwrap()
                .remove_axis(Axis(0));
            let single_actor = actor.param_gradient(t.state.view(), upstream.view()).unwrap();
            for (a, b) in batch_actor.weights.iter().zip(&single_actor.weights) {
                for (x, y) in a.iter().zip(b.iter()) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }

    #[test]
    fn actor_gradient_zero_when_critic_ignores_action() {
        let actor = toy_actor(3, 6);
        // Critic reads only the state columns.
        let critic = DenseNetwork::from_parameters(
            vec![arr2(&[[1.0], [1.0], [1.0], [1.0], [1.0], [1.0], [0.0], [0.0], [0.0]])],
            vec![arr1(&[0.0])],
            OutputActivation::Identity,
        );
        let t = transition(
            &[0.1, 0.2, -0.3, 0.5, 0.5, 0.5],
            &[0.0, 0.0, 0.0],
            1.0,
            &[0.1, 0.2, -0.3, 0.5, 0.5, 0.5],
        );
        let q_fn = CriticNet { net: &critic, state_dim: 6 };
        let g = actor_minibatch_gradient(&[&t], &actor, &q_fn).unwrap();
        assert!(g.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
    }

    /// Closed-form toy: Q(s, a) = -(a - 3)^2.
    struct QuadraticToy;

    impl ActionValue<f64> for QuadraticToy {
        fn action_gradient_batch<'a>(
            &self,
            _states: ArrayView2<'a, f64>,
            actions: ArrayView2<'a, f64>,
        ) -> Result<Array2<f64>, AgentError> {
            Ok(actions.mapv(|a| -2.0 * (a - 3.0)))
        }
    }

    #[test]
    fn toy_actor_ascends_to_the_quadratic_optimum() {
        // pi(s) = w*s + b with s = 0, so the policy output is b.
        let mut actor = DenseNetwork::from_parameters(
            vec![arr2(&[[0.0]])],
            vec![arr1(&[0.0])],
            OutputActivation::Identity,
        );
        let mut opt = Optimizer::sgd(0.01);
        let t = transition(&[0.0], &[0.0], 0.0, &[0.0]);
        for _ in 0..10_000 {
            let g = actor_minibatch_gradient(&[&t], &actor, &QuadraticToy).unwrap();
            apply_gradients(&mut actor, &g, &mut opt).unwrap();
        }
        let theta = actor.biases()[0][0];
        assert!((theta - 3.0).abs() < 1e-2, "theta = {theta}");
    }

    #[test]
    fn toy_gradient_matches_closed_form() {
        // gradient = 2*(3 - theta) at the bias for s = 0.
        let actor = DenseNetwork::from_parameters(
            vec![arr2(&[[0.0]])],
            vec![arr1(&[1.0])],
            OutputActivation::Identity,
        );
        let t = transition(&[0.0], &[0.0], 0.0, &[0.0]);
        let g = actor_minibatch_gradient(&[&t], &actor, &QuadraticToy).unwrap();
        assert!((g.biases[0][0] - 2.0 * (3.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn small_ascent_step_increases_batch_value() {
        // One small update along the policy gradient must not decrease the
        // mean Q over the same batch.
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let state_dim = 4;
        let action_dim = 2;
        let actor = DenseNetwork::<f64>::new(
            &[state_dim, 6, action_dim],
            OutputActivation::Bounded { lo: -6.0, hi: 6.0 },
            &mut rng,
        );
        let critic = DenseNetwork::<f64>::new(
            &[state_dim + action_dim, 8, 1],
            OutputActivation::Identity,
            &mut rng,
        );
        let transitions: Vec<Transition<f64>> = (0..16)
            .map(|_| Transition {
                state: Array1::from_iter((0..state_dim).map(|_| rng.gen_range(-1.0..1.0))),
                action: Array1::from_iter((0..action_dim).map(|_| rng.gen_range(-6.0..6.0))),
                reward: 1.0,
                next_state: Array1::from_iter((0..state_dim).map(|_| rng.gen_range(-1.0..1.0))),
            })
            .collect();
        let batch: Vec<&Transition<f64>> = transitions.iter().collect();

        let mean_q = |actor: &DenseNetwork<f64>| -> f64 {
            let states = stack_rows(&batch.iter().map(|t| &t.state).collect::<Vec<_>>());
            let actions = actor.forward_batch(states.view()).unwrap();
            let q = critic
                .forward_batch(critic_input(states.view(), actions.view()).view())
                .unwrap();
            q.mean().unwrap()
        };

        let before = mean_q(&actor);
        let q_fn = CriticNet { net: &critic, state_dim };
        let g = actor_minibatch_gradient(&batch, &actor, &q_fn).unwrap();
        let mut stepped = actor.clone();
        let mut opt = Optimizer::sgd(1e-4);
        apply_gradients(&mut stepped, &g, &mut opt).unwrap();
        let after = mean_q(&stepped);
        assert!(after >= before - 1e-12, "ascent step decreased the value: {before} -> {after}");
    }
}
