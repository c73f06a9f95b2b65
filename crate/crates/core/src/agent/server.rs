//! The shared aggregator: applies worker gradients to the global actor and
//! critic, filtering out submissions older than the staleness bound.

use super::AgentError;
use crate::nn::{DenseNetwork, GradientSet, Optimizer};
use crate::scalar::Real;

/// Submissions lagging the server iteration by more than this many rounds
/// are dropped.
pub const DEFAULT_MAX_STALENESS: u64 = 10;

/// One worker's gradient pair for a single agent; both sets carry the
/// iteration stamp of the snapshot they were computed against.
#[derive(Debug, Clone)]
pub struct GradientSubmission<F> {
    pub actor: GradientSet<F>,
    pub critic: GradientSet<F>,
}

impl<F: Real> GradientSubmission<F> {
    pub fn timestamp(&self) -> u64 {
        self.actor.timestamp
    }
}

/// Counters returned by one apply round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ApplyStats {
    pub applied: usize,
    pub dropped_stale: usize,
}

/// Global parameter store for one agent (one cluster): actor, critic, their
/// optimizers, and the iteration counter used for staleness filtering.
#[derive(Debug, Clone)]
pub struct ParameterServer<F> {
    actor: DenseNetwork<F>,
    critic: DenseNetwork<F>,
    actor_opt: Optimizer<F>,
    critic_opt: Optimizer<F>,
    iteration: u64,
    max_staleness: u64,
}

impl<F: Real> ParameterServer<F> {
    pub fn new(
        actor: DenseNetwork<F>,
        critic: DenseNetwork<F>,
        actor_opt: Optimizer<F>,
        critic_opt: Optimizer<F>,
        max_staleness: u64,
    ) -> Self {
        ParameterServer { actor, critic, actor_opt, critic_opt, iteration: 0, max_staleness }
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn actor(&self) -> &DenseNetwork<F> {
        &self.actor
    }

    pub fn critic(&self) -> &DenseNetwork<F> {
        &self.critic
    }

    /// Read-only copy of the current global parameters plus the iteration
    /// to stamp gradients with.
    pub fn snapshot(&self) -> (DenseNetwork<F>, DenseNetwork<F>, u64) {
        (self.actor.clone(), self.critic.clone(), self.iteration)
    }

    /// Applies a round of submissions in order, dropping those whose stamp
    /// lags by more than the staleness bound, then advances the iteration
    /// counter (also for empty rounds).
    pub fn apply(&mut self, submissions: &[GradientSubmission<F>]) -> Result<ApplyStats, AgentError> {
        let mut stats = ApplyStats::default();
        for sub in submissions {
            if self.iteration.saturating_sub(sub.timestamp()) > self.max_staleness {
                stats.dropped_stale += 1;
                continue;
            }
            self.actor_opt.apply(&mut self.actor, &sub.actor)?;
            self.critic_opt.apply(&mut self.critic, &sub.critic)?;
            stats.applied += 1;
        }
        self.iteration += 1;
        Ok(stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{GradientSet, OutputActivation};
    use ndarray::{arr1, arr2};

    fn scalar_net(w: f64) -> DenseNetwork<f64> {
        DenseNetwork::from_parameters(
            vec![arr2(&[[w]])],
            vec![arr1(&[0.0])],
            OutputActivation::Identity,
        )
    }

    fn submission(net: &DenseNetwork<f64>, g: f64, timestamp: u64) -> GradientSubmission<f64> {
        let mut grads = GradientSet::zeros_like(net);
        grads.weights[0][[0, 0]] = g;
        grads.timestamp = timestamp;
        GradientSubmission { actor: grads.clone(), critic: grads }
    }

    fn server() -> ParameterServer<f64> {
        ParameterServer::new(
            scalar_net(0.0),
            scalar_net(0.0),
            Optimizer::sgd(0.1),
            Optimizer::sgd(0.1),
            DEFAULT_MAX_STALENESS,
        )
    }

    #[test]
    fn two_unit_submissions_accumulate() {
        let mut s = server();
        let subs = vec![submission(s.actor(), 1.0, 0), submission(s.actor(), 1.0, 0)];
        let stats = s.apply(&subs).unwrap();
        assert_eq!(stats.applied, 2);
        assert!((s.actor().weights()[0][[0, 0]] - 0.2).abs() < 1e-15);
        assert_eq!(s.iteration(), 1);
    }

    #[test]
    fn batched_apply_equals_sequential_apply() {
        let g1 = submission(&scalar_net(0.0), 0.7, 0);
        let g2 = submission(&scalar_net(0.0), -0.3, 0);

        let mut batched = server();
        batched.apply(&[g1.clone(), g2.clone()]).unwrap();

        let mut sequential = server();
        sequential.apply(&[g1]).unwrap();
        sequential.apply(&[g2]).unwrap();

        assert_eq!(
            batched.actor().weights()[0][[0, 0]].to_bits(),
            sequential.actor().weights()[0][[0, 0]].to_bits()
        );
    }

    #[test]
    fn stale_submissions_dropped() {
        let mut s = server();
        // Advance the counter beyond the staleness window.
        for _ in 0..(DEFAULT_MAX_STALENESS + 2) {
            s.apply(&[]).unwrap();
        }
        let stale = submission(s.actor(), 1.0, 0);
        let before = s.actor().weights()[0][[0, 0]];
        let stats = s.apply(&[stale]).unwrap();
        assert_eq!(stats.dropped_stale, 1);
        assert_eq!(stats.applied, 0);
        assert_eq!(s.actor().weights()[0][[0, 0]], before);
    }

    #[test]
    fn fresh_enough_submissions_accepted_at_the_bound() {
        let mut s = server();
        for _ in 0..DEFAULT_MAX_STALENESS {
            s.apply(&[]).unwrap();
        }
        // Lag is exactly the bound: still accepted.
        let edge = submission(s.actor(), 1.0, 0);
        let stats = s.apply(&[edge]).unwrap();
        assert_eq!(stats.applied, 1);
    }

    #[test]
    fn empty_round_advances_counter_only() {
        let mut s = server();
        let before = s.actor().clone();
        s.apply(&[]).unwrap();
        assert_eq!(s.iteration(), 1);
        assert_eq!(s.actor().weights(), before.weights());
    }

    #[test]
    fn non_finite_submission_propagates_divergence() {
        let mut s = server();
        let bad = submission(s.actor(), f64::INFINITY, 0);
        assert!(s.apply(&[bad]).is_err());
    }
}
