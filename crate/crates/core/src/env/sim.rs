//! Per-step network state: mobility, handover evaluation with admission
//! control, load recomputation, reward, and the RL observation vector.

use super::radio::{required_prbs, rsrp_dbm};
use super::{ChannelParams, CioMatrix, EnvError, Scenario, SmallCell, User};
use crate::scalar::{dbm_to_mw, Real};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Users whose best non-serving RSRP is within this many dB of the serving
/// RSRP count as edge users; matches the CIO tuning range so edge users are
/// exactly those whose handovers the offsets can influence.
pub const EDGE_GAP_DB: f64 = 6.0;

/// A3 trigger: neighbour RSRP must exceed serving RSRP by more than the
/// pair offset plus hysteresis (strict inequality).
pub fn a3_triggered<F: Real>(f_neighbor: F, f_serving: F, o_ij: F, hysteresis: F) -> bool {
    f_neighbor - f_serving > o_ij + hysteresis
}

/// Reward: inverse of the maximum load, capped at 100 for near-empty
/// networks (max load below 0.01).
pub fn reward<F: Real>(loads: &[F]) -> F {
    assert!(!loads.is_empty(), "reward requires at least one load");
    let max = loads.iter().copied().fold(F::zero(), F::max);
    if max < F::lit(0.01) {
        F::lit(100.0)
    } else {
        F::one() / max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandoverOutcome {
    Success,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HandoverEvent {
    pub user: usize,
    pub from: usize,
    pub to: usize,
    pub outcome: HandoverOutcome,
}

/// Observation of one cluster: mean-centred loads and edge-user fractions,
/// both in cluster member order.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<F> {
    pub centered_loads: Vec<F>,
    pub edge_fractions: Vec<F>,
}

impl<F: Real> StateVector<F> {
    pub fn dim(&self) -> usize {
        self.centered_loads.len() + self.edge_fractions.len()
    }

    /// Concatenated [centered loads | edge fractions].
    pub fn to_vec(&self) -> Vec<F> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.centered_loads);
        v.extend_from_slice(&self.edge_fractions);
        v
    }
}

/// Per-step outcome counters and the resulting loads.
#[derive(Debug, Clone)]
pub struct StepMetrics<F> {
    pub reward: F,
    pub loads: Vec<F>,
    pub ho_success: u32,
    pub ho_fail: u32,
}

/// Mutable simulation state. One instance is owned and stepped by exactly
/// one driver; independent replicas of the same scenario use distinct RNG
/// streams and share nothing.
#[derive(Debug, Clone)]
pub struct NetworkState<F> {
    pub cells: Vec<SmallCell<F>>,
    pub users: Vec<User<F>>,
    pub channel: ChannelParams<F>,
    pub area_side: F,
    cio: CioMatrix<F>,
    time: u64,
    rng: ChaCha8Rng,
    /// RSRP of every (user, cell) pair at the current positions, row-major.
    rsrp: Vec<F>,
    /// Required PRBs of each user at its current serving cell.
    user_prbs: Vec<F>,
}

impl<F: Real> NetworkState<F> {
    /// Builds a replica of `scenario`. `replica` selects the mobility RNG
    /// stream so that concurrent replicas evolve independently.
    pub fn from_scenario(scenario: &Scenario<F>, replica: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        // Stream 0 is consumed by scenario generation.
        rng.set_stream(1 + replica);
        let n = scenario.cells.len();
        let mut state = NetworkState {
            cells: scenario.cells.clone(),
            users: scenario.users.clone(),
            channel: scenario.channel.clone(),
            area_side: scenario.area_side,
            cio: CioMatrix::zero(n),
            time: 0,
            rng,
            rsrp: Vec::new(),
            user_prbs: vec![F::zero(); scenario.users.len()],
        };
        state.refresh_rsrp();
        state.recompute_loads();
        state
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn cio(&self) -> &CioMatrix<F> {
        &self.cio
    }

    pub fn loads(&self) -> Vec<F> {
        self.cells.iter().map(|c| c.load).collect()
    }

    fn rsrp_at(&self, user: usize, cell: usize) -> F {
        self.rsrp[user * self.cells.len() + cell]
    }

    fn refresh_rsrp(&mut self) {
        let n = self.cells.len();
        self.rsrp.clear();
        self.rsrp.reserve(self.users.len() * n);
        for user in &self.users {
            for cell in &self.cells {
                self.rsrp.push(rsrp_dbm(user, cell, &self.channel));
            }
        }
    }

    /// SINR of one user against its serving cell, from the RSRP cache.
    fn sinr_of(&self, user: usize, serving: usize) -> F {
        let n = self.cells.len();
        let noise = dbm_to_mw(self.channel.noise_dbm);
        let mut signal = F::zero();
        let mut interference = F::zero();
        for j in 0..n {
            let p = dbm_to_mw(self.rsrp[user * n + j]);
            if j == serving {
                signal = p;
            } else {
                interference += p;
            }
        }
        signal / (noise + interference)
    }

    fn required_prbs_of(&self, user: usize, serving: usize) -> F {
        let sinr = self.sinr_of(user, serving);
        let rate = super::radio::prb_rate(sinr, self.channel.prb_bandwidth);
        required_prbs(self.users[user].demand_bps, rate, self.channel.prb_cap)
    }

    /// Recomputes every user's required PRBs and every cell's load from the
    /// current positions and associations.
    fn recompute_loads(&mut self) {
        let mut totals = vec![F::zero(); self.cells.len()];
        for u in 0..self.users.len() {
            let serving = self.users[u].serving_cell;
            let prbs = self.required_prbs_of(u, serving);
            self.user_prbs[u] = prbs;
            totals[serving] += prbs;
        }
        for (cell, total) in self.cells.iter_mut().zip(totals) {
            cell.load = total / F::lit(cell.n_prb as f64);
        }
    }

    /// Evaluates A3 handovers for every user in ascending id order.
    ///
    /// Each user attempts at most one handover, toward the strongest
    /// neighbour satisfying the A3 condition (ties to the lower cell id).
    /// Attempts toward a cell whose load — tracked incrementally as
    /// admissions occur — exceeds the admission threshold are blocked.
    pub fn evaluate_handovers(&self) -> Vec<HandoverEvent> {
        let n = self.cells.len();
        let mut events = Vec::new();
        let mut working_loads = self.loads();
        let mut working_prbs = self.user_prbs.clone();

        for u in 0..self.users.len() {
            let serving = self.users[u].serving_cell;
            let f_i = self.rsrp_at(u, serving);
            let mut best: Option<(usize, F)> = None;
            for j in 0..n {
                if j == serving {
                    continue;
                }
                let f_j = self.rsrp_at(u, j);
                if a3_triggered(f_j, f_i, self.cio.get(serving, j), self.channel.hysteresis) {
                    let better = match best {
                        None => true,
                        Some((_, cur)) => f_j > cur,
                    };
                    if better {
                        best = Some((j, f_j));
                    }
                }
            }
            let Some((target, _)) = best else { continue };

            if working_loads[target] > self.channel.admission_threshold {
                events.push(HandoverEvent {
                    user: u,
                    from: serving,
                    to: target,
                    outcome: HandoverOutcome::Blocked,
                });
                continue;
            }

            // Admit: move the user's PRB demand between the working loads,
            // re-evaluating its channel at the target cell.
            let new_prbs = self.required_prbs_of(u, target);
            working_loads[serving] -=
                working_prbs[u] / F::lit(self.cells[serving].n_prb as f64);
            working_loads[target] += new_prbs / F::lit(self.cells[target].n_prb as f64);
            working_prbs[u] = new_prbs;
            events.push(HandoverEvent {
                user: u,
                from: serving,
                to: target,
                outcome: HandoverOutcome::Success,
            });
        }
        events
    }

    fn move_users(&mut self) {
        let dt = F::lit(super::TIME_STEP_S);
        let resample = F::lit(super::HEADING_RESAMPLE_PROB);
        let two_pi = F::lit(std::f64::consts::TAU);
        for user in &mut self.users {
            if self.rng.gen_range(F::zero()..F::one()) < resample {
                user.heading = self.rng.gen_range(F::zero()..two_pi);
            }
            let step = user.speed * dt;
            let mut x = user.position[0] + step * user.heading.cos();
            let mut y = user.position[1] + step * user.heading.sin();
            // Reflect at the area boundary, flipping the heading component.
            let side = self.area_side;
            let mut flip_x = false;
            let mut flip_y = false;
            while x < F::zero() || x > side {
                x = if x < F::zero() { -x } else { side + side - x };
                flip_x = !flip_x;
            }
            while y < F::zero() || y > side {
                y = if y < F::zero() { -y } else { side + side - y };
                flip_y = !flip_y;
            }
            if flip_x {
                user.heading = F::lit(std::f64::consts::PI) - user.heading;
            }
            if flip_y {
                user.heading = -user.heading;
            }
            user.position = [x, y];
        }
    }

    /// Advances one second: applies the action as the new CIO matrix, moves
    /// users, refreshes the channel, evaluates handovers, and recomputes
    /// loads. Rejects actions with the wrong size or violated invariants.
    pub fn step(&mut self, action: &CioMatrix<F>) -> Result<StepMetrics<F>, EnvError> {
        if action.n() != self.cells.len() {
            return Err(EnvError::InvalidAction(format!(
                "action is {}x{0}, network has {} cells",
                action.n(),
                self.cells.len()
            )));
        }
        if !action.is_valid() {
            return Err(EnvError::InvalidAction(
                "antisymmetry or bounds violated".to_string(),
            ));
        }
        self.cio = action.clone();
        self.move_users();
        self.refresh_rsrp();
        self.recompute_loads();

        let events = self.evaluate_handovers();
        let mut ho_success = 0;
        let mut ho_fail = 0;
        for ev in &events {
            match ev.outcome {
                HandoverOutcome::Success => {
                    self.users[ev.user].serving_cell = ev.to;
                    ho_success += 1;
                }
                HandoverOutcome::Blocked => ho_fail += 1,
            }
        }
        self.recompute_loads();
        self.time += 1;

        let loads = self.loads();
        Ok(StepMetrics { reward: reward(&loads), loads, ho_success, ho_fail })
    }

    /// Observation of `cluster` (a non-empty list of cell ids): loads
    /// centred by the cluster mean, plus per-cell edge-user fractions.
    pub fn observe_state(&self, cluster: &[usize]) -> StateVector<F> {
        assert!(!cluster.is_empty(), "cluster must be non-empty");
        let len = F::lit(cluster.len() as f64);
        let mean: F = cluster.iter().map(|&i| self.cells[i].load).sum::<F>() / len;
        let centered_loads: Vec<F> =
            cluster.iter().map(|&i| self.cells[i].load - mean).collect();

        let n = self.cells.len();
        let gap = F::lit(EDGE_GAP_DB);
        let mut user_count = vec![0u32; n];
        let mut edge_count = vec![0u32; n];
        for u in 0..self.users.len() {
            let serving = self.users[u].serving_cell;
            user_count[serving] += 1;
            let f_i = self.rsrp_at(u, serving);
            let mut best_neighbor = F::neg_infinity();
            for j in 0..n {
                if j != serving {
                    best_neighbor = best_neighbor.max(self.rsrp_at(u, j));
                }
            }
            if n > 1 && f_i - best_neighbor < gap {
                edge_count[serving] += 1;
            }
        }
        let edge_fractions: Vec<F> = cluster
            .iter()
            .map(|&i| {
                if user_count[i] == 0 {
                    F::zero()
                } else {
                    F::lit(edge_count[i] as f64) / F::lit(user_count[i] as f64)
                }
            })
            .collect();

        StateVector { centered_loads, edge_fractions }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::generate_scenario;
    use rand::Rng;

    #[test]
    fn a3_condition_boundaries() {
        // 10 > 3 + 3: attempt.
        assert!(a3_triggered(10.0, 0.0, 3.0, 3.0));
        // 6 > 6 fails: strict inequality.
        assert!(!a3_triggered(6.0, 0.0, 3.0, 3.0));
        // Negative offset pulls users toward a weaker cell: -4 > -8 + 3.
        assert!(a3_triggered(-4.0, 0.0, -8.0, 3.0));
    }

    #[test]
    fn reward_cases() {
        assert!((reward(&[0.2_f64, 0.5, 0.25]) - 2.0).abs() < 1e-12);
        assert_eq!(reward(&[0.0_f64, 0.0]), 100.0);
        assert!((reward(&[0.74_f64]) - 1.0 / 0.74).abs() < 1e-12);
        assert!((reward(&[0.74_f64]) - 1.351).abs() < 1e-3);
    }

    #[test]
    fn reward_times_max_load_is_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let loads: Vec<f64> = (0..6).map(|_| rng.gen_range(0.01..3.0)).collect();
            let max = loads.iter().cloned().fold(0.0, f64::max);
            if max >= 0.01 {
                assert!((reward(&loads) * max - 1.0).abs() < 1e-12);
            }
        }
    }

    fn small_state() -> NetworkState<f64> {
        let scn = generate_scenario::<f64>(11, 4, 30, 200.0, 96_000.0).unwrap();
        NetworkState::from_scenario(&scn, 0)
    }

    #[test]
    fn observe_state_centering_and_dimension() {
        let state = small_state();
        let sv = state.observe_state(&[0, 1, 2, 3]);
        assert_eq!(sv.dim(), 8);
        let sum: f64 = sv.centered_loads.iter().sum();
        assert!(sum.abs() < 1e-9);
        for e in &sv.edge_fractions {
            assert!((0.0..=1.0).contains(e));
        }
    }

    #[test]
    fn observe_state_equal_loads_center_to_zero() {
        let mut state = small_state();
        for c in &mut state.cells {
            c.load = 0.37;
        }
        let sv = state.observe_state(&[0, 1, 2, 3]);
        for v in &sv.centered_loads {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn centering_example_values() {
        let mut state = small_state();
        for (c, l) in state.cells.iter_mut().zip([0.2, 0.5, 0.25, 0.25]) {
            c.load = l;
        }
        let sv = state.observe_state(&[0, 1, 2, 3]);
        let expect = [-0.1, 0.2, -0.05, -0.05];
        for (got, want) in sv.centered_loads.iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn step_rejects_invalid_actions() {
        let mut state = small_state();
        // Wrong dimension.
        assert!(state.step(&CioMatrix::zero(3)).is_err());
        // Broken antisymmetry (corrupting the storage directly).
        let mut bad = CioMatrix::zero(4);
        bad.values[1] = 2.0; // (0,1) without the mirrored -(1,0)
        assert!(state.step(&bad).is_err());
        // Out-of-bounds entry.
        let mut oob = CioMatrix::zero(4);
        oob.values[2] = 9.0;
        oob.values[2 * 4] = -9.0;
        assert!(state.step(&oob).is_err());
    }

    #[test]
    fn stationary_users_zero_cio_is_a_fixed_point() {
        let mut state = small_state();
        for u in &mut state.users {
            u.speed = 0.0;
        }
        // Settle associations so no A3 trigger remains pending.
        let zero = CioMatrix::zero(4);
        state.step(&zero).unwrap();
        let loads_before = state.loads();
        let m = state.step(&zero).unwrap();
        assert_eq!(m.ho_success + m.ho_fail, 0, "no handovers at the fixed point");
        for (a, b) in loads_before.iter().zip(&m.loads) {
            assert!((a - b).abs() < 1e-12, "loads unchanged for stationary users");
        }
    }

    #[test]
    fn trajectories_are_deterministic() {
        let scn = generate_scenario::<f64>(21, 5, 50, 250.0, 112_000.0).unwrap();
        let mut a = NetworkState::from_scenario(&scn, 3);
        let mut b = NetworkState::from_scenario(&scn, 3);
        let mut action = CioMatrix::zero(5);
        for t in 0..50 {
            if t % 7 == 0 {
                action.set(0, 1, -2.0 + (t as f64) * 0.1);
            }
            let ma = a.step(&action).unwrap();
            let mb = b.step(&action).unwrap();
            assert_eq!(ma.reward.to_bits(), mb.reward.to_bits());
            for (x, y) in ma.loads.iter().zip(&mb.loads) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        for (ua, ub) in a.users.iter().zip(&b.users) {
            assert_eq!(ua.position[0].to_bits(), ub.position[0].to_bits());
            assert_eq!(ua.position[1].to_bits(), ub.position[1].to_bits());
        }
    }

    #[test]
    fn replicas_diverge_but_share_geometry() {
        let scn = generate_scenario::<f64>(21, 5, 50, 250.0, 112_000.0).unwrap();
        let mut a = NetworkState::from_scenario(&scn, 0);
        let mut b = NetworkState::from_scenario(&scn, 1);
        let action = CioMatrix::zero(5);
        for _ in 0..10 {
            a.step(&action).unwrap();
            b.step(&action).unwrap();
        }
        let same = a
            .users
            .iter()
            .zip(&b.users)
            .filter(|(x, y)| x.position == y.position)
            .count();
        assert!(same < a.users.len(), "distinct replicas must evolve differently");
    }

    #[test]
    fn user_count_conserved_and_association_unique() {
        let scn = generate_scenario::<f64>(33, 6, 80, 300.0, 112_000.0).unwrap();
        let mut state = NetworkState::from_scenario(&scn, 0);
        let action = CioMatrix::zero(6);
        for _ in 0..30 {
            state.step(&action).unwrap();
            assert_eq!(state.users.len(), 80);
            for u in &state.users {
                assert!(u.serving_cell < 6);
            }
        }
    }

    #[test]
    fn users_stay_inside_area() {
        let scn = generate_scenario::<f64>(8, 3, 40, 120.0, 64_000.0).unwrap();
        let mut state = NetworkState::from_scenario(&scn, 0);
        let action = CioMatrix::zero(3);
        for _ in 0..200 {
            state.step(&action).unwrap();
            for u in &state.users {
                assert!(u.position[0] >= 0.0 && u.position[0] <= 120.0);
                assert!(u.position[1] >= 0.0 && u.position[1] <= 120.0);
            }
        }
    }

    #[test]
    fn blocked_attempts_leave_association_unchanged() {
        let scn = generate_scenario::<f64>(14, 4, 60, 200.0, 112_000.0).unwrap();
        let mut state = NetworkState::from_scenario(&scn, 0);
        // Freeze mobility and overload every cell so each attempt is blocked.
        for u in &mut state.users {
            u.speed = 0.0;
        }
        for c in &mut state.cells {
            c.n_prb = 2;
        }
        // Aggressive offsets provoke attempts toward already-loaded cells.
        let mut action = CioMatrix::zero(4);
        for i in 0..4 {
            for j in (i + 1)..4 {
                action.set(i, j, -6.0);
            }
        }
        let before: Vec<usize> = state.users.iter().map(|u| u.serving_cell).collect();
        let metrics = state.step(&action).unwrap();
        assert!(metrics.ho_fail > 0, "setup should produce blocked attempts");
        assert_eq!(metrics.ho_success, 0);
        let after: Vec<usize> = state.users.iter().map(|u| u.serving_cell).collect();
        assert_eq!(before, after);
    }
}
