//! Comparison controllers: fixed-step and adaptive-step offset rules, a
//! tabular Q-learner over quantized states, and the no-op policy.

use crate::env::CioMatrix;
use crate::scalar::Real;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Load-difference dead zone below which the rules leave a pair alone.
/// Calibrated so the rules bound the maximum load near the documented
/// reference level rather than chasing perfect balance.
pub const RULE_DEAD_ZONE: f64 = 0.25;
/// Fixed step of the static rule (dB).
pub const RULE_STATIC_STEP: f64 = 1.0;
/// Adaptive rule: step = clamp(gain * load difference, min, max) in dB.
pub const RULE_ADAPTIVE_GAIN: f64 = 10.0;
pub const RULE_ADAPTIVE_STEP_MIN: f64 = 0.5;
pub const RULE_ADAPTIVE_STEP_MAX: f64 = 3.0;

/// All ordered index pairs (i, j), i != j, in lexicographic order — the
/// default neighbour relation for rule controllers within a control scope.
pub fn all_ordered_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * n.saturating_sub(1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                out.push((i, j));
            }
        }
    }
    out
}

/// Fixed-step rule: for each neighbour pair with a load surplus above the
/// dead zone, lower the pair offset by 1 dB (clamped), pushing users from
/// the loaded cell toward the lighter one.
///
/// Load differences are what matters, so mean-centred loads work too.
pub fn rule_static<F: Real>(
    loads: &[F],
    cio: &CioMatrix<F>,
    neighbors: &[(usize, usize)],
) -> CioMatrix<F> {
    let mut out = cio.clone();
    let dead = F::lit(RULE_DEAD_ZONE);
    let step = F::lit(RULE_STATIC_STEP);
    for &(i, j) in neighbors {
        if loads[i] - loads[j] > dead {
            out.adjust(i, j, -step);
        }
    }
    out
}

/// Adaptive-step rule: like [`rule_static`] but the step grows with the
/// load difference, clamped to [0.5, 3] dB.
pub fn rule_adaptive<F: Real>(
    loads: &[F],
    cio: &CioMatrix<F>,
    neighbors: &[(usize, usize)],
) -> CioMatrix<F> {
    let mut out = cio.clone();
    let dead = F::lit(RULE_DEAD_ZONE);
    let gain = F::lit(RULE_ADAPTIVE_GAIN);
    let lo = F::lit(RULE_ADAPTIVE_STEP_MIN);
    let hi = F::lit(RULE_ADAPTIVE_STEP_MAX);
    for &(i, j) in neighbors {
        let diff = loads[i] - loads[j];
        if diff > dead {
            let step = (gain * diff).max(lo).min(hi);
            out.adjust(i, j, -step);
        }
    }
    out
}

/// The plain baseline: every offset zero.
pub fn no_mlb<F: Real>(cio: &CioMatrix<F>) -> CioMatrix<F> {
    CioMatrix::zero_with_bounds(cio.n(), cio.bounds())
}

/// Discretized state: load bin of the most overloaded cell plus the load
/// bins of its nearest neighbours.
type StateKey = Vec<u8>;

fn load_bin<F: Real>(load: F) -> u8 {
    let bin = (load / F::lit(0.1)).floor().to_u8().unwrap_or(20);
    bin.min(20)
}

/// Tabular Q-learner tuning the offsets between the most overloaded cell
/// and its nearest neighbours with discrete +/-1 dB steps.
#[derive(Debug, Clone)]
pub struct QTable<F> {
    /// (state) -> per-action values; unseen entries read as zero.
    values: HashMap<StateKey, Vec<F>>,
    pub learning_rate: F,
    pub discount: F,
    pub epsilon: F,
    /// Number of neighbour links controlled per action.
    pub n_neighbors: usize,
}

/// Maximum neighbour links in the Q-learning action.
pub const QL_MAX_NEIGHBORS: usize = 6;

impl<F: Real> QTable<F> {
    pub fn new(n_neighbors: usize) -> Self {
        QTable {
            values: HashMap::new(),
            learning_rate: F::lit(0.5),
            discount: F::lit(0.99),
            epsilon: F::lit(0.1),
            n_neighbors: n_neighbors.min(QL_MAX_NEIGHBORS),
        }
    }

    pub fn n_actions(&self) -> usize {
        3usize.pow(self.n_neighbors as u32)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, state: &StateKey, action: usize) -> F {
        self.values
            .get(state)
            .map_or(F::zero(), |row| row[action])
    }

    fn row_mut(&mut self, state: &StateKey) -> &mut Vec<F> {
        let n = self.n_actions();
        self.values
            .entry(state.clone())
            .or_insert_with(|| vec![F::zero(); n])
    }

    /// Greedy action: argmax over the row, ties to the first action in
    /// enumeration order.
    pub fn greedy_action(&self, state: &StateKey) -> usize {
        match self.values.get(state) {
            None => 0,
            Some(row) => {
                let mut best = 0;
                for (a, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = a;
                    }
                }
                best
            }
        }
    }

    /// One-step update: `Q += alpha * (r + gamma * max_a' Q(s',a') - Q)`.
    pub fn update(&mut self, state: &StateKey, action: usize, reward: F, next_state: &StateKey) {
        let next_best = match self.values.get(next_state) {
            None => F::zero(),
            Some(row) => row.iter().copied().fold(F::neg_infinity(), F::max),
        };
        let alpha = self.learning_rate;
        let gamma = self.discount;
        let row = self.row_mut(state);
        let q = row[action];
        row[action] = q + alpha * (reward + gamma * next_best - q);
    }
}

/// Q-learning controller state: the table plus the neighbour geometry and
/// the previous (state, action) needed for the online update.
#[derive(Debug, Clone)]
pub struct QLearningController<F> {
    pub table: QTable<F>,
    /// Fixed nearest-neighbour lists, `neighbors[cell] = up to 6 cells`.
    neighbors: Vec<Vec<usize>>,
    rng: ChaCha8Rng,
    last: Option<(StateKey, usize)>,
}

impl<F: Real> QLearningController<F> {
    /// `positions` fixes the nearest-neighbour geometry for the run.
    pub fn new(positions: &[[F; 2]], rng: ChaCha8Rng) -> Self {
        let n = positions.len();
        let k = QL_MAX_NEIGHBORS.min(n.saturating_sub(1));
        let mut neighbors = Vec::with_capacity(n);
        for i in 0..n {
            let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            others.sort_by(|&a, &b| {
                let da = dist2(positions[i], positions[a]);
                let db = dist2(positions[i], positions[b]);
                da.partial_cmp(&db).expect("finite distances").then(a.cmp(&b))
            });
            others.truncate(k);
            neighbors.push(others);
        }
        QLearningController { table: QTable::new(k), neighbors, rng, last: None }
    }

    fn state_key(&self, loads: &[F]) -> (StateKey, usize) {
        let hot = hottest_cell(loads);
        // Bin of the hottest cell plus its neighbours' bins; the hot cell's
        // identity is deliberately absent, matching the quantized-state
        // design this baseline reproduces.
        let mut key = Vec::with_capacity(1 + self.neighbors[hot].len());
        key.push(load_bin(loads[hot]));
        for &j in &self.neighbors[hot] {
            key.push(load_bin(loads[j]));
        }
        (key, hot)
    }

    /// Decodes an action index into -1/0/+1 dB steps per neighbour link.
    fn decode_action(&self, mut action: usize) -> Vec<i8> {
        let mut steps = Vec::with_capacity(self.table.n_neighbors);
        for _ in 0..self.table.n_neighbors {
            steps.push((action % 3) as i8 - 1);
            action /= 3;
        }
        steps
    }

    /// Epsilon-greedy action on the current loads, applied as offset steps
    /// between the most overloaded cell and its neighbours.
    pub fn act(&mut self, loads: &[F], cio: &CioMatrix<F>) -> CioMatrix<F> {
        let (key, hot) = self.state_key(loads);
        let action = if self.rng.gen_range(F::zero()..F::one()) < self.table.epsilon {
            self.rng.gen_range(0..self.table.n_actions())
        } else {
            self.table.greedy_action(&key)
        };
        let mut out = cio.clone();
        let steps = self.decode_action(action);
        for (&j, &s) in self.neighbors[hot].iter().zip(&steps) {
            if s != 0 {
                out.adjust(hot, j, F::lit(s as f64));
            }
        }
        self.last = Some((key, action));
        out
    }

    /// Learns from the transition that followed the previous `act` call.
    pub fn observe(&mut self, reward: F, next_loads: &[F]) {
        let (next_key, _) = self.state_key(next_loads);
        if let Some((key, action)) = self.last.take() {
            self.table.update(&key, action, reward, &next_key);
        }
    }
}

fn hottest_cell<F: Real>(loads: &[F]) -> usize {
    let mut best = 0;
    for (i, &l) in loads.iter().enumerate() {
        if l > loads[best] {
            best = i;
        }
    }
    best
}

fn dist2<F: Real>(a: [F; 2], b: [F; 2]) -> F {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}
