//! Experiment metrics: moving averages, handover failure ratio, load
//! dispersion, and the normalized performance gain.

use crate::scalar::Real;

/// Per-run series collected by the harness: one entry per step.
#[derive(Debug, Clone, Default)]
pub struct MetricsSeries<F> {
    pub rewards: Vec<F>,
    /// `loads[t][cell]`.
    pub loads: Vec<Vec<F>>,
    pub ho_success: Vec<u32>,
    pub ho_fail: Vec<u32>,
}

impl<F: Real> MetricsSeries<F> {
    pub fn new() -> Self {
        MetricsSeries {
            rewards: Vec::new(),
            loads: Vec::new(),
            ho_success: Vec::new(),
            ho_fail: Vec::new(),
        }
    }

    pub fn push(&mut self, reward: F, loads: Vec<F>, ho_success: u32, ho_fail: u32) {
        self.rewards.push(reward);
        self.loads.push(loads);
        self.ho_success.push(ho_success);
        self.ho_fail.push(ho_fail);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn ho_success_total(&self) -> u64 {
        self.ho_success.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn ho_fail_total(&self) -> u64 {
        self.ho_fail.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn max_loads(&self) -> Vec<F> {
        self.loads
            .iter()
            .map(|l| l.iter().copied().fold(F::zero(), F::max))
            .collect()
    }
}

/// Trailing mean over a window: `out[t]` is the mean of the last `window`
/// values ending at `t`; the prefix uses the mean over what is available.
pub fn moving_average<F: Real>(series: &[F], window: usize) -> Vec<F> {
    assert!(window >= 1, "window must be at least 1");
    assert!(!series.is_empty(), "series must be non-empty");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = F::zero();
    for t in 0..series.len() {
        sum += series[t];
        if t >= window {
            sum -= series[t - window];
        }
        let n = (t + 1).min(window);
        out.push(sum / F::lit(n as f64));
    }
    out
}

/// Handover failure ratio: blocked attempts over all attempts; zero when
/// nothing was attempted.
pub fn hfr<F: Real>(ho_fail: u64, ho_success: u64) -> F {
    let total = ho_fail + ho_success;
    if total == 0 {
        F::zero()
    } else {
        F::lit(ho_fail as f64) / F::lit(total as f64)
    }
}

/// Population standard deviation across cells, averaged over time.
pub fn load_std<F: Real>(loads: &[Vec<F>]) -> F {
    assert!(!loads.is_empty() && !loads[0].is_empty(), "need at least one load sample");
    let mut acc = F::zero();
    for row in loads {
        let n = F::lit(row.len() as f64);
        let mean = row.iter().copied().sum::<F>() / n;
        let var = row
            .iter()
            .map(|&l| (l - mean) * (l - mean))
            .sum::<F>()
            / n;
        acc += var.sqrt();
    }
    acc / F::lit(loads.len() as f64)
}

/// Mean-reward lift of a controller over the no-control baseline, relative
/// to the baseline level.
pub fn normalized_gain<F: Real>(controller: &[F], baseline: &[F]) -> F {
    assert_eq!(controller.len(), baseline.len(), "series lengths must match");
    let n = F::lit(controller.len() as f64);
    let mc = controller.iter().copied().sum::<F>() / n;
    let mb = baseline.iter().copied().sum::<F>() / n;
    (mc - mb) / mb
}
