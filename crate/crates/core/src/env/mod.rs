//! Discrete-time ultra-dense-network simulator: geometry, channel model,
//! user mobility, A3 handovers with admission control, load and reward
//! computation, and the observation vector consumed by the learners.

mod cio;
mod radio;
mod sim;

pub use cio::{CioBounds, CioMatrix};
pub use radio::{cell_load, distance_m, path_loss_db, prb_rate, required_prbs, rsrp_dbm, sinr_linear};
pub use sim::{
    a3_triggered, reward, HandoverEvent, HandoverOutcome, NetworkState, StateVector, StepMetrics,
    EDGE_GAP_DB,
};

use crate::scalar::Real;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use thiserror::Error;

/// Default SBS transmit power (dBm).
pub const DEFAULT_TX_POWER_DBM: f64 = 46.0;
/// Default PRBs per SBS. Calibrated together with the per-user PRB cap so
/// that the no-control operating point at 200 users and 112 kbps sits near
/// a 0.74 maximum load with moderate admission blocking.
pub const DEFAULT_N_PRB: u32 = 21;
/// Users re-sample their heading with this probability each second.
pub const HEADING_RESAMPLE_PROB: f64 = 0.2;
/// Mobility step length (seconds).
pub const TIME_STEP_S: f64 = 1.0;
/// Generated user speeds are uniform in this range (m/s).
pub const SPEED_RANGE_MPS: (f64, f64) = (1.0, 10.0);

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("scenario requires at least one small cell")]
    EmptyScenario,
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Channel and admission parameters shared by every cell.
///
/// Path loss follows `pl_intercept + pl_slope * log10(max(d, pl_min_d_km))`
/// with distance in kilometres; shadowing is one zero-mean normal draw per
/// (user, cell) pair, fixed for the scenario lifetime.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams<F> {
    /// Path-loss intercept (dB).
    pub pl_intercept: F,
    /// Path-loss slope (dB per decade of distance).
    pub pl_slope: F,
    /// Distance floor for the path-loss model (km).
    pub pl_min_d_km: F,
    /// Log-normal shadowing standard deviation (dB).
    pub shadow_sigma: F,
    /// Noise power per PRB (dBm).
    pub noise_dbm: F,
    /// Bandwidth of one PRB (Hz).
    pub prb_bandwidth: F,
    /// A3 handover hysteresis (dB). Must be positive: ping-pong prevention
    /// relies on it.
    pub hysteresis: F,
    /// Per-user cap on required PRBs (fractional count).
    pub prb_cap: F,
    /// Handover attempts toward a cell loaded above this ratio are blocked.
    pub admission_threshold: F,
}

impl<F: Real> Default for ChannelParams<F> {
    fn default() -> Self {
        // Thermal noise: -174 dBm/Hz over one 180 kHz PRB.
        let bandwidth = 180_000.0_f64;
        ChannelParams {
            pl_intercept: F::lit(128.1),
            pl_slope: F::lit(37.6),
            pl_min_d_km: F::lit(0.035),
            shadow_sigma: F::lit(8.0),
            noise_dbm: F::lit(-174.0 + 10.0 * bandwidth.log10()),
            prb_bandwidth: F::lit(bandwidth),
            hysteresis: F::lit(3.0),
            // Tight scheduler bound per user: one poor-channel user may hold
            // at most 5% of a default cell. Larger caps let users stranded
            // by blocked handovers drag whole neighbourhoods into a
            // self-sustaining overload.
            prb_cap: F::lit(1.0),
            admission_threshold: F::lit(0.8),
        }
    }
}

/// One small cell base station.
///
/// `id` doubles as the dense index into every per-cell vector (loads, CIO
/// rows, shadowing), so ids must be `0..n_cells`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallCell<F> {
    pub id: usize,
    /// Position in metres.
    pub position: [F; 2],
    pub tx_power_dbm: F,
    /// Total PRBs available for scheduling.
    pub n_prb: u32,
    /// Current load: required PRBs over `n_prb`. May exceed 1 under overload.
    pub load: F,
}

/// One mobile user with a constant-bit-rate demand.
#[derive(Debug, Clone, PartialEq)]
pub struct User<F> {
    pub id: usize,
    /// Position in metres.
    pub position: [F; 2],
    /// Walking speed (m/s).
    pub speed: F,
    /// Heading (radians).
    pub heading: F,
    /// CBR demand (bits/s).
    pub demand_bps: F,
    /// Id of the serving cell.
    pub serving_cell: usize,
    /// Fixed shadowing realisation toward each cell (dB), indexed by cell id.
    pub shadowing_db: Vec<F>,
}

/// Immutable network snapshot: geometry, population, channel, seed.
#[derive(Debug, Clone)]
pub struct Scenario<F> {
    pub cells: Vec<SmallCell<F>>,
    pub users: Vec<User<F>>,
    /// Side of the square deployment area (metres).
    pub area_side: F,
    pub channel: ChannelParams<F>,
    pub seed: u64,
}

/// Generates a scenario with uniformly placed cells and users.
///
/// Users start associated to the cell of strongest RSRP. The same seed
/// yields the same scenario bit-for-bit.
pub fn generate_scenario<F: Real>(
    seed: u64,
    n_sbs: usize,
    n_users: usize,
    area_side: F,
    demand_bps: F,
) -> Result<Scenario<F>, EnvError> {
    generate_scenario_with(
        seed,
        n_sbs,
        n_users,
        area_side,
        demand_bps,
        ChannelParams::default(),
        DEFAULT_N_PRB,
        F::lit(DEFAULT_TX_POWER_DBM),
    )
}

/// [`generate_scenario`] with explicit channel, PRB budget, and power.
#[allow(clippy::too_many_arguments)]
pub fn generate_scenario_with<F: Real>(
    seed: u64,
    n_sbs: usize,
    n_users: usize,
    area_side: F,
    demand_bps: F,
    channel: ChannelParams<F>,
    n_prb: u32,
    tx_power_dbm: F,
) -> Result<Scenario<F>, EnvError> {
    if n_sbs == 0 {
        return Err(EnvError::EmptyScenario);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let cells: Vec<SmallCell<F>> = (0..n_sbs)
        .map(|id| {
            let x = rng.gen_range(F::zero()..area_side);
            let y = rng.gen_range(F::zero()..area_side);
            SmallCell { id, position: [x, y], tx_power_dbm, n_prb, load: F::zero() }
        })
        .collect();

    let two_pi = F::lit(std::f64::consts::TAU);
    let (speed_lo, speed_hi) = (F::lit(SPEED_RANGE_MPS.0), F::lit(SPEED_RANGE_MPS.1));
    // Shadowing: one common and one per-cell component of equal power, so
    // each (user, cell) value has the full deviation while any two cells
    // seen by one user correlate at 0.5 (the usual inter-site model). The
    // common part cancels out of every A3 comparison.
    let half_power = channel.shadow_sigma / F::lit(std::f64::consts::SQRT_2);
    let mut users: Vec<User<F>> = (0..n_users)
        .map(|id| {
            let x = rng.gen_range(F::zero()..area_side);
            let y = rng.gen_range(F::zero()..area_side);
            let speed = rng.gen_range(speed_lo..speed_hi);
            let heading = rng.gen_range(F::zero()..two_pi);
            let common = F::standard_normal(&mut rng);
            let shadowing_db: Vec<F> = (0..n_sbs)
                .map(|_| (common + F::standard_normal(&mut rng)) * half_power)
                .collect();
            User {
                id,
                position: [x, y],
                speed,
                heading,
                demand_bps,
                serving_cell: 0,
                shadowing_db,
            }
        })
        .collect();

    // Initial association: strongest RSRP, ties to the lower cell id.
    for user in &mut users {
        let mut best = 0usize;
        let mut best_rsrp = F::neg_infinity();
        for cell in &cells {
            let r = radio::rsrp_dbm(user, cell, &channel);
            if r > best_rsrp {
                best_rsrp = r;
                best = cell.id;
            }
        }
        user.serving_cell = best;
    }

    Ok(Scenario { cells, users, area_side, channel, seed })
}

impl<F: Real> Scenario<F> {
    /// Line-oriented snapshot: one record per cell and per user.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scenario v1 seed={} area={}", self.seed, self.area_side);
        for c in &self.cells {
            let _ = writeln!(out, "sbs {} {} {} {}", c.id, c.position[0], c.position[1], c.tx_power_dbm);
        }
        for u in &self.users {
            let _ = writeln!(out, "user {} {} {} {}", u.id, u.position[0], u.position[1], u.demand_bps);
        }
        out
    }
}
