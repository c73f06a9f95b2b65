//! Channel arithmetic: path loss, RSRP, SINR, PRB rates and loads.

use super::{ChannelParams, SmallCell, User};
use crate::scalar::{dbm_to_mw, Real};

/// Euclidean distance in metres.
pub fn distance_m<F: Real>(a: [F; 2], b: [F; 2]) -> F {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Log-distance path loss in dB; `d_km` is clamped below at the model floor.
pub fn path_loss_db<F: Real>(d_km: F, channel: &ChannelParams<F>) -> F {
    channel.pl_intercept + channel.pl_slope * d_km.max(channel.pl_min_d_km).log10()
}

/// Reference signal received power of `cell` at the user position (dBm).
pub fn rsrp_dbm<F: Real>(user: &User<F>, cell: &SmallCell<F>, channel: &ChannelParams<F>) -> F {
    let d_km = distance_m(user.position, cell.position) / F::lit(1000.0);
    cell.tx_power_dbm - path_loss_db(d_km, channel) + user.shadowing_db[cell.id]
}

/// Linear SINR with every non-serving cell as an interferer.
pub fn sinr_linear<F: Real>(user: &User<F>, cells: &[SmallCell<F>], channel: &ChannelParams<F>) -> F {
    let mut signal = F::zero();
    let mut interference = F::zero();
    for cell in cells {
        let p_mw = dbm_to_mw(rsrp_dbm(user, cell, channel));
        if cell.id == user.serving_cell {
            signal = p_mw;
        } else {
            interference += p_mw;
        }
    }
    signal / (dbm_to_mw(channel.noise_dbm) + interference)
}

/// Maximum rate of one PRB (bits/s): Shannon over the PRB bandwidth.
pub fn prb_rate<F: Real>(sinr: F, bandwidth: F) -> F {
    bandwidth * (F::one() + sinr).log2()
}

/// Fractional PRBs needed to carry `demand` at `rate` per PRB, capped at
/// `cap`. Zero rate is interpreted as the capped limit.
pub fn required_prbs<F: Real>(demand: F, rate: F, cap: F) -> F {
    if demand <= F::zero() {
        F::zero()
    } else if rate <= F::zero() {
        cap
    } else {
        (demand / rate).min(cap)
    }
}

/// Cell load: summed required PRBs of the assigned users over the PRB budget.
pub fn cell_load<F: Real>(n_prb: u32, user_required_prbs: &[F]) -> F {
    let total: F = user_required_prbs.iter().copied().sum();
    total / F::lit(n_prb as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::generate_scenario;

    fn channel() -> ChannelParams<f64> {
        ChannelParams::default()
    }

    fn user_at(pos: [f64; 2], shadowing: Vec<f64>) -> User<f64> {
        User {
            id: 0,
            position: pos,
            speed: 0.0,
            heading: 0.0,
            demand_bps: 0.0,
            serving_cell: 0,
            shadowing_db: shadowing,
        }
    }

    fn cell_at(id: usize, pos: [f64; 2], tx: f64) -> SmallCell<f64> {
        SmallCell { id, position: pos, tx_power_dbm: tx, n_prb: 50, load: 0.0 }
    }

    #[test]
    fn path_loss_reference_points() {
        let ch = channel();
        assert!((path_loss_db(1.0, &ch) - 128.1).abs() < 1e-12);
        assert!((path_loss_db(0.1, &ch) - 90.5).abs() < 1e-12);
        // Clamped region: 128.1 + 37.6*log10(0.035), high-precision oracle.
        let oracle = 128.1 + 37.6 * 0.035_f64.log10();
        assert!((path_loss_db(0.01, &ch) - oracle).abs() < 1e-12);
        assert!((oracle - 73.357).abs() < 5e-3);
    }

    #[test]
    fn path_loss_monotone_beyond_floor() {
        let ch = channel();
        let mut prev = path_loss_db(0.035, &ch);
        for i in 1..200 {
            let d = 0.035 + 0.01 * i as f64;
            let pl = path_loss_db(d, &ch);
            assert!(pl > prev, "path loss must increase with distance");
            prev = pl;
        }
    }

    #[test]
    fn rsrp_reference_points() {
        let ch = channel();
        let cell = cell_at(0, [0.0, 0.0], 46.0);
        // 1 km away, no shadowing: 46 - 128.1.
        let u = user_at([1000.0, 0.0], vec![0.0]);
        assert!((rsrp_dbm(&u, &cell, &ch) - (46.0 - 128.1)).abs() < 1e-12);
        // Zero distance clamps at the 0.035 km floor.
        let u0 = user_at([0.0, 0.0], vec![0.0]);
        let oracle = 46.0 - (128.1 + 37.6 * 0.035_f64.log10());
        assert!((rsrp_dbm(&u0, &cell, &ch) - oracle).abs() < 1e-12);
        // Shadowing is an additive dB offset.
        let u8db = user_at([1000.0, 0.0], vec![8.0]);
        assert!((rsrp_dbm(&u8db, &cell, &ch) - (46.0 - 128.1 + 8.0)).abs() < 1e-12);
    }

    #[test]
    fn sinr_equal_power_cases() {
        let mut ch = channel();
        // Single cell, received power equal to the noise power: SINR = 1.
        let cell = cell_at(0, [0.0, 0.0], 0.0);
        let mut u = user_at([1000.0, 0.0], vec![0.0]);
        // Tune tx power so that RSRP equals the noise floor exactly.
        let cells = vec![SmallCell { tx_power_dbm: ch.noise_dbm + 128.1, ..cell.clone() }];
        assert!((sinr_linear(&u, &cells, &ch) - 1.0).abs() < 1e-9);

        // Serving and one interferer at equal received power, noise -> 0.
        ch.noise_dbm = -600.0;
        let cells = vec![
            cell_at(0, [0.0, 0.0], 30.0),
            SmallCell { id: 1, ..cell_at(1, [2000.0, 0.0], 30.0) },
        ];
        u.position = [1000.0, 0.0];
        u.shadowing_db = vec![0.0, 0.0];
        assert!((sinr_linear(&u, &cells, &ch) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sinr_two_interferers_hand_case() {
        // Signal at 4*N0, two interferers at N0 each: SINR = 4/3.
        let ch = channel();
        let n0 = ch.noise_dbm;
        let db4 = 10.0 * 4.0_f64.log10();
        // Place everything at the path-loss floor and set powers directly.
        let pl0 = 128.1 + 37.6 * 0.035_f64.log10();
        let cells = vec![
            cell_at(0, [0.0, 0.0], n0 + pl0 + db4),
            cell_at(1, [0.0, 0.0], n0 + pl0),
            cell_at(2, [0.0, 0.0], n0 + pl0),
        ];
        let u = user_at([0.0, 0.0], vec![0.0, 0.0, 0.0]);
        assert!((sinr_linear(&u, &cells, &ch) - 4.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn prb_rate_reference_points() {
        assert!((prb_rate(1.0_f64, 180_000.0) - 180_000.0).abs() < 1e-9);
        assert_eq!(prb_rate(0.0_f64, 180_000.0), 0.0);
        assert!((prb_rate(3.0_f64, 180_000.0) - 360_000.0).abs() < 1e-9);
    }

    #[test]
    fn required_prbs_cases() {
        assert!((required_prbs(360_000.0_f64, 180_000.0, 25.0) - 2.0).abs() < 1e-12);
        assert_eq!(required_prbs(1e7_f64, 100.0, 25.0), 25.0);
        assert_eq!(required_prbs(0.0_f64, 12_345.0, 25.0), 0.0);
        assert_eq!(required_prbs(1.0_f64, 0.0, 25.0), 25.0);
    }

    #[test]
    fn cell_load_cases() {
        assert!((cell_load(50, &[10.0_f64, 10.0]) - 0.4).abs() < 1e-12);
        assert_eq!(cell_load::<f64>(50, &[]), 0.0);
        assert!((cell_load(50, &[20.0_f64, 20.0, 20.0]) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn generated_scenario_association_is_strongest_rsrp() {
        let scn = generate_scenario::<f64>(9, 6, 40, 300.0, 96_000.0).unwrap();
        for u in &scn.users {
            let serving = rsrp_dbm(u, &scn.cells[u.serving_cell], &scn.channel);
            for c in &scn.cells {
                assert!(rsrp_dbm(u, c, &scn.channel) <= serving + 1e-12);
            }
        }
    }
}
