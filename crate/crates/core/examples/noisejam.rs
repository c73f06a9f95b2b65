//! Scratch: stability of the zero policy under per-step action noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use udn_mlb::env::{CioMatrix, NetworkState};
use udn_mlb::scalar::Real;

fn main() {
    // Control modes: zero offsets, Gaussian jitter, frozen random rails,
    // per-step uniform chaos.
    for (n_prb, cap) in [(18u32, 1.0f64), (19, 1.0), (20, 1.0), (18, 1.2), (19, 1.2), (20, 1.2)] {
        for mode in ["zero", "rails"] {
            let mut acc = 0.0;
            let mut hfr_acc = 0.0;
            for seed in 0..3u64 {
                let mut channel = udn_mlb::env::ChannelParams::<f64>::default();
                channel.prb_cap = cap;
                let scn = udn_mlb::env::generate_scenario_with(
                    seed, 12, 200, 300.0, 112_000.0, channel, n_prb, 46.0,
                )
                .unwrap();
                let mut env = NetworkState::from_scenario(&scn, 0);
                let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
                // Frozen random rail pattern per seed.
                let mut rails = CioMatrix::zero(12);
                for i in 0..12 {
                    for j in (i + 1)..12 {
                        let sign = if rng.gen_range(0.0..1.0) < 0.5 { -6.0 } else { 6.0 };
                        rails.set(i, j, sign);
                    }
                }
                let mut blocks = 0u64;
                let mut attempts = 0u64;
                let mut max_sum = 0.0;
                let steps = 3000;
                for _ in 0..steps {
                    let action = match mode {
                        "zero" => CioMatrix::zero(12),
                        "gauss1" => {
                            let mut a = CioMatrix::zero(12);
                            for i in 0..12 {
                                for j in (i + 1)..12 {
                                    a.set(i, j, f64::standard_normal(&mut rng));
                                }
                            }
                            a
                        }
                        "rails" => rails.clone(),
                        _ => {
                            let mut a = CioMatrix::zero(12);
                            for i in 0..12 {
                                for j in (i + 1)..12 {
                                    a.set(i, j, rng.gen_range(-6.0..6.0));
                                }
                            }
                            a
                        }
                    };
                    let m = env.step(&action).unwrap();
                    max_sum += m.loads.iter().cloned().fold(0.0, f64::max);
                    blocks += m.ho_fail as u64;
                    attempts += (m.ho_fail + m.ho_success) as u64;
                }
                acc += max_sum / steps as f64 / 3.0;
                hfr_acc += blocks as f64 / attempts.max(1) as f64 / 3.0;
            }
            println!("n_prb {n_prb} cap {cap} {mode}: mean max load {acc:.3} hfr {hfr_acc:.3}");
        }
    }
}
