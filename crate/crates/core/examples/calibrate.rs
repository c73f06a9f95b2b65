//! Scratch calibration: operating points of the no-control and rule-based
//! controllers on the default scenario, plus intra-cluster restrictions.

use udn_mlb::baselines::{all_ordered_pairs, rule_adaptive, rule_static};
use udn_mlb::clustering::{init_centroids, run_kmeans};
use udn_mlb::env::{generate_scenario_with, ChannelParams, CioMatrix, NetworkState};

fn cluster_pairs(positions: &[[f64; 2]], h: usize) -> Vec<(usize, usize)> {
    let init = init_centroids(&vec![0.0; positions.len()], positions, h).unwrap();
    let assignment = run_kmeans(positions, &init);
    let mut pairs = Vec::new();
    for members in &assignment.clusters() {
        for &i in members.iter() {
            for &j in members.iter() {
                if i != j {
                    pairs.push((i, j));
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

fn main() {
    let n_prb: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let steps = 4000;
    let seeds = [0u64, 1, 2, 3, 4];
    for mode in ["nomlb", "static", "adaptive", "adaptive-h2", "adaptive-h3", "adaptive-h4"] {
        let mut grand = 0.0;
        let mut grand_hfr = 0.0;
        for &seed in &seeds {
            let channel = ChannelParams::<f64>::default();
            let scn =
                generate_scenario_with(seed, 12, 200, 300.0, 112_000.0, channel, n_prb, 46.0)
                    .unwrap();
            let positions: Vec<[f64; 2]> = scn.cells.iter().map(|c| c.position).collect();
            let pairs = match mode {
                "adaptive-h2" => cluster_pairs(&positions, 2),
                "adaptive-h3" => cluster_pairs(&positions, 3),
                "adaptive-h4" => cluster_pairs(&positions, 4),
                _ => all_ordered_pairs(12),
            };
            let mut env = NetworkState::from_scenario(&scn, 0);
            let mut cio = CioMatrix::zero(12);
            let mut acc = 0.0;
            let mut blocks = 0u64;
            let mut attempts = 0u64;
            for _ in 0..steps {
                let loads = env.loads();
                cio = match mode {
                    "nomlb" => CioMatrix::zero(12),
                    "static" => rule_static(&loads, &cio, &pairs),
                    _ => rule_adaptive(&loads, &cio, &pairs),
                };
                let m = env.step(&cio).unwrap();
                acc += m.loads.iter().cloned().fold(0.0, f64::max);
                blocks += m.ho_fail as u64;
                attempts += (m.ho_fail + m.ho_success) as u64;
            }
            grand += acc / steps as f64 / seeds.len() as f64;
            grand_hfr += blocks as f64 / attempts.max(1) as f64 / seeds.len() as f64;
        }
        println!("n_prb={n_prb} {mode}: mean max load {grand:.3} hfr {grand_hfr:.3}");
    }
}
