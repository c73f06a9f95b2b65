//! Scratch: how much of the global rule controller's gain survives when
//! offsets are restricted to intra-cluster pairs, for various H.

use udn_mlb::baselines::rule_adaptive;
use udn_mlb::clustering::{init_centroids, run_kmeans};
use udn_mlb::env::{generate_scenario, CioMatrix, NetworkState};

fn main() {
    for h in [0usize, 2, 3, 4, 6] {
        let mut grand = 0.0;
        for seed in 0..3u64 {
            let scn = generate_scenario::<f64>(seed, 12, 200, 300.0, 112_000.0).unwrap();
            let positions: Vec<[f64; 2]> = scn.cells.iter().map(|c| c.position).collect();
            // Equal loads: centroid init degenerates to the first H ids,
            // which is fine for a geometry probe.
            let pairs: Vec<(usize, usize)> = if h == 0 {
                udn_mlb::baselines::all_ordered_pairs(12)
            } else {
                let init = init_centroids(&vec![0.0; 12], &positions, h).unwrap();
                let assignment = run_kmeans(&positions, &init);
                let clusters = assignment.clusters();
                let mut pairs = Vec::new();
                for members in &clusters {
                    for &i in members {
                        for &j in members {
                            if i != j {
                                pairs.push((i, j));
                            }
                        }
                    }
                }
                pairs.sort_unstable();
                pairs
            };
            let mut env = NetworkState::from_scenario(&scn, 0);
            let mut cio = CioMatrix::zero(12);
            let steps = 4000;
            let mut acc = 0.0;
            for _ in 0..steps {
                let loads = env.loads();
                cio = rule_adaptive(&loads, &cio, &pairs);
                let m = env.step(&cio).unwrap();
                acc += m.loads.iter().cloned().fold(0.0, f64::max);
            }
            grand += acc / steps as f64 / 3.0;
        }
        let label = if h == 0 { "global".to_string() } else { format!("H={h}") };
        println!("{label}: mean max load {grand:.3}");
    }
}
