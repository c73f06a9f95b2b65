//! Scratch: roll out a trained checkpoint deterministically and report the
//! resulting load levels.

use udn_mlb::agent::DeterministicPolicy;
use udn_mlb::env::{generate_scenario, CioBounds};
use udn_mlb::nn::load_network;
use udn_mlb::safeguard::{rollout, OnlinePolicy};
use std::path::PathBuf;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dir = PathBuf::from(args.get(1).expect("usage: evalckpt <run dir> <seed>"));
    let seed: u64 = args.get(2).expect("seed").parse().unwrap();

    let scn = generate_scenario::<f64>(seed, 12, 200, 300.0, 112_000.0).unwrap();
    // Clustering from the run artifact.
    let text = std::fs::read_to_string(dir.join("clustering.csv")).unwrap();
    let mut membership = Vec::new();
    for line in text.lines().skip(1) {
        let (_, h) = line.split_once(',').unwrap();
        membership.push(h.parse::<usize>().unwrap());
    }
    let n_clusters = membership.iter().max().unwrap() + 1;
    let mut clusters = vec![Vec::new(); n_clusters];
    for (cell, &h) in membership.iter().enumerate() {
        clusters[h].push(cell);
    }
    let actors = (0..n_clusters)
        .map(|h| load_network(&dir.join(format!("actor_{h}.ckpt"))).unwrap())
        .collect();
    let policy = OnlinePolicy::Learned(DeterministicPolicy {
        clusters,
        actors,
        bounds: CioBounds::default(),
    });

    for replica in [500u64, 501, 502] {
        let m = rollout(&policy, &scn, replica, 2000).unwrap();
        let mean_r: f64 = m.rewards.iter().sum::<f64>() / m.len() as f64;
        let mean_max: f64 = m.max_loads().iter().sum::<f64>() / m.len() as f64;
        let hfr = m.ho_fail_total() as f64
            / (m.ho_fail_total() + m.ho_success_total()).max(1) as f64;
        println!("replica {replica}: mean reward {mean_r:.3} mean max load {mean_max:.3} hfr {hfr:.3}");
    }

    // Distribution of emitted offsets on a fresh healthy environment.
    let mut env = udn_mlb::env::NetworkState::from_scenario(&scn, 900);
    let zero = udn_mlb::env::CioMatrix::zero(12);
    for _ in 0..200 {
        env.step(&zero).unwrap();
    }
    if let OnlinePolicy::Learned(p) = &policy {
        let mut counts = [0usize; 4]; // |o| < 1, < 3, < 5.9, saturated
        for _ in 0..200 {
            let a = p.act(&env).unwrap();
            for i in 0..12 {
                for j in (i + 1)..12 {
                    let o = a.get(i, j).abs();
                    if o > 0.0 {
                        let bin = if o < 1.0 { 0 } else if o < 3.0 { 1 } else if o < 5.9 { 2 } else { 3 };
                        counts[bin] += 1;
                    }
                }
            }
            env.step(&a).unwrap();
        }
        println!("offset magnitudes: <1dB {}, 1-3dB {}, 3-5.9dB {}, saturated {}", counts[0], counts[1], counts[2], counts[3]);
    }
}
