//! Scratch: compare the trained critic's action gradient with the true
//! one-step reward sensitivity measured through the simulator.

use ndarray::Array1;
use udn_mlb::agent::{compose_full_cio, ActionValue, CriticNet};
use udn_mlb::env::{generate_scenario, reward, CioBounds, CioMatrix, NetworkState};
use udn_mlb::nn::load_network;
use std::path::PathBuf;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dir = PathBuf::from(args.get(1).expect("usage: criticprobe <run dir> <seed>"));
    let seed: u64 = args.get(2).expect("seed").parse().unwrap();

    let scn = generate_scenario::<f64>(seed, 12, 200, 300.0, 112_000.0).unwrap();
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
    let bounds = CioBounds::default();

    let mut agree = 0usize;
    let mut disagree = 0usize;
    let mut corr_num = 0.0;
    let mut g2 = 0.0;
    let mut d2 = 0.0;

    let mut env = NetworkState::from_scenario(&scn, 700);
    let zero = CioMatrix::zero(12);
    for _ in 0..250 {
        env.step(&zero).unwrap();
    }

    for h in 0..n_clusters {
        let members = &clusters[h];
        let c = members.len();
        if c < 2 {
            continue;
        }
        let actor = load_network::<f64>(&dir.join(format!("actor_{h}.ckpt"))).unwrap();
        let critic = load_network::<f64>(&dir.join(format!("critic_{h}.ckpt"))).unwrap();

        for probe in 0..10 {
            // Walk the env a bit between probes.
            for _ in 0..20 {
                env.step(&zero).unwrap();
            }
            let sv = env.observe_state(members);
            let s = Array1::from_vec(sv.to_vec());
            let a0 = actor.forward(s.view()).unwrap();

            // Critic gradient at (s, a0).
            let q_fn = CriticNet { net: &critic, state_dim: 2 * c };
            let s2 = s.clone().insert_axis(ndarray::Axis(0));
            let a2 = a0.clone().insert_axis(ndarray::Axis(0));
            let g = q_fn.action_gradient_batch(s2.view(), a2.view()).unwrap();

            // Environment truth: central difference of the one-step cluster
            // reward for each action component.
            let eps = 1.0;
            for k in 0..a0.len() {
                let mut ap = a0.clone();
                ap[k] += eps;
                let mut am = a0.clone();
                am[k] -= eps;
                // The probe cluster takes the perturbed action, others zero.
                let mut actions: Vec<CioMatrix<f64>> = clusters
                    .iter()
                    .map(|m| CioMatrix::zero_with_bounds(m.len(), bounds))
                    .collect();
                actions[h] = CioMatrix::from_upper_triangle(c, ap.as_slice().unwrap(), bounds);
                let full_p = compose_full_cio(12, &clusters, &actions, bounds);
                actions[h] = CioMatrix::from_upper_triangle(c, am.as_slice().unwrap(), bounds);
                let full_m = compose_full_cio(12, &clusters, &actions, bounds);

                let mut env_p = env.clone();
                let mp = env_p.step(&full_p).unwrap();
                let mut env_m = env.clone();
                let mm = env_m.step(&full_m).unwrap();
                let rp = reward(&members.iter().map(|&i| mp.loads[i]).collect::<Vec<_>>());
                let rm = reward(&members.iter().map(|&i| mm.loads[i]).collect::<Vec<_>>());
                let truth = (rp - rm) / (2.0 * eps);
                let grad = g[[0, k]];
                if truth != 0.0 {
                    if grad.signum() == truth.signum() {
                        agree += 1;
                    } else {
                        disagree += 1;
                    }
                    corr_num += grad * truth;
                    g2 += grad * grad;
                    d2 += truth * truth;
                }
            }
            let _ = probe;
        }
    }
    let corr = corr_num / (g2.sqrt() * d2.sqrt()).max(1e-12);
    println!("sign agree {agree}, disagree {disagree}, correlation {corr:.3}");

    // Does the critic value rule actions above the policy's own? And does
    // the policy push along the load gradient (hot -> cold)?
    let mut env = NetworkState::from_scenario(&scn, 701);
    for _ in 0..300 {
        env.step(&zero).unwrap();
    }
    let mut q_rule_wins = 0usize;
    let mut q_policy_wins = 0usize;
    let mut aligned = 0usize;
    let mut misaligned = 0usize;
    for _ in 0..40 {
        for _ in 0..10 {
            env.step(&zero).unwrap();
        }
        for h in 0..n_clusters {
            let members = &clusters[h];
            let c = members.len();
            if c < 2 {
                continue;
            }
            let actor = load_network::<f64>(&dir.join(format!("actor_{h}.ckpt"))).unwrap();
            let critic = load_network::<f64>(&dir.join(format!("critic_{h}.ckpt"))).unwrap();
            let sv = env.observe_state(members);
            let s = Array1::from_vec(sv.to_vec());
            let a_pi = actor.forward(s.view()).unwrap();
            // Rule-adaptive action from the zero matrix on this state.
            let pairs = udn_mlb::baselines::all_ordered_pairs(c);
            let a_rule_m = udn_mlb::baselines::rule_adaptive(
                &sv.centered_loads,
                &CioMatrix::zero_with_bounds(c, bounds),
                &pairs,
            );
            let a_rule = Array1::from_vec(a_rule_m.upper_triangle());
            let q_of = |a: &Array1<f64>| {
                let input = ndarray::concatenate(
                    ndarray::Axis(0),
                    &[s.view(), a.view()],
                )
                .unwrap();
                critic.forward(input.view()).unwrap()[0]
            };
            if q_of(&a_rule) > q_of(&a_pi) {
                q_rule_wins += 1;
            } else {
                q_policy_wins += 1;
            }
            // Policy alignment with the load gradient.
            let mut k = 0;
            for a in 0..c {
                for b in (a + 1)..c {
                    let diff = sv.centered_loads[a] - sv.centered_loads[b];
                    let o = a_pi[k];
                    if diff.abs() > 0.05 && o.abs() > 0.2 {
                        if (diff > 0.0) == (o < 0.0) {
                            aligned += 1;
                        } else {
                            misaligned += 1;
                        }
                    }
                    k += 1;
                }
            }
        }
    }
    println!("critic prefers rule action {q_rule_wins}, prefers policy {q_policy_wins}");
    println!("policy offsets aligned with load gradient {aligned}, misaligned {misaligned}");
}
