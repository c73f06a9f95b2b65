//! Scratch: minimal 2-cell learning problem, fully dissected.

use ndarray::{arr1, Array1};
use udn_mlb::agent::{BehaviorPolicy, Trainer, TrainParams};
use udn_mlb::env::{generate_scenario, CioMatrix, NetworkState};

fn main() {
    let scn = generate_scenario::<f64>(3, 2, 60, 150.0, 112_000.0).unwrap();
    let mut warm = NetworkState::from_scenario(&scn, 0);
    let zero = CioMatrix::zero(2);
    for _ in 0..200 {
        warm.step(&zero).unwrap();
    }
    println!("warm loads: {:?}", warm.loads());

    let params = TrainParams::<f64> {
        hidden: vec![32, 24],
        actor_rate: 3e-4,
        control_interval: 10,
        ..TrainParams::default()
    };
    let mut trainer = Trainer::with_envs(
        scn.seed,
        vec![warm.clone()],
        vec![vec![0, 1]],
        vec![BehaviorPolicy::noisy_default()],
        params,
        0,
    );
    trainer.train_round_robin(10_000).unwrap();

    // Training reward trend.
    let log = &trainer.workers[0].log;
    let chunk = |a: usize, b: usize| -> f64 {
        log[a..b].iter().map(|r| r.reward).sum::<f64>() / (b - a) as f64
    };
    println!(
        "behavior reward: first1k {:.3} mid {:.3} last1k {:.3}",
        chunk(0, 1000),
        chunk(4500, 5500),
        chunk(9000, 10000)
    );

    // The learned policy on synthetic imbalance states.
    let policy = trainer.policy();
    let actor = &policy.actors[0];
    for (dl, e0, e1) in [
        (0.2, 0.3, 0.3),
        (0.1, 0.3, 0.3),
        (0.0, 0.3, 0.3),
        (-0.1, 0.3, 0.3),
        (-0.2, 0.3, 0.3),
    ] {
        // centered loads: [dl/2, -dl/2]; edge fractions e0, e1.
        let s = arr1(&[dl / 2.0, -dl / 2.0, e0, e1]);
        let o = actor.forward(s.view()).unwrap()[0];
        println!("imbalance {dl:+.2} -> offset {o:+.3} (want negative when cell0 hotter)");
    }

    // Critic slice at a representative imbalanced state.
    let critic = &trainer.critics()[0];
    let s = arr1(&[0.1, -0.1, 0.3, 0.3]);
    print!("critic Q over offsets: ");
    for o in [-6.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 6.0] {
        let a = arr1(&[o]);
        let input = udn_mlb::agent::critic_input_vec(&s, &a);
        let q = critic.forward(input.view()).unwrap()[0];
        print!("{o:+.0}:{q:.2} ");
    }
    println!();

    // Environment truth at the CURRENT trained-policy era: hold each offset
    // for 600 s from the warm state and report the mean reward.
    print!("true held-offset reward:   ");
    for o in [-6.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 6.0] {
        let mut env = warm.clone();
        let mut cio = CioMatrix::zero(2);
        cio.set(0, 1, o);
        let mut acc = 0.0;
        for _ in 0..600 {
            let m = env.step(&cio).unwrap();
            acc += m.reward;
        }
        print!("{o:+.0}:{:.2} ", acc / 600.0);
    }
    println!();
    let _ = Array1::<f64>::zeros(1);
}
