//! One-off calibration runs for the preconfigured stochastic experiments.
//! Prints per-seed alternation counts and queue statistics so the frozen
//! test bounds can be chosen with real margins.

use chatterlab::ctmc::{
    noise_ignition_params, oscillation_detector, recovering_state, simulate_ctmc,
    stochastic_oscillation_params, CtmcState,
};

fn main() {
    let p1 = noise_ignition_params();
    let mut ignited = [0usize; 3];
    let bands = [0.2, 0.3, 0.4];
    let seeds = 50u64;
    let mut counts = Vec::new();
    for seed in 0..seeds {
        let traj = simulate_ctmc(&CtmcState::empty(), &p1, 400.0, 0.25, seed).unwrap();
        let alt = oscillation_detector(&traj, 0.3);
        counts.push(alt);
        for (i, b) in bands.iter().enumerate() {
            if oscillation_detector(&traj, *b) >= 3 {
                ignited[i] += 1;
            }
        }
    }
    counts.sort_unstable();
    println!("experiment 1 (noise ignition), horizon 400, {seeds} seeds");
    for (i, b) in bands.iter().enumerate() {
        println!("  band {b}: {} / {seeds} seeds with >= 3 alternations", ignited[i]);
    }
    println!("  alternation counts at band 0.3 (sorted): {counts:?}");

    let p2 = stochastic_oscillation_params();
    let x0 = recovering_state(&p2, 20);
    println!("experiment 2 (stochastic-only oscillation), horizon 1500, 20 seeds");
    let mut alt_min = usize::MAX;
    let mut q_max_all = 0.0f64;
    let mut q_avg_max = 0.0f64;
    for seed in 0..20u64 {
        let traj = simulate_ctmc(&x0, &p2, 1500.0, 0.5, seed).unwrap();
        let alts: Vec<usize> = [0.05, 0.1, 0.15]
            .iter()
            .map(|b| oscillation_detector(&traj, *b))
            .collect();
        let q_max = traj
            .samples
            .iter()
            .fold(0.0f64, |m, s| m.max(s.state.q1.max(s.state.q2)));
        let q_avg = traj
            .samples
            .iter()
            .map(|s| s.state.q1.max(s.state.q2))
            .sum::<f64>()
            / traj.samples.len() as f64;
        alt_min = alt_min.min(alts[1]);
        q_max_all = q_max_all.max(q_max);
        q_avg_max = q_avg_max.max(q_avg);
        println!(
            "  seed {seed:2}: alternations(band .05/.10/.15) = {:3}/{:3}/{:3}, max queue {:.3}, avg queue {:.4}",
            alts[0], alts[1], alts[2], q_max, q_avg
        );
    }
    println!("  min alternations at band 0.1: {alt_min}");
    println!("  max queue over all seeds: {q_max_all:.3}");
    println!("  max per-seed average queue: {q_avg_max:.4}");
}
