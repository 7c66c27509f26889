//! Acceptance gate: ten end-to-end checks of the behaviors this library
//! promises on its benchmark parameter sets.
//!
//! Each check is one test named `criterion_NN_*`, so the harness output
//! carries one pass/fail line per criterion; a passing test also prints a
//! `criterion N: PASS — …` detail line. Reference values are frozen into
//! this file from two independent sources: the closed-form engine
//! cross-checked against the Runge–Kutta oracle in `common`, and external
//! benchmark tabulations for the same parameter sets. Where a tabulated
//! value disagrees with both of our independent methods, the check asserts
//! the tabulated value as stated and the failure message carries the
//! analysis — a red line here is a finding, not a defect to paper over.

mod common;

use std::time::{Duration, Instant};

use chatterlab::approx::{
    contraction_rate, delta_map, heuristic_iterate, iterate_approx, solve_t1a, t2a, throughput_l,
};
use chatterlab::ctmc::{
    birth_death_mean, fwlln_gap, occupancy_time_average, CtmcParams, CtmcState,
};
use chatterlab::equilibrium::{certify_endless, iterate_periodic, stationary_point, Verdict};
use chatterlab::fluid::simulate;
use chatterlab::model::{state_from_triple, ModelParams, Phase, StateVector};
use common::{
    check_forcing_envelope, check_gap_monotone, check_jump_map_bound_and_band,
    check_mirror_properties, check_pool_conservation, check_t1a_monotone, integrate_schedule,
    sup_gap,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Benchmark parameter set without abandonment: heavy load, weak cross-pool
/// service, thresholds (0.1, 0.01).
fn benchmark_params() -> ModelParams {
    ModelParams::new(0.98, 0.1, 0.0, 0.1, 0.01).expect("benchmark parameters are valid")
}

/// The same benchmark with abandonment rate 0.01.
fn abandonment_params() -> ModelParams {
    ModelParams::new(0.98, 0.1, 0.01, 0.1, 0.01).expect("benchmark parameters are valid")
}

/// Moderate cross-pool service rate: oscillation dies out instead of
/// locking into a cycle.
fn relaxing_params() -> ModelParams {
    ModelParams::new(0.98, 0.3, 0.0, 0.1, 0.01).expect("benchmark parameters are valid")
}

/// The standard mildly-overloaded start used for the benchmark trajectory.
fn reference_start(p: &ModelParams) -> StateVector {
    state_from_triple(1.0, 1.2, 0.005, p)
}

/// Converged-cycle start for the abandonment benchmark (certified box
/// interior).
fn abandonment_box_start(p: &ModelParams) -> StateVector {
    state_from_triple(4.0, 8.0, 0.005, p)
}

// ---------------------------------------------------------------------------

/// Criterion 1: both equilibrium routes reproduce the benchmark reference
/// quadruple (Δ*, z(T₁), T₁, T₂) at the tabulated tolerances, each in
/// under a second.
#[test]
fn criterion_01_benchmark_equilibria_match_reference_table() {
    let p = benchmark_params();

    let clock = Instant::now();
    let a = iterate_approx(20.0, &p, 1e-10, 200).expect("jump-system iteration");
    let approx_elapsed = clock.elapsed();
    let ea = a.periodic.as_ref().expect("jump-system fixed point");
    assert_eq!(a.verdict, Verdict::Oscillatory);
    for (label, got, want, tol) in [
        ("gap", ea.delta_star, 8.802, 1e-3),
        ("shared content", ea.z21_star, 0.9992, 5e-4),
        ("absorption interval", ea.t_star[0], 7.093, 1e-3),
        ("release interval", ea.t_star[1], 46.044, 1e-3),
    ] {
        assert!(
            (got - want).abs() <= tol,
            "jump-system {label}: computed {got:.9}, reference {want} (tolerance {tol})"
        );
    }
    assert!(
        approx_elapsed < Duration::from_secs(1),
        "jump-system iteration took {approx_elapsed:?}"
    );

    let clock = Instant::now();
    let r = iterate_periodic(&reference_start(&p), &p, 1e-10, 300)
        .expect("switching-model iteration");
    let periodic_elapsed = clock.elapsed();
    assert_eq!(r.verdict, Verdict::Oscillatory);
    let ep = r.periodic.as_ref().expect("switching-model periodic orbit");
    assert!(
        periodic_elapsed < Duration::from_secs(1),
        "switching-model iteration took {periodic_elapsed:?}"
    );
    println!(
        "criterion 1: jump system ({:.6}, {:.6}, {:.6}, {:.6}) in {:?}; \
         switching model ({:.6}, {:.6}, {:.6}, {:.6}) in {:?}",
        ea.delta_star,
        ea.z21_star,
        ea.t_star[0],
        ea.t_star[1],
        approx_elapsed,
        ep.delta_star,
        ep.z21_star,
        ep.t_star[0],
        ep.t_star[1],
        periodic_elapsed,
    );
    assert!(
        (ep.z21_star - 0.9992).abs() <= 5e-3,
        "switching-model shared content: computed {:.9}, reference 0.9992 (tolerance 0.005)",
        ep.z21_star
    );
    assert!(
        (ep.t_star[1] - 46.044).abs() <= 5e-3,
        "switching-model release interval: computed {:.9}, reference 46.044 (tolerance 0.005)",
        ep.t_star[1]
    );

    // The remaining two reference entries disagree with both of our
    // independent methods; they are asserted as tabulated, and the message
    // carries the evidence.
    let mut failures = Vec::new();
    if (ep.delta_star - 8.663).abs() > 5e-3 {
        failures.push(format!(
            "cycle-start gap: computed {:.9} vs reference 8.663 (tolerance 0.005). The computed \
             value is confirmed by two independent methods — the closed-form half-cycle map and \
             a high-order event-detecting integrator — agreeing to ~1e-13, and by the reference \
             row's own other entries: pushing shared content 0.9992 and release interval 46.044 \
             back through the release-interval law reproduces the computed gap, not 8.663. See \
             the `reproduce table1` report for the full side-by-side comparison.",
            ep.delta_star
        ));
    }
    if (ep.t_star[0] - 7.270).abs() > 5e-3 {
        failures.push(format!(
            "absorption interval: computed {:.9} vs reference 7.270 (tolerance 0.005). Same \
             evidence as the gap row: the computed pair (8.7587, 7.0957) satisfies the model's \
             own switching laws and matches the independent integrator, while the tabulated \
             pair (8.663, 7.270) is consistent only with a different starting-gap convention.",
            ep.t_star[0]
        ));
    }
    assert!(
        failures.is_empty(),
        "switching-model rows outside tolerance:\n{}",
        failures.join("\n")
    );
    println!("criterion 1: PASS — both equilibrium routes match the reference quadruples");
}

/// Criterion 2: fixed points close. The jump-map residual vanishes below
/// 1e-9, and the switching-model cycle closes component-wise below 1e-6 —
/// fully (all six coordinates, via the label-reversal map at the half
/// cycle) when abandonment makes the whole state periodic, and on the gap
/// and sharing coordinates when queues grow by design.
#[test]
fn criterion_02_fixed_point_residuals_vanish() {
    let p = benchmark_params();
    let a = iterate_approx(20.0, &p, 1e-10, 200).expect("jump-system iteration");
    let ds = a.periodic.as_ref().expect("jump-system fixed point").delta_star;
    let residual = (delta_map(ds, &p).expect("map at the fixed point") - ds).abs();
    assert!(residual < 1e-9, "jump-map residual {residual:e} at gap {ds:.9}");

    // Without abandonment the queue levels are not part of the periodic
    // description — they grow every cycle, and that growth is the collapse
    // evidence checked elsewhere in this gate — so closure is asserted on
    // the gap and the sharing coordinates, the coordinates in which the
    // equilibrium is reported.
    let r = iterate_periodic(&reference_start(&p), &p, 1e-10, 300)
        .expect("switching-model iteration");
    let eq = r.periodic.as_ref().expect("periodic orbit");
    let st = eq.states_at_switch.expect("full states tracked");
    let (s0, s2, s4) = (st[0], st[2], st[4]);
    for (label, got, want) in [
        ("half-cycle gap reversal", s2.delta(), -eq.delta_star),
        ("stale content hand-off", s2.z12, s0.z21),
        ("shared content at the switch", s2.z21, p.tau),
        ("full-cycle gap return", s4.delta(), s0.delta()),
        ("full-cycle content return", s4.z21, s0.z21),
    ] {
        assert!(
            (got - want).abs() < 1e-6,
            "benchmark closure, {label}: {got:.12} vs {want:.12}"
        );
    }
    for s in &st {
        assert!(s.pools_full(), "pools not full at a switching epoch: {s:?}");
    }

    // With abandonment the full state is periodic: the state at the half
    // cycle is the label reversal of the start, component for component.
    let pa = abandonment_params();
    let ra = iterate_periodic(&abandonment_box_start(&pa), &pa, 1e-10, 300)
        .expect("abandonment iteration");
    let eqa = ra.periodic.as_ref().expect("abandonment periodic orbit");
    let sta = eqa.states_at_switch.expect("full states tracked");
    let half = sta[2].mirror();
    let checks = [
        ("q1", half.q1, sta[0].q1),
        ("q2", half.q2, sta[0].q2),
        ("z11", half.z11, sta[0].z11),
        ("z12", half.z12, sta[0].z12),
        ("z21", half.z21, sta[0].z21),
        ("z22", half.z22, sta[0].z22),
        ("q1 (full cycle)", sta[4].q1, sta[0].q1),
        ("q2 (full cycle)", sta[4].q2, sta[0].q2),
        ("z12 (full cycle)", sta[4].z12, sta[0].z12),
        ("z21 (full cycle)", sta[4].z21, sta[0].z21),
    ];
    let mut worst = 0.0f64;
    for (label, got, want) in checks {
        let err = (got - want).abs();
        worst = worst.max(err);
        assert!(err < 1e-6, "abandonment closure, {label}: {got:.12} vs {want:.12}");
    }
    println!(
        "criterion 2: PASS — jump-map residual {residual:.3e}; abandonment cycle closes \
         component-wise to {worst:.3e}"
    );
}

/// Criterion 3: the closed-form engine agrees with a fixed-step (1e-4)
/// Runge–Kutta integrator to below 1e-6 uniformly over one full cycle, on
/// both benchmark parameter sets, in under ten seconds each.
#[test]
fn criterion_03_closed_forms_match_integration_oracle() {
    let schedule = [Phase::I1, Phase::I2, Phase::I3, Phase::I4];
    let cases = [
        ("no abandonment", benchmark_params(), reference_start(&benchmark_params())),
        (
            "with abandonment",
            abandonment_params(),
            abandonment_box_start(&abandonment_params()),
        ),
    ];
    let mut gaps = Vec::new();
    for (label, p, x0) in cases {
        let r = iterate_periodic(&x0, &p, 1e-10, 300).expect("periodic orbit");
        let eq = r.periodic.as_ref().expect("periodic orbit");
        let start = eq.states_at_switch.expect("full states tracked")[0];
        let traj = simulate(&start, &p, eq.period, 0.05).expect("closed-form trajectory");

        let clock = Instant::now();
        let path = integrate_schedule(&start, &p, &schedule, 0.05);
        let elapsed = clock.elapsed();

        let mut cum = 0.0;
        for (k, &tk) in eq.t_star.iter().enumerate() {
            cum += tk;
            let measured = path.event_times[k];
            assert!(
                (measured - cum).abs() < 1e-6,
                "{label}: switching epoch {k} at {measured:.9} vs closed form {cum:.9}"
            );
        }
        let gap = sup_gap(&traj, &path);
        assert!(gap < 1e-6, "{label}: sup gap {gap:e} over one cycle");
        assert!(
            elapsed < Duration::from_secs(10),
            "{label}: integration took {elapsed:?}"
        );
        gaps.push(format!("{label} {gap:.3e} in {elapsed:?}"));
    }
    println!("criterion 3: PASS — sup gaps {} (tolerance 1e-6)", gaps.join(", "));
}

/// Criterion 4: from starts in the certified interval, the jump iteration's
/// per-step error ratios stay below the certified contraction rate ρ, and
/// no iterate's implied cycle is longer than twice the certified bound R.
#[test]
fn criterion_04_jump_iteration_contracts_at_certified_rate() {
    let p = benchmark_params();
    let rc = contraction_rate(&p, 0.1).expect("certified contraction data");
    assert!(rc.certified, "contraction certificate did not close");
    assert!(rc.rho > 0.0 && rc.rho < 1.0, "rate {} not in (0, 1)", rc.rho);

    let mut worst_ratio = 0.0f64;
    let mut worst_cycle = 0.0f64;
    for start in [rc.s_mu.0, rc.s_mu.1] {
        let r = iterate_approx(start, &p, 1e-12, 200).expect("iteration from the interval edge");
        let ds = r.periodic.as_ref().expect("fixed point").delta_star;
        for w in r.delta_sequence.windows(2) {
            let (e0, e1) = ((w[0] - ds).abs(), (w[1] - ds).abs());
            if e1 < 1e-8 {
                // Below here the errors are solver polish noise, not map steps.
                break;
            }
            let ratio = e1 / e0;
            worst_ratio = worst_ratio.max(ratio);
            assert!(
                ratio <= rc.rho * (1.0 + 1e-9),
                "error ratio {ratio:.6} from start {start} exceeds certified rate {:.6} \
                 (errors {e0:.3e} → {e1:.3e})",
                rc.rho
            );
        }
        for &d in &r.delta_sequence {
            if d <= p.kappa {
                break;
            }
            let t1 = solve_t1a(d, &p).expect("interval length at an iterate");
            let cycle = 2.0 * (t1 + t2a(t1, &p));
            worst_cycle = worst_cycle.max(cycle);
            assert!(
                cycle <= 2.0 * rc.r_bound,
                "cycle length {cycle:.6} at gap {d:.6} exceeds 2R = {:.6}",
                2.0 * rc.r_bound
            );
        }
    }
    println!(
        "criterion 4: PASS — worst ratio {worst_ratio:.6} ≤ ρ = {:.6}; worst cycle \
         {worst_cycle:.3} ≤ 2R = {:.3}",
        rc.rho,
        2.0 * rc.r_bound
    );
}

/// Criterion 5: at cross-service rate 0.3 the oscillation dies out — the
/// jump iteration classifies the system as settling to the no-sharing rest
/// state, and the one-line heuristic map goes negative within five steps.
#[test]
fn criterion_05_moderate_cross_rate_relaxes_to_stationary() {
    let p = relaxing_params();
    let r = iterate_approx(20.0, &p, 1e-10, 200).expect("jump-system iteration");
    assert_eq!(
        r.verdict,
        Verdict::StationaryConvergent,
        "expected the oscillation to die out; gap sequence {:?}",
        r.delta_sequence
    );

    let h = heuristic_iterate(20.0, &p, 50).expect("heuristic iteration");
    assert_eq!(h.classification.verdict, Verdict::StationaryConvergent);
    let seq = &h.classification.delta_sequence;
    let last = *seq.last().expect("nonempty sequence");
    assert!(last < 0.0, "heuristic did not stop on a negative gap: {seq:?}");
    assert!(
        h.classification.iterations_used <= 5,
        "heuristic needed {} steps; gap sequence {seq:?}",
        h.classification.iterations_used
    );
    println!(
        "criterion 5: PASS — jump system settles; heuristic hits {last:.6} after {} steps",
        h.classification.iterations_used
    );
}

/// Criterion 6: the benchmark collapses — long-run served rate below the
/// arrival rate by two agreeing methods (the externally reported 0.44 is
/// shown alongside and its discrepancy is documented in the report), and
/// the queues at successive cycle starts grow strictly over at least five
/// transitions.
#[test]
fn criterion_06_collapse_verdict_and_throughput_agreement() {
    let p = benchmark_params();
    let h = heuristic_iterate(20.0, &p, 200).expect("heuristic iteration");
    let xi = h.xi_star.expect("oscillatory fixed point has a closure factor");
    let rep = throughput_l(xi, &p).expect("throughput report");

    assert!(rep.collapse, "collapse verdict false");
    assert!(
        rep.l_oracle < p.lambda,
        "served rate {:.6} not below arrival rate {}",
        rep.l_oracle,
        p.lambda
    );
    let agreement = (rep.l_closed_form - rep.l_oracle).abs();
    assert!(
        agreement < 0.05,
        "closed form {:.6} and direct average {:.6} disagree by {agreement:.6}",
        rep.l_closed_form,
        rep.l_oracle
    );
    let l_ref = rep.l_reference.expect("benchmark reference throughput");
    println!(
        "criterion 6: served rate — closed form {:.6}, direct average {:.6}, sign-variant \
         {:.6}, reference {l_ref}",
        rep.l_closed_form, rep.l_oracle, rep.l_closed_form_variant
    );
    assert!(
        rep.notes.iter().any(|n| n.contains("0.44")),
        "reference-value discrepancy not documented in the report notes: {:?}",
        rep.notes
    );

    let traj = simulate(&reference_start(&p), &p, 1065.0, 0.1).expect("benchmark trajectory");
    let starts: Vec<(f64, f64)> = traj
        .cycle_records
        .iter()
        .filter_map(|c| c.states_at_switch.first().map(|s| (s.q1, s.q2)))
        .collect();
    assert!(starts.len() >= 8, "only {} cycles recorded", starts.len());
    let mut growing = 0usize;
    for w in starts.windows(2).rev() {
        if w[1].0 > w[0].0 && w[1].1 > w[0].1 {
            growing += 1;
        } else {
            break;
        }
    }
    assert!(
        growing >= 5,
        "queues grew over only {growing} consecutive cycle-start transitions; starts {starts:?}"
    );
    println!(
        "criterion 6: PASS — collapse confirmed; queues grew across the last {growing} of {} \
         cycle starts",
        starts.len()
    );
}

/// Criterion 7: the endless-oscillation certificate closes on the
/// benchmark-with-abandonment box (gap in [4, 7], queue floor 1) with the
/// expected amplitude constant and next-gap floor, and ten random starts
/// inside the box all classify as oscillatory.
#[test]
fn criterion_07_oscillation_certificate_and_certified_box() {
    let p = abandonment_params();
    let cert = certify_endless(&p, 4.0, 7.0, 1.0).expect("certificate construction");
    assert!(
        (cert.a_u_const - (-0.891)).abs() <= 0.01,
        "amplitude constant {:.6} vs expected -0.891 (tolerance 0.01)",
        cert.a_u_const
    );
    assert!(
        cert.delta_l_estimate >= 6.21,
        "closed-form next-gap floor {:.6} below 6.21",
        cert.delta_l_estimate
    );
    assert!(cert.verdict, "certificate did not close on the box");
    assert!(
        cert.delta_next_bounds.0 >= 4.0 && cert.delta_next_bounds.1 <= 7.0,
        "next-gap interval {:?} escapes the box [4, 7]",
        cert.delta_next_bounds
    );

    let mut rng = ChaCha12Rng::seed_from_u64(7);
    for k in 0..10 {
        let gap = 4.0 + 3.0 * rng.random::<f64>();
        let q1 = 1.0 + 7.0 * rng.random::<f64>();
        let z21 = p.tau * rng.random::<f64>();
        let x0 = state_from_triple(q1, q1 + gap, z21, &p);
        let r = iterate_periodic(&x0, &p, 1e-9, 400).expect("iteration from a box start");
        assert_eq!(
            r.verdict,
            Verdict::Oscillatory,
            "random start #{k} (gap {gap:.4}, q1 {q1:.4}, z21 {z21:.5}) classified {:?}",
            r.verdict
        );
    }
    println!(
        "criterion 7: PASS — certificate closes (A_U {:.4}, next-gap floor {:.5}); ten random \
         box starts all oscillate",
        cert.a_u_const, cert.delta_l_estimate
    );
}

/// Criterion 8: fluid-scaled stochastic paths approach the fluid cycle —
/// the median uniform gap over one cycle strictly decreases along scales
/// 100, 400, 1600 (20 replications each), all within five minutes.
#[test]
fn criterion_08_stochastic_paths_approach_the_fluid_limit() {
    let clock = Instant::now();
    let p = abandonment_params();
    let r = iterate_periodic(&abandonment_box_start(&p), &p, 1e-9, 300).expect("periodic orbit");
    let eq = r.periodic.as_ref().expect("periodic orbit");
    let x_star = eq.states_at_switch.expect("full states tracked")[0];
    let fluid_ref = simulate(&x_star, &p, eq.period, 0.05).expect("fluid reference cycle");

    let rows = fwlln_gap(&[100, 400, 1600], &p, &x_star, &fluid_ref, eq.period, 20, 2026)
        .expect("scaled-path comparison");
    let elapsed = clock.elapsed();
    assert_eq!(rows.len(), 3);
    let medians: Vec<f64> = rows.iter().map(|r| r.median_gap).collect();
    for w in medians.windows(2) {
        assert!(
            w[1] < w[0],
            "median gaps not strictly decreasing in the scale: {medians:?}"
        );
    }
    assert!(elapsed < Duration::from_secs(300), "comparison took {elapsed:?}");
    println!(
        "criterion 8: PASS — median gaps {:.4} → {:.4} → {:.4} at scales 100/400/1600 \
         ({elapsed:?})",
        medians[0], medians[1], medians[2]
    );
}

/// Criterion 9: every sub-threshold no-sharing start relaxes to the
/// no-sharing rest state (0, 0, λ, 0, 0, λ) to within 1e-6 by t = 2000,
/// and a chain with unreachably high activation thresholds matches the
/// independent single-pool birth–death stationary mean within 1%.
#[test]
fn criterion_09_no_sharing_starts_reach_the_stationary_point() {
    for p in [benchmark_params(), abandonment_params()] {
        let rest = stationary_point(&p);
        let starts = [
            StateVector { q1: 0.0, q2: 0.0, z11: 0.0, z12: 0.0, z21: 0.0, z22: 0.0 },
            StateVector { q1: p.kappa, q2: p.kappa, z11: 1.0, z12: 0.0, z21: 0.0, z22: 1.0 },
            StateVector { q1: 0.1, q2: 0.05, z11: 0.3, z12: 0.0, z21: 0.0, z22: 0.9 },
            StateVector { q1: 0.02, q2: 0.1, z11: 0.7, z12: 0.0, z21: 0.0, z22: 0.2 },
            StateVector { q1: 0.08, q2: 0.0, z11: 0.0, z12: 0.0, z21: 0.0, z22: 1.0 },
        ];
        for (k, x0) in starts.iter().enumerate() {
            let traj = simulate(x0, &p, 2000.0, 1.0).expect("relaxing trajectory");
            let last = traj.samples.last().expect("nonempty trajectory");
            assert!(
                (last.t - 2000.0).abs() < 1e-9,
                "start #{k}: trajectory ended early at t = {}",
                last.t
            );
            for (label, got, want) in [
                ("q1", last.state.q1, rest.q1),
                ("q2", last.state.q2, rest.q2),
                ("z11", last.state.z11, rest.z11),
                ("z12", last.state.z12, rest.z12),
                ("z21", last.state.z21, rest.z21),
                ("z22", last.state.z22, rest.z22),
            ] {
                assert!(
                    (got - want).abs() < 1e-6,
                    "start #{k} (theta = {}): {label} ended at {got:.9}, rest state has {want}",
                    p.theta
                );
            }
        }
    }

    // Decoupled-pools calibration: thresholds far beyond any reachable
    // queue turn each pool into an independent single-class system with
    // abandonment, whose stationary mean has an exact birth–death formula.
    let fluid_p = ModelParams::new(0.8, 0.5, 0.5, 0.1, 0.01).expect("calibration parameters");
    let mut cp = CtmcParams::from_symmetric(50, &fluid_p).expect("chain parameters");
    cp.k12 = 100_000;
    cp.k21 = 100_000;
    let (avg1, avg2) = occupancy_time_average(&CtmcState::empty(), &cp, 4000.0, 200.0, 2024)
        .expect("time-average occupancy");
    let want = birth_death_mean(cp.lambda1, cp.m1, cp.theta1).expect("birth–death mean");
    for (label, got) in [("pool 1", avg1), ("pool 2", avg2)] {
        assert!(
            (got - want).abs() <= 0.01 * want,
            "{label} occupancy {got:.4} vs birth–death mean {want:.4} (tolerance 1%)"
        );
    }
    println!(
        "criterion 9: PASS — ten no-sharing starts reach the rest state; chain occupancies \
         ({avg1:.3}, {avg2:.3}) match the birth–death mean {want:.3} within 1%"
    );
}

/// Criterion 10: the six structural property suites each hold over 1000
/// freshly randomized instances (deterministic seeds; the same checks run
/// under a shrinking fuzzer in the property-test target).
#[test]
fn criterion_10_randomized_property_suites() {
    const CASES: usize = 1000;

    fn random_params(rng: &mut ChaCha12Rng) -> ModelParams {
        let lambda = rng.random_range(0.9..0.995);
        let mu = rng.random_range(0.05..0.6);
        let theta = if rng.random::<bool>() { 0.0 } else { rng.random_range(0.0005..0.02) };
        let kappa = rng.random_range(0.02..0.5);
        let tau = rng.random_range(0.005..0.3);
        ModelParams::new(lambda, mu, theta, kappa, tau).expect("sampled parameters are valid")
    }

    fn random_case(rng: &mut ChaCha12Rng) -> (ModelParams, StateVector) {
        let p = random_params(rng);
        let q1 = rng.random_range(30.0..80.0);
        let dgap = rng.random_range(0.05..8.0);
        let zf = rng.random_range(0.0..0.9);
        let x0 = common::canonical_start(&p, q1, dgap, zf);
        (p, x0)
    }

    let mut rng = ChaCha12Rng::seed_from_u64(101);
    for _ in 0..CASES {
        let p = random_params(&mut rng);
        let (s1, a) = (rng.random::<f64>(), rng.random::<f64>());
        let (s2, b) = (rng.random::<f64>(), rng.random::<f64>());
        let x = StateVector {
            q1: rng.random_range(0.0..50.0),
            q2: rng.random_range(0.0..50.0),
            z11: a * s1,
            z21: (1.0 - a) * s1,
            z12: b * s2,
            z22: (1.0 - b) * s2,
        };
        check_mirror_properties(&x, &p);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(102);
    for _ in 0..CASES {
        let (p, x0) = random_case(&mut rng);
        check_gap_monotone(&p, &x0);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(103);
    for _ in 0..CASES {
        let (p, x0) = random_case(&mut rng);
        let horizon = rng.random_range(5.0..40.0);
        check_pool_conservation(&p, &x0, horizon);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(104);
    for _ in 0..CASES {
        let p = random_params(&mut rng);
        let above = rng.random_range(1e-3..12.0);
        let extra = rng.random_range(1e-6..12.0);
        check_t1a_monotone(&p, above, extra);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(105);
    for _ in 0..CASES {
        let p = random_params(&mut rng);
        let above = rng.random_range(1e-4..30.0);
        let band_frac = rng.random_range(1e-6..1.0);
        check_jump_map_bound_and_band(&p, above, band_frac);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(106);
    for _ in 0..CASES {
        let (p, x0) = random_case(&mut rng);
        let frac = rng.random_range(0.0..1.0);
        check_forcing_envelope(&p, &x0, frac);
    }

    println!("criterion 10: PASS — six property suites × {CASES} randomized instances");
}
