//! Shared integration-test helpers.
//!
//! Two independent kinds of scrutiny live here:
//!
//! * an oracle for the closed-form switching trajectories — a classic
//!   fixed-step fourth-order Runge–Kutta integrator whose right-hand side
//!   is written directly from the routing rules, with switching events
//!   located by bisection on the step; it shares no code with the
//!   production engine, so agreement is evidence for both;
//! * the structural property checks run by both the randomized property
//!   suites and the acceptance gate.

#![allow(dead_code)] // each test binary uses its own subset of the helpers

use chatterlab::approx::{delta_bound, delta_map, epsilon_kappa, solve_t1a};
use chatterlab::equilibrium::psi_bounds;
use chatterlab::fluid::{
    eval_delta1, eval_interval1, eval_interval2, find_t1, half_cycle, simulate, Trajectory,
};
use chatterlab::model::{state_from_triple, ModelParams, Phase, StateVector};
use chatterlab::numerics::exp_decay_integral;

/// Fixed integration step (partial steps are used to land exactly on
/// sample-grid times and located events, and are only ever shorter).
pub const RK4_STEP: f64 = 1e-4;

/// State layout used by the integrator: `[q1, q2, z11, z12, z21, z22]`.
pub type RawState = [f64; 6];

pub fn raw(x: &StateVector) -> RawState {
    [x.q1, x.q2, x.z11, x.z12, x.z21, x.z22]
}

/// Routing-rule right-hand side in overload (both queues positive, both
/// pools busy). Service completions occur at rate `1` per unit of own-class
/// content and `μ` per unit of cross-class content; each freed slot is
/// refilled from the queue the phase routes that pool to.
pub fn rhs(phase: Phase, x: &RawState, p: &ModelParams) -> RawState {
    let [q1, q2, z11, z12, z21, z22] = *x;
    let (lam, mu, th) = (p.lambda, p.mu, p.theta);
    match phase {
        // Pool 1 absorbs class-2 fluid; pool 2 refills with its own class 2;
        // queue 1 is not served at all.
        Phase::I1 => [
            lam - th * q1,
            lam - (z11 + mu * z21 + mu * z12 + z22) - th * q2,
            -z11,
            -mu * z12,
            z11,
            mu * z12,
        ],
        // No new sharing: cross content drains at rate `μ` on both sides and
        // every freed slot refills from the pool's own queue.
        Phase::I2 | Phase::I4 => [
            lam - (z11 + mu * z21) - th * q1,
            lam - (z22 + mu * z12) - th * q2,
            mu * z21,
            -mu * z12,
            -mu * z21,
            mu * z12,
        ],
        // Mirror of `I1`.
        Phase::I3 => [
            lam - (z22 + mu * z12 + mu * z21 + z11) - th * q1,
            lam - th * q2,
            mu * z21,
            z22,
            -mu * z21,
            -z22,
        ],
        other => panic!("no overload right-hand side for phase {other:?}"),
    }
}

/// One classic Runge–Kutta step of size `h`.
pub fn rk4_step(phase: Phase, x: &RawState, h: f64, p: &ModelParams) -> RawState {
    let add = |a: &RawState, b: &RawState, s: f64| {
        let mut out = *a;
        for i in 0..6 {
            out[i] += s * b[i];
        }
        out
    };
    let k1 = rhs(phase, x, p);
    let k2 = rhs(phase, &add(x, &k1, h / 2.0), p);
    let k3 = rhs(phase, &add(x, &k2, h / 2.0), p);
    let k4 = rhs(phase, &add(x, &k3, h), p);
    let mut out = *x;
    for i in 0..6 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Value whose downward zero crossing ends the given phase: the activation
/// gap during absorption phases, the draining shared content during release
/// phases.
fn event_value(phase: Phase, x: &RawState, p: &ModelParams) -> f64 {
    match phase {
        Phase::I1 => (x[1] - x[0]) - p.kappa,
        Phase::I2 => x[4] - p.tau,
        Phase::I3 => (x[0] - x[1]) - p.kappa,
        Phase::I4 => x[3] - p.tau,
        other => panic!("no switching event for phase {other:?}"),
    }
}

/// A numerically integrated path through a fixed phase schedule.
pub struct IntegratedPath {
    /// States at `0, dt, 2·dt, …` (times generated as `i · dt` to match the
    /// production sampler's grid arithmetic).
    pub samples: Vec<(f64, RawState)>,
    /// Absolute times of the located switching events, one per phase.
    pub event_times: Vec<f64>,
    /// State at the final event.
    pub end_state: RawState,
}

/// Integrate the given phase schedule from `x0`, sampling every `dt` and
/// ending each phase at the bisection-located downward crossing of its
/// switching event.
pub fn integrate_schedule(
    x0: &StateVector,
    p: &ModelParams,
    phases: &[Phase],
    dt: f64,
) -> IntegratedPath {
    let mut x = raw(x0);
    let mut t = 0.0f64;
    let mut samples = vec![(0.0, x)];
    let mut grid_index = 1u64;
    let mut next_sample = dt;
    let mut event_times = Vec::with_capacity(phases.len());

    for &phase in phases {
        assert!(
            event_value(phase, &x, p) > 0.0,
            "phase {phase:?} entered at t = {t} with its exit condition already met"
        );
        loop {
            let h = RK4_STEP.min(next_sample - t);
            assert!(h > 0.0, "sample grid bookkeeping went backwards");
            let x_new = rk4_step(phase, &x, h, p);
            if event_value(phase, &x_new, p) <= 0.0 {
                // The crossing lies within this step: bisect the step size.
                // A single Runge–Kutta step has local error `O(h⁵) ≈ 1e-20`,
                // so re-stepping from `x` at trial sizes is exact for our
                // purposes.
                let (mut lo, mut hi) = (0.0f64, h);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if event_value(phase, &rk4_step(phase, &x, mid, p), p) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let s = 0.5 * (lo + hi);
                x = rk4_step(phase, &x, s, p);
                t += s;
                event_times.push(t);
                break;
            }
            x = x_new;
            t += h;
            if t >= next_sample - 1e-12 {
                // Snap to the exact grid time: the drift is ≤ 1e-12 and
                // snapping keeps later partial steps consistent.
                t = next_sample;
                samples.push((next_sample, x));
                grid_index += 1;
                next_sample = grid_index as f64 * dt;
            }
        }
    }
    IntegratedPath { samples, event_times, end_state: x }
}

// ---------------------------------------------------------------------------
// Structural property checks (shared by the property suites and the
// acceptance gate; panic on violation)
// ---------------------------------------------------------------------------

/// A canonical overloaded start: queue `q1`, gap `κ + dgap` above the
/// activation threshold, stale sharing at fraction `zf` of the release
/// threshold.
pub fn canonical_start(p: &ModelParams, q1: f64, dgap: f64, zf: f64) -> StateVector {
    state_from_triple(q1, q1 + p.kappa + dgap, zf * p.tau, p)
}

/// The label-reversal operator is a bit-exact involution, negates the queue
/// gap, swaps the two threshold-gap diagnostics (their sum is the constant
/// `−2κ`), and preserves pool fullness.
pub fn check_mirror_properties(x: &StateVector, p: &ModelParams) {
    let m = x.mirror();
    assert_eq!(m.mirror(), *x, "double mirror changed the state");
    assert_eq!(m.delta(), -x.delta(), "mirror failed to negate the gap");
    assert!(
        (x.d12(p) + x.d21(p) + 2.0 * p.kappa).abs() <= 1e-9,
        "threshold gaps do not sum to -2*kappa"
    );
    assert!(
        (x.d12(p) - m.d21(p)).abs() <= 1e-12,
        "mirror failed to swap the threshold gaps"
    );
    assert_eq!(x.pools_full(), m.pools_full(), "mirror changed pool fullness");
}

/// Monotone structure of the queue gap over a half-cycle `[0, Σ₂)`:
///
/// * while the gap is nonnegative it decreases strictly (without
///   abandonment this covers the whole interval);
/// * with abandonment the gap may bottom out and relax upward after it
///   turns negative, but it never climbs back to zero;
/// * throughout the release interval's interior the gap stays below the
///   activation threshold, so sharing is never re-activated early.
pub fn check_gap_monotone(p: &ModelParams, x0: &StateVector) {
    let rec = half_cycle(x0, p).expect("half-cycle from a canonical start");
    let mut gaps: Vec<f64> = Vec::new();

    // Absorption interval (cut short at the queue-hit epoch if a queue
    // emptied first; the claims concern the overloaded segment).
    let t1_end = match (rec.t1, rec.sigma_q) {
        (Some(t1), _) => t1,
        (None, Some(sq)) => sq * (1.0 - 1e-12),
        (None, None) => panic!("half-cycle has neither T1 nor a queue-hit epoch"),
    };
    for k in 0..=40 {
        let t = t1_end * k as f64 / 40.0;
        gaps.push(eval_delta1(x0.delta(), x0.z21, t, p));
    }

    if let Some(t1) = rec.t1 {
        let x1 = eval_interval1(x0, t1, p).expect("state at the switch");
        let t2_end = match (rec.t2, rec.sigma_q) {
            (Some(t2), _) => t2,
            (None, Some(sq)) => (sq - t1) * (1.0 - 1e-12),
            (None, None) => panic!("release interval has neither T2 nor a queue-hit epoch"),
        };
        // A tie at the switch (shared content already at the release
        // threshold) makes the release interval empty — nothing to sample.
        if t2_end > 1e-9 {
            for k in 1..=40 {
                let t = t2_end * k as f64 / 40.0;
                let x = eval_interval2(&x1, t, p).expect("state inside the release interval");
                let gap = x.delta();
                if t < t2_end {
                    assert!(
                        gap < p.kappa,
                        "gap {gap} not below threshold {} inside the release interval",
                        p.kappa
                    );
                }
                gaps.push(gap);
            }
        }
    }

    let mut went_negative = false;
    for w in gaps.windows(2) {
        if went_negative {
            assert!(w[1] < 0.0, "gap re-crossed zero upward: {} then {}", w[0], w[1]);
        } else if w[0] >= 0.0 && w[1] >= 0.0 {
            assert!(
                w[1] < w[0],
                "nonnegative gap failed to decrease strictly: {} then {}",
                w[0],
                w[1]
            );
        }
        if p.theta == 0.0 {
            // Without abandonment the decrease is strict over the whole
            // half-cycle, negative stretch included.
            assert!(w[1] < w[0], "gap failed to decrease strictly: {} then {}", w[0], w[1]);
        }
        went_negative = went_negative || w[1] < 0.0;
    }
}

/// Along simulated trajectories both pools stay exactly full at every
/// sample taken in a sharing phase, and with abandonment the queues never
/// exceed the larger of their start and the inflow ceiling `λ/θ`.
pub fn check_pool_conservation(p: &ModelParams, x0: &StateVector, horizon: f64) {
    let traj = simulate(x0, p, horizon, 0.5).expect("simulation from a canonical start");
    let q_cap = if p.theta > 0.0 {
        Some(x0.q1.max(x0.q2).max(p.lambda / p.theta) + 1e-9)
    } else {
        None
    };
    for s in &traj.samples {
        match s.phase {
            Phase::I1 | Phase::I2 | Phase::I3 | Phase::I4 => {
                assert!(
                    (s.state.z11 + s.state.z21 - 1.0).abs() <= 1e-12,
                    "pool 1 not full at t = {}: {}",
                    s.t,
                    s.state.z11 + s.state.z21
                );
                assert!(
                    (s.state.z12 + s.state.z22 - 1.0).abs() <= 1e-12,
                    "pool 2 not full at t = {}: {}",
                    s.t,
                    s.state.z12 + s.state.z22
                );
            }
            _ => break,
        }
        if let Some(cap) = q_cap {
            assert!(
                s.state.q1 <= cap && s.state.q2 <= cap,
                "queue exceeded its ceiling {cap} at t = {}",
                s.t
            );
        }
    }
}

/// The absorption-interval length of the jump system grows strictly with
/// the starting gap.
pub fn check_t1a_monotone(p: &ModelParams, above: f64, extra: f64) {
    let d1 = p.kappa + above;
    let d2 = d1 + extra;
    let t1 = solve_t1a(d1, p).expect("interval length at the smaller gap");
    let t2 = solve_t1a(d2, p).expect("interval length at the larger gap");
    assert!(t1 < t2, "interval lengths not increasing: T({d1}) = {t1}, T({d2}) = {t2}");
}

/// The jump-system gap map stays below its parameter bound, and any gap in
/// the narrow band just above the activation threshold maps to a negative
/// gap (oscillation failure) on the next cycle.
pub fn check_jump_map_bound_and_band(p: &ModelParams, above: f64, band_frac: f64) {
    let bound = delta_bound(p);
    let image = delta_map(p.kappa + above, p).expect("map evaluates above the threshold");
    assert!(image < bound, "map image {image} reached its bound {bound}");

    let eps = epsilon_kappa(p);
    let in_band = p.kappa + band_frac * eps * (1.0 - 1e-9);
    let next = delta_map(in_band, p).expect("map evaluates inside the band");
    assert!(next < 0.0, "gap {in_band} inside the failure band (width {eps}) mapped to {next} >= 0");
}

/// On the absorption interval the gap is sandwiched between the envelopes
/// obtained by freezing the forcing term at its magnitude bounds.
pub fn check_forcing_envelope(p: &ModelParams, x0: &StateVector, frac: f64) {
    let t1 = find_t1(x0, p).expect("absorption interval length");
    let t = frac * t1;
    let gap = eval_delta1(x0.delta(), x0.z21, t, p);
    let (psi_l, psi_u) = psi_bounds(p);
    let decay = (-p.theta * t).exp();
    let kernel = exp_decay_integral(p.theta, t);
    let lower = x0.delta() * decay - psi_u * kernel;
    let upper = x0.delta() * decay - psi_l * kernel;
    assert!(
        lower - 1e-9 <= gap && gap <= upper + 1e-9,
        "gap {gap} escaped its envelope [{lower}, {upper}] at t = {t}"
    );
}

/// Largest componentwise deviation between a production trajectory and an
/// integrated path, compared at shared grid times. The production sampler
/// also emits samples at switching epochs; those are skipped here (the
/// epochs themselves are compared separately via `event_times`), but every
/// grid time of the integrated path must be present in the trajectory.
pub fn sup_gap(traj: &Trajectory, path: &IntegratedPath) -> f64 {
    let mut sup = 0.0f64;
    let mut compared = 0usize;
    let mut prod = traj.samples.iter().peekable();
    'grid: for &(t_num, x_num) in &path.samples {
        while let Some(s) = prod.peek() {
            if s.t < t_num - 1e-9 {
                prod.next();
                continue;
            }
            assert!(
                (s.t - t_num).abs() < 1e-9,
                "grid time {t_num} missing from the production trajectory (next is {})",
                s.t
            );
            let a = raw(&s.state);
            for i in 0..6 {
                sup = sup.max((a[i] - x_num[i]).abs());
            }
            compared += 1;
            continue 'grid;
        }
        break;
    }
    assert!(compared > 10, "too few comparable samples ({compared})");
    sup
}
