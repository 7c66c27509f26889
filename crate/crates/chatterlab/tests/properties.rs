//! Randomized property suites for the model's structural invariants. Each
//! suite runs at least 1000 generated instances. The check bodies live in
//! `common` and are shared with the acceptance gate, which replays them
//! over a deterministic sample.
//!
//! One deliberate deviation from the obvious textbook claim, documented in
//! `common::check_gap_monotone`: with abandonment the queue gap is *not*
//! strictly decreasing over the whole half-cycle — after it turns negative
//! it may bottom out and relax upward (the abandonment term `−θΔ` becomes
//! positive and eventually dominates the decaying forcing term). What holds
//! in general, and what the suite asserts, is strict decrease while the gap
//! is nonnegative, no upward re-crossing of zero, and the gap staying below
//! the activation threshold throughout the release interval — the facts the
//! cycle construction actually rests on. Without abandonment the strict
//! claim is asserted in full.

mod common;

use proptest::prelude::*;

use chatterlab::model::{ModelParams, StateVector};
use common::{
    canonical_start, check_forcing_envelope, check_gap_monotone, check_jump_map_bound_and_band,
    check_mirror_properties, check_pool_conservation, check_t1a_monotone,
};

/// Parameter generator covering the regime of interest: near-critical load,
/// genuinely slow cross-class service, slow-to-no abandonment, and
/// thresholds small relative to queue scales.
fn arb_params() -> impl Strategy<Value = ModelParams> {
    (
        0.9f64..0.995,
        0.05f64..0.6,
        prop_oneof![Just(0.0), 0.0005f64..0.02],
        0.02f64..0.5,
        0.005f64..0.3,
    )
        .prop_map(|(lambda, mu, theta, kappa, tau)| {
            ModelParams::new(lambda, mu, theta, kappa, tau).expect("generated parameters are valid")
        })
}

/// A canonical overloaded start for `arb_params`: ample queue content, a
/// gap above the activation threshold, stale sharing strictly below the
/// release threshold.
fn arb_case() -> impl Strategy<Value = (ModelParams, StateVector)> {
    (arb_params(), 30.0f64..80.0, 0.05f64..8.0, 0.0f64..0.9)
        .prop_map(|(p, q1, dgap, zf)| (p, canonical_start(&p, q1, dgap, zf)))
}

/// An unconstrained (not necessarily pools-full) but well-formed state.
fn arb_state() -> impl Strategy<Value = StateVector> {
    (0.0f64..200.0, 0.0f64..200.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(
        |(q1, q2, a, b, c, d)| {
            // Scale each pool's two contents so they cannot exceed capacity.
            let s1 = if a + c > 1.0 { 1.0 / (a + c) } else { 1.0 };
            let s2 = if b + d > 1.0 { 1.0 / (b + d) } else { 1.0 };
            StateVector::new(q1, q2, a * s1, b * s2, c * s1, d * s2)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn mirror_is_an_involution_and_flips_the_gap(
        x in arb_state(),
        p in arb_params(),
    ) {
        check_mirror_properties(&x, &p);
    }

    #[test]
    fn gap_decreases_strictly_while_nonnegative(
        (p, x0) in arb_case(),
    ) {
        check_gap_monotone(&p, &x0);
    }

    #[test]
    fn pool_occupancies_are_conserved_along_trajectories(
        (p, x0) in arb_case(),
        horizon in 5.0f64..40.0,
    ) {
        check_pool_conservation(&p, &x0, horizon);
    }

    #[test]
    fn activation_interval_grows_with_the_starting_gap(
        p in arb_params(),
        above in 1e-3f64..12.0,
        extra in 1e-6f64..12.0,
    ) {
        check_t1a_monotone(&p, above, extra);
    }

    #[test]
    fn jump_map_respects_its_bound_and_the_failure_band(
        p in arb_params(),
        above in 1e-4f64..30.0,
        band_frac in 1e-6f64..1.0,
    ) {
        check_jump_map_bound_and_band(&p, above, band_frac);
    }

    #[test]
    fn interval1_gap_respects_the_forcing_envelope(
        (p, x0) in arb_case(),
        frac in 0.0f64..1.0,
    ) {
        check_forcing_envelope(&p, &x0, frac);
    }
}
