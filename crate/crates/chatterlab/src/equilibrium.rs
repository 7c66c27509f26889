//! Long-run behavior of the switching fluid model: the half-cycle return
//! map, periodic equilibria, trajectory classification, and a rigorous
//! interval certificate that oscillation never stops.
//!
//! One half-cycle maps a cycle start `(q₁, q₂, z₂₁)` (with `z₁₂ = τ`) to the
//! label-swapped end state `(q₂(Σ₂), q₁(Σ₂), z₁₂(Σ₂))`. Iterating this map
//! either converges to a fixed point — a periodic orbit of the full model,
//! alternating overload direction every half-cycle — or stalls because a
//! restart gap cannot form (or a queue empties), after which the path relaxes
//! toward the no-sharing rest point.
//!
//! [`certify_endless`] wraps the return map in interval arithmetic: given a
//! box of cycle starts, it propagates worst-case bounds through one
//! half-cycle and checks the image box lands inside the original. When it
//! does, every start in the box oscillates forever (by induction), without
//! ever trusting a single floating-point trajectory.

use serde::{Deserialize, Serialize};

use crate::fluid::{
    full_cycle, half_cycle_unchecked, psi_magnitude_bounds, t1_bracket, CycleTermination,
    FluidError,
};
use crate::model::{state_from_triple, validate_params, ModelError, ModelParams, StateVector};
use crate::numerics::exp_decay_quotient;

/// The overload-free rest point: empty queues, each pool serving its own
/// class at the arrival rate.
pub fn stationary_point(p: &ModelParams) -> StateVector {
    StateVector { q1: 0.0, q2: 0.0, z11: p.lambda, z12: 0.0, z21: 0.0, z22: p.lambda }
}

/// Magnitude bounds `(Ψ_L, Ψ_U)` for the forcing of the queue-difference
/// dynamics during the gap-drain interval: `Ψ_L = (1+μ) − (1−μ)τ`,
/// `Ψ_U = 2`. Valid for any start with `z₁₂(0) ≤ τ`.
pub fn psi_bounds(p: &ModelParams) -> (f64, f64) {
    psi_magnitude_bounds(p)
}

/// Analytic bracket `[T₁ᴸ, T₁ᵁ]` for the gap-drain time from a start gap
/// `delta0` (see [`psi_bounds`]); `(0, 0)` when `delta0 ≤ κ`.
pub fn t1_bounds(delta0: f64, p: &ModelParams) -> (f64, f64) {
    t1_bracket(delta0, p)
}

/// Outcome classification for the half-cycle iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// The return map converged to a fixed point: a periodic oscillation.
    Oscillatory,
    /// Oscillation cannot continue (restart gap failed or a queue emptied);
    /// the path converges to the rest point.
    StationaryConvergent,
    /// The iteration budget ran out before either outcome.
    Undetermined,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Oscillatory => "Oscillatory",
            Verdict::StationaryConvergent => "StationaryConvergent",
            Verdict::Undetermined => "Undetermined",
        };
        f.write_str(s)
    }
}

/// Why [`iterate_periodic`] stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// Successive cycle starts agreed within tolerance.
    FixedPoint,
    /// A half-cycle ended unable to restart (`−Δ(Σ₂) ≤ κ`).
    OscillationCeased,
    /// A queue emptied inside a half-cycle.
    QueueHitZero,
    /// The iteration budget was exhausted.
    MaxIterations,
}

/// A periodic orbit of the switching model, described at its switching
/// epochs. The orbit is symmetric: the second half mirrors the first, so
/// `T₃* = T₁*` and `T₄* = T₂*`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PeriodicEquilibrium {
    /// Cycle-start queue gap `Δ*`.
    pub delta_star: f64,
    /// Shared content at the activation→release switch `Σ₁`.
    pub z21_star: f64,
    /// Interval lengths `(T₁*, T₂*, T₃*, T₄*)`.
    pub t_star: [f64; 4],
    /// Full cycle length `2(T₁* + T₂*)`.
    pub period: f64,
    /// States at `Σ₀..Σ₄` (absent for the reduced jump-system map, which
    /// does not track full states). Without abandonment the queue levels
    /// grow from cycle to cycle; only the gap and sharing coordinates are
    /// periodic, and the states shown are those of the final computed cycle.
    pub states_at_switch: Option<[StateVector; 5]>,
}

/// Result of iterating a return map to classify the long-run behavior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationResult {
    /// Long-run classification.
    pub verdict: Verdict,
    /// The periodic orbit, when one was found.
    pub periodic: Option<PeriodicEquilibrium>,
    /// Half-cycle map applications performed.
    pub iterations_used: usize,
    /// Why the iteration stopped.
    pub stop_reason: StopReason,
    /// Cycle-start gaps, beginning with the initial one.
    pub delta_sequence: Vec<f64>,
    /// Diagnostic remarks (e.g. the gap entering the fragile near-threshold
    /// band before a confirmed failure).
    pub notes: Vec<String>,
}

/// Iterate the half-cycle return map from `x0` until it converges to a
/// fixed point, oscillation ceases, or `max_iter` is reached.
///
/// Convergence means successive cycle starts agree within `tol` in the gap
/// and shared-content coordinates; with abandonment (`θ > 0`) the queue
/// level must also settle (without abandonment queues grow linearly along a
/// periodic oscillation, so they are excluded from the test).
///
/// A start whose gap is already at or below `κ` cannot begin a cycle and
/// classifies as stationary-convergent immediately.
///
/// # Errors
///
/// Invalid parameters or a malformed start state.
pub fn iterate_periodic(
    x0: &StateVector,
    p: &ModelParams,
    tol: f64,
    max_iter: usize,
) -> Result<ClassificationResult, FluidError> {
    let report = validate_params(p, false);
    if !report.is_valid() {
        return Err(ModelError::InvalidParams(report.errors.join("; ")).into());
    }
    x0.well_formed()?;
    if !(tol > 0.0) {
        return Err(ModelError::Precondition(format!("tolerance must be positive, got {tol}")).into());
    }

    let mut q1 = x0.q1;
    let mut q2 = x0.q2;
    let mut z21_start = x0.z21.min(p.tau);
    let mut delta_sequence = vec![q2 - q1];
    let mut notes = Vec::new();
    // Width of the fragile band just above κ: a gap inside it typically
    // cannot rebuild enough shared content to restart (exact for the jump
    // approximation; a heads-up here, always confirmed by iterating).
    let fragile_band = -(1.0 - p.tau).ln();
    let mut warned_fragile = false;

    if q2 - q1 <= p.kappa {
        return Ok(ClassificationResult {
            verdict: Verdict::StationaryConvergent,
            periodic: None,
            iterations_used: 0,
            stop_reason: StopReason::OscillationCeased,
            delta_sequence,
            notes,
        });
    }

    for iter in 0..max_iter {
        let x = state_from_triple(q1, q2, z21_start, p);
        let rec = half_cycle_unchecked(&x, p)?;
        match rec.terminated_by {
            CycleTermination::QueueHitZero => {
                return Ok(ClassificationResult {
                    verdict: Verdict::StationaryConvergent,
                    periodic: None,
                    iterations_used: iter + 1,
                    stop_reason: StopReason::QueueHitZero,
                    delta_sequence,
                    notes,
                });
            }
            CycleTermination::OscillationFailed => {
                return Ok(ClassificationResult {
                    verdict: Verdict::StationaryConvergent,
                    periodic: None,
                    iterations_used: iter + 1,
                    stop_reason: StopReason::OscillationCeased,
                    delta_sequence,
                    notes,
                });
            }
            CycleTermination::Completed => {}
            CycleTermination::SlidingDetected => unreachable!("half cycles never emit sliding"),
        }
        let x2 = rec.states_at_switch[2];
        let (nq1, nq2, nz) = (x2.q2, x2.q1, x2.z12);
        let new_delta = nq2 - nq1;
        delta_sequence.push(new_delta);

        if !warned_fragile && new_delta > p.kappa && new_delta < p.kappa + fragile_band {
            warned_fragile = true;
            notes.push(format!(
                "cycle-start gap {new_delta:.6} entered the fragile band ({:.6}, {:.6}) where \
                 a restart typically fails; continuing to confirm",
                p.kappa,
                p.kappa + fragile_band
            ));
        }

        let old_delta = q2 - q1;
        let mut converged =
            (new_delta - old_delta).abs() <= tol && (nz - z21_start).abs() <= tol;
        if p.theta > 0.0 {
            converged = converged && (nq1 - q1).abs() <= tol * q1.abs().max(1.0);
        }
        q1 = nq1;
        q2 = nq2;
        z21_start = nz;

        if converged {
            let x_star = state_from_triple(q1, q2, z21_start, p);
            let cycle = full_cycle(&x_star, p)?;
            if cycle.terminated_by != CycleTermination::Completed {
                // Numerically on the edge of failure: not a credible orbit.
                return Ok(ClassificationResult {
                    verdict: Verdict::StationaryConvergent,
                    periodic: None,
                    iterations_used: iter + 1,
                    stop_reason: StopReason::OscillationCeased,
                    delta_sequence,
                    notes,
                });
            }
            let t1 = cycle.t1.expect("completed cycle has T1");
            let t2 = cycle.t2.expect("completed cycle has T2");
            let t3 = cycle.t3.expect("completed cycle has T3");
            let t4 = cycle.t4.expect("completed cycle has T4");
            let states: [StateVector; 5] = [
                cycle.states_at_switch[0],
                cycle.states_at_switch[1],
                cycle.states_at_switch[2],
                cycle.states_at_switch[3],
                cycle.states_at_switch[4],
            ];
            return Ok(ClassificationResult {
                verdict: Verdict::Oscillatory,
                periodic: Some(PeriodicEquilibrium {
                    delta_star: q2 - q1,
                    z21_star: states[1].z21,
                    t_star: [t1, t2, t3, t4],
                    period: t1 + t2 + t3 + t4,
                    states_at_switch: Some(states),
                }),
                iterations_used: iter + 1,
                stop_reason: StopReason::FixedPoint,
                delta_sequence,
                notes,
            });
        }
    }

    Ok(ClassificationResult {
        verdict: Verdict::Undetermined,
        periodic: None,
        iterations_used: max_iter,
        stop_reason: StopReason::MaxIterations,
        delta_sequence,
        notes,
    })
}

// ---------------------------------------------------------------------------
// Interval certificate
// ---------------------------------------------------------------------------

/// A rigorous worst-case certificate that every cycle start in a box keeps
/// oscillating forever.
///
/// The box is `Δ(0) ∈ [delta_bounds.0, delta_bounds.1]`, `q₁(0) ≥ q1_lower`,
/// `z₂₁(0) ∈ [0, τ)`, `z₁₂(0) = τ`, pools full. The certificate propagates
/// interval bounds through one half-cycle; `verdict` is true when
///
/// * the release interval is guaranteed nonempty (`release_condition`),
/// * the helped queue provably stays positive (`queue_condition`) and its
///   end level re-enters the box (`queue_invariant`),
/// * the next start content is provably below `τ` (`release_next_condition`),
/// * and the next gap interval lands inside the box (`delta_within_box`),
///
/// which by induction traps the orbit in the box for all time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OscillationCertificate {
    /// Parameters certified.
    pub params: ModelParams,
    /// Input gap box `[Δ_L, Δ_U]`.
    pub delta_bounds: (f64, f64),
    /// Input queue floor.
    pub q1_lower: f64,
    /// Gap-drain time bounds `[T₁ᴸ, T₁ᵁ]` over the box.
    pub t1_bounds: (f64, f64),
    /// Shared-content bounds at `Σ₁`.
    pub z21_sigma1_bounds: (f64, f64),
    /// Release-time bounds `[T₂ᴸ, T₂ᵁ]`.
    pub t2_bounds: (f64, f64),
    /// Stale reverse-content bounds at `Σ₁`.
    pub z12_sigma1_bounds: (f64, f64),
    /// Next cycle's start-content bounds (`z₁₂` at `Σ₂`).
    pub z12_sigma2_bounds: (f64, f64),
    /// Bounds on the release-interval forcing amplitude
    /// `A = (1−μ)(z₁₂(Σ₁) − z₂₁(Σ₁))`.
    pub a_bounds: (f64, f64),
    /// Coarse parameter-only amplitude bound `(1−μ)(τ − 1)`.
    pub a_u_const: f64,
    /// `z₂₁(Σ₁)` provably exceeds `τ`: the release interval is nonempty.
    pub release_condition: bool,
    /// Worst-case helped-queue level at `Σ₁`.
    pub q1_sigma1_lower: f64,
    /// The helped queue's lower envelope stays positive through the release
    /// interval.
    pub queue_condition: bool,
    /// Worst-case helped-queue level at `Σ₂` (the next start's far queue).
    pub q1_next_lower: f64,
    /// `q1_next_lower ≥ q1_lower`: the queue floor re-enters the box.
    pub queue_invariant: bool,
    /// Rigorous bounds on the next cycle-start gap `−Δ(Σ₂)`.
    pub delta_next_bounds: (f64, f64),
    /// The next-gap interval lies inside the input box.
    pub delta_within_box: bool,
    /// The next start content is provably below `τ`.
    pub release_next_condition: bool,
    /// Coarse closed-form lower estimate of the next gap, using only the
    /// parameter-level amplitude bound (quotable without the box bounds).
    pub delta_l_estimate: f64,
    /// All conditions hold: every start in the box oscillates forever.
    pub verdict: bool,
    /// Nested refinements: the image gap interval re-fed through the bound
    /// map, narrowing toward the periodic gap when the map contracts.
    pub nested_bounds_trace: Vec<(f64, f64)>,
}

/// Worst-case bound data for one half-cycle from a gap box and queue floor.
struct HalfCycleBounds {
    t1: (f64, f64),
    z21_sigma1: (f64, f64),
    t2: (f64, f64),
    z12_sigma1: (f64, f64),
    z12_sigma2: (f64, f64),
    a: (f64, f64),
    q1_sigma1_lower: f64,
    q1_next_lower: f64,
    queue_condition: bool,
    release_condition: bool,
    delta_next: (f64, f64),
}

/// The unimodal release-interval response `φ(t) = (e^{−θt} − e^{−μt})/(μ−θ)`
/// extremized over `[lo, hi]` (peak at `log(μ/θ)/(μ−θ)`, or unbounded
/// increase when `θ = 0`).
fn phi_range(lo: f64, hi: f64, p: &ModelParams) -> (f64, f64) {
    let phi = |t: f64| exp_decay_quotient(p.theta, p.mu, t);
    let at_lo = phi(lo);
    let at_hi = phi(hi);
    if p.theta == 0.0 {
        // Strictly increasing.
        return (at_lo, at_hi);
    }
    let peak = (p.mu / p.theta).ln() / (p.mu - p.theta);
    if peak > lo && peak < hi {
        (at_lo.min(at_hi), phi(peak))
    } else {
        (at_lo.min(at_hi), at_lo.max(at_hi))
    }
}

/// Worst-case helped-queue level at `Σ₁` for a start level `q1_0`, with the
/// drain time ranging over `[t1_lo, t1_hi]`. The no-service flow moves the
/// queue monotonically toward `λ/θ` (for `θ = 0` it grows linearly), so the
/// minimum sits at an endpoint.
fn q1_sigma1_lower_bound(q1_0: f64, t1_lo: f64, t1_hi: f64, p: &ModelParams) -> f64 {
    let at = |t: f64| {
        if p.theta > 0.0 {
            let cap = p.lambda / p.theta;
            cap - (cap - q1_0) * (-p.theta * t).exp()
        } else {
            q1_0 + p.lambda * t
        }
    };
    at(t1_lo).min(at(t1_hi))
}

fn half_cycle_bounds(
    delta: (f64, f64),
    q1_lower: f64,
    p: &ModelParams,
) -> HalfCycleBounds {
    let (t1_lo, _) = t1_bracket(delta.0, p);
    let (_, t1_hi) = t1_bracket(delta.1, p);

    // Shared content grows as 1 − (1 − z₂₁(0)) e^{−t} with z₂₁(0) ∈ [0, τ).
    let z21_lo = 1.0 - (-t1_lo).exp();
    let z21_hi = 1.0 - (1.0 - p.tau) * (-t1_hi).exp();
    let release_condition = z21_lo > p.tau;

    let t2_lo = if z21_lo > p.tau { (z21_lo / p.tau).ln() / p.mu } else { 0.0 };
    let t2_hi = if z21_hi > p.tau { (z21_hi / p.tau).ln() / p.mu } else { 0.0 };

    // Stale reverse content: starts at τ, decays at μ for T₁ then T₂.
    let z12_s1_lo = p.tau * (-p.mu * t1_hi).exp();
    let z12_s1_hi = p.tau * (-p.mu * t1_lo).exp();
    let z12_s2_lo = p.tau * (-p.mu * (t1_hi + t2_hi)).exp();
    let z12_s2_hi = p.tau * (-p.mu * (t1_lo + t2_lo)).exp();

    let a_lo = (1.0 - p.mu) * (z12_s1_lo - z21_hi);
    let a_hi = (1.0 - p.mu) * (z12_s1_hi - z21_lo);

    // Helped queue: builds during the drain interval, then drains at worst
    // (1 − λ) (plus abandonment) with no sharing credit.
    let q1_s1_lower = q1_sigma1_lower_bound(q1_lower, t1_lo, t1_hi, p);
    let (served, drained) = if p.theta > 0.0 {
        let shrink = (-p.theta * t2_hi).exp();
        let loss = ((1.0 - p.lambda) / p.theta) * (1.0 - shrink);
        (q1_s1_lower * shrink, loss)
    } else {
        (q1_s1_lower, (1.0 - p.lambda) * t2_hi)
    };
    let q1_next_lower = served - drained;
    let queue_condition = q1_next_lower > 0.0;

    // Next gap −Δ(Σ₂) = −κ e^{−θT₂} + |A| φ(T₂), extremized over the box.
    let (phi_min, phi_max) = phi_range(t2_lo, t2_hi, p);
    let kappa_at = |t: f64| p.kappa * (-p.theta * t).exp();
    let next_lo = -kappa_at(t2_lo) + a_hi.abs().min(a_lo.abs()) * phi_min;
    let next_hi = -kappa_at(t2_hi) + a_lo.abs().max(a_hi.abs()) * phi_max;

    HalfCycleBounds {
        t1: (t1_lo, t1_hi),
        z21_sigma1: (z21_lo, z21_hi),
        t2: (t2_lo, t2_hi),
        z12_sigma1: (z12_s1_lo, z12_s1_hi),
        z12_sigma2: (z12_s2_lo, z12_s2_hi),
        a: (a_lo, a_hi),
        q1_sigma1_lower: q1_s1_lower,
        q1_next_lower,
        queue_condition,
        release_condition,
        delta_next: (next_lo, next_hi),
    }
}

/// Build the worst-case oscillation certificate for the box
/// `Δ(0) ∈ [delta_lower, delta_upper]`, `q₁(0) ≥ q1_lower` (see
/// [`OscillationCertificate`]). A failed condition yields `verdict = false`,
/// not an error.
///
/// # Errors
///
/// Invalid parameters, a box with `delta_lower ≤ κ`, an inverted box, or a
/// nonpositive queue floor.
pub fn certify_endless(
    p: &ModelParams,
    delta_lower: f64,
    delta_upper: f64,
    q1_lower: f64,
) -> Result<OscillationCertificate, FluidError> {
    let report = validate_params(p, false);
    if !report.is_valid() {
        return Err(ModelError::InvalidParams(report.errors.join("; ")).into());
    }
    if delta_lower <= p.kappa {
        return Err(ModelError::Precondition(format!(
            "box lower gap {delta_lower} must exceed kappa = {}",
            p.kappa
        ))
        .into());
    }
    if delta_upper < delta_lower {
        return Err(ModelError::Precondition(format!(
            "inverted gap box [{delta_lower}, {delta_upper}]"
        ))
        .into());
    }
    if q1_lower <= 0.0 {
        return Err(ModelError::Precondition(format!(
            "queue floor {q1_lower} must be positive"
        ))
        .into());
    }

    let b = half_cycle_bounds((delta_lower, delta_upper), q1_lower, p);
    let queue_invariant = b.queue_condition && b.q1_next_lower >= q1_lower;
    let release_next_condition = b.z12_sigma2.1 < p.tau;
    let delta_within_box =
        b.delta_next.0 >= delta_lower && b.delta_next.1 <= delta_upper && b.delta_next.0 > p.kappa;
    let verdict = b.release_condition
        && b.queue_condition
        && queue_invariant
        && release_next_condition
        && delta_within_box;

    // Coarse parameter-only estimate of the next gap's lower end: amplitude
    // bounded by (1−μ)(1−τ) and the response taken at the latest release.
    let a_u_const = (1.0 - p.mu) * (p.tau - 1.0);
    let delta_l_estimate = p.kappa * (-p.theta * b.t2.1).exp()
        + a_u_const.abs() * exp_decay_quotient(p.theta, p.mu, b.t2.1);

    // Nested refinements of the gap interval (queue floor held fixed).
    let mut nested_bounds_trace = Vec::new();
    if verdict {
        let mut cur = b.delta_next;
        nested_bounds_trace.push(cur);
        for _ in 0..11 {
            let nb = half_cycle_bounds(cur, q1_lower, p);
            if !(nb.release_condition && nb.delta_next.0 > p.kappa) {
                break;
            }
            cur = nb.delta_next;
            nested_bounds_trace.push(cur);
        }
    }

    Ok(OscillationCertificate {
        params: *p,
        delta_bounds: (delta_lower, delta_upper),
        q1_lower,
        t1_bounds: b.t1,
        z21_sigma1_bounds: b.z21_sigma1,
        t2_bounds: b.t2,
        z12_sigma1_bounds: b.z12_sigma1,
        z12_sigma2_bounds: b.z12_sigma2,
        a_bounds: b.a,
        a_u_const,
        release_condition: b.release_condition,
        q1_sigma1_lower: b.q1_sigma1_lower,
        queue_condition: b.queue_condition,
        q1_next_lower: b.q1_next_lower,
        queue_invariant,
        delta_next_bounds: b.delta_next,
        delta_within_box,
        release_next_condition,
        delta_l_estimate,
        verdict,
        nested_bounds_trace,
    })
}
