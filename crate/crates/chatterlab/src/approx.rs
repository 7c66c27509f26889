//! The reduced jump system: a piecewise-explicit stand-in for the switching
//! fluid model without abandonment.
//!
//! The reduction drops abandonment (`θ = 0`) and replaces the release switch
//! by a jump: when the shared content decays to the release threshold `τ`,
//! the leftover `τ` is zeroed instantly instead of decaying through a fourth
//! regime, so each half-cycle starts with both cross-contents exactly zero.
//! The payoff is a one-dimensional cycle map on the starting queue gap `Δ`:
//!
//! * [`solve_t1a`] — the activation interval length, the root of a single
//!   transcendental equation;
//! * [`t2a`] — the release interval length, in closed form;
//! * [`delta_map`] — the gap at the next half-cycle start;
//! * [`iterate_approx`] — fixed-point iteration of the map, classifying the
//!   long-run behavior (periodic oscillation vs. convergence to rest);
//! * [`contraction_rate`] — certified geometric/exponential convergence-rate
//!   constants on an explicit invariant interval;
//! * [`simulate_approx`] — the full six-coordinate jump path;
//! * [`heuristic_iterate`] — a further one-line shortcut replacing the
//!   transcendental root by its linear lower bound;
//! * [`throughput_l`] — the long-run per-pool throughput of the converged
//!   cycle and the congestion-collapse verdict.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{
    ClassificationResult, PeriodicEquilibrium, StopReason, Verdict,
};
use crate::fluid::{
    queue_served, queue_served_zero, CycleRecord, CycleTermination, FluidError, Trajectory,
    TrajectoryBuilder, TrajectoryHint,
};
use crate::model::{validate_params, ModelError, ModelParams, Phase, StateVector, MODEL_TOL};
use crate::numerics::newton_bisect;

/// Residual tolerance for the activation-time root.
const T1A_TOL: f64 = 1e-12;

/// Residual tolerance for the polished fixed point of the cycle map.
const FIXED_POINT_TOL: f64 = 1e-12;

/// Internal convergence tolerance for the one-line heuristic iteration.
const HEURISTIC_TOL: f64 = 1e-12;

/// Upper bound for the cycle-map image: every half-cycle starts with a gap
/// strictly below `(1−μ)(1−τ)/μ`, whatever the previous gap was.
pub fn delta_bound(p: &ModelParams) -> f64 {
    (1.0 - p.mu) * (1.0 - p.tau) / p.mu
}

/// Minimum excess over the trigger threshold `κ` that a cycle-start gap must
/// maintain for oscillation to continue: a start inside
/// `(κ, κ + epsilon_kappa)` cannot produce a valid next start.
pub fn epsilon_kappa(p: &ModelParams) -> f64 {
    -(1.0 - p.tau).ln()
}

fn require_above_threshold(delta: f64, p: &ModelParams) -> Result<(), FluidError> {
    if !(delta > p.kappa) {
        return Err(ModelError::Precondition(format!(
            "starting gap {delta} must exceed the trigger threshold {}",
            p.kappa
        ))
        .into());
    }
    Ok(())
}

fn require_valid_params(p: &ModelParams) -> Result<(), FluidError> {
    let report = validate_params(p, false);
    if !report.is_valid() {
        return Err(ModelError::InvalidParams(report.errors.join("; ")).into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Holding times and the cycle map
// ---------------------------------------------------------------------------

/// Activation interval length for a half-cycle starting with gap `delta`:
/// the unique positive root of
///
/// `T = (Δ − 1 + μ − κ)/(1+μ) + ((1−μ)/(1+μ)) e^{−T}`,
///
/// solved by bracketed Newton to residual below `10⁻¹²`. The root is
/// strictly increasing in `delta` and tends to `0` as `delta ↓ κ`.
///
/// # Errors
///
/// Precondition error when `delta ≤ κ`.
pub fn solve_t1a(delta: f64, p: &ModelParams) -> Result<f64, FluidError> {
    require_above_threshold(delta, p)?;
    let c = (delta - 1.0 + p.mu - p.kappa) / (1.0 + p.mu);
    let d = (1.0 - p.mu) / (1.0 + p.mu);
    // g is strictly decreasing with g(lo) > 0 > g(hi) on the bracket below.
    let g = |t: f64| c + d * (-t).exp() - t;
    let dg = |t: f64| -d * (-t).exp() - 1.0;
    let (lo, hi) = if c > 0.0 {
        (c, c + 1.0)
    } else {
        (0.0, delta / (1.0 + p.mu) + 1.0)
    };
    Ok(newton_bisect(g, dg, lo, hi, T1A_TOL)?)
}

/// Derivative of [`solve_t1a`] with respect to the starting gap:
/// `dT/dΔ = 1/((1+μ) + (1−μ) e^{−T})`, by implicit differentiation.
fn dt1a_ddelta(t1a: f64, p: &ModelParams) -> f64 {
    1.0 / ((1.0 + p.mu) + (1.0 - p.mu) * (-t1a).exp())
}

/// Release interval length given the activation length `t1a`: the shared
/// content peaks at `1 − e^{−t1a}` and then decays at rate `μ`, so it
/// reaches the release threshold after `log((1 − e^{−t1a})/τ)/μ` — or
/// immediately (`0`) when the peak is already at or below `τ`.
pub fn t2a(t1a: f64, p: &ModelParams) -> f64 {
    let z = -(-t1a).exp_m1();
    if z > p.tau {
        (z / p.tau).ln() / p.mu
    } else {
        0.0
    }
}

/// One half-cycle of the jump system in reduced coordinates; the record kept
/// per iteration by the classification and simulation drivers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ApproxCycleState {
    /// Queue gap at the half-cycle start (cross-contents exactly zero there).
    pub delta: f64,
    /// Activation interval length.
    pub t1a: f64,
    /// Release interval length (zero when the shared peak never exceeds `τ`).
    pub t2a: f64,
    /// Shared content at the activation→release switch, `1 − e^{−t1a}`.
    pub z21_sigma1: f64,
    /// Reduced state `(Δ, z₁₂, z₂₁)` at the half-cycle end, just before the
    /// release jump zeroes the leftover `τ`.
    pub state3: [f64; 3],
}

impl ApproxCycleState {
    /// Starting gap of the next (mirrored) half-cycle: `−Δ(Σ₂)`.
    pub fn next_delta(&self) -> f64 {
        -self.state3[0]
    }
}

/// Evaluate one half-cycle of the jump system from a starting gap.
///
/// # Errors
///
/// Precondition error when `delta ≤ κ`.
pub fn half_cycle_approx(delta: f64, p: &ModelParams) -> Result<ApproxCycleState, FluidError> {
    let t1a = solve_t1a(delta, p)?;
    let z1 = -(-t1a).exp_m1();
    let t2 = t2a(t1a, p);
    let leftover = if t2 > 0.0 { p.tau } else { z1 };
    let delta_end = p.kappa - (1.0 - p.mu) / p.mu * (z1 - leftover);
    Ok(ApproxCycleState {
        delta,
        t1a,
        t2a: t2,
        z21_sigma1: z1,
        state3: [delta_end, 0.0, leftover],
    })
}

/// The one-dimensional cycle map: the gap at the next half-cycle start,
///
/// `Δ′ = ((1−μ)/μ)(1 − e^{−T₁ᵃ(Δ)} − τ) − κ`.
///
/// The image is always below [`delta_bound`]; a value at or below `κ` means
/// oscillation stops. Whenever `Δ` lies inside `(κ, κ + epsilon_kappa)` the
/// image is negative.
///
/// # Errors
///
/// Precondition error when `delta ≤ κ`.
pub fn delta_map(delta: f64, p: &ModelParams) -> Result<f64, FluidError> {
    let t1a = solve_t1a(delta, p)?;
    Ok((1.0 - p.mu) / p.mu * (1.0 - (-t1a).exp() - p.tau) - p.kappa)
}

/// Derivative of [`delta_map`]:
/// `dΔ′/dΔ = ((1−μ)/μ) e^{−T₁ᵃ} · dT₁ᵃ/dΔ`.
fn delta_map_derivative(t1a: f64, p: &ModelParams) -> f64 {
    (1.0 - p.mu) / p.mu * (-t1a).exp() * dt1a_ddelta(t1a, p)
}

// ---------------------------------------------------------------------------
// Fixed-point iteration
// ---------------------------------------------------------------------------

/// Iterate the cycle map [`delta_map`] from `delta0` until successive gaps
/// agree within `tol`, an iterate falls to or below `κ`, or `max_iter` map
/// applications have been spent.
///
/// The iterates are monotone when they approach a fixed point, so after
/// three consecutive same-sign differences with stable ratios the driver
/// applies one guarded secant (Aitken) jump; a converged gap is polished by
/// Newton on `delta_map(Δ) − Δ` so the reported fixed point has residual
/// below `10⁻¹²`. Accelerated jumps appear in the returned gap sequence and
/// are flagged in the notes.
///
/// # Errors
///
/// Invalid parameters or `delta0 ≤ κ`.
pub fn iterate_approx(
    delta0: f64,
    p: &ModelParams,
    tol: f64,
    max_iter: usize,
) -> Result<ClassificationResult, FluidError> {
    require_valid_params(p)?;
    require_above_threshold(delta0, p)?;
    if !(tol > 0.0) || max_iter == 0 {
        return Err(ModelError::Precondition(format!(
            "tolerance {tol} must be positive and max_iter {max_iter} nonzero"
        ))
        .into());
    }

    let band_hi = p.kappa + epsilon_kappa(p);
    let mut notes = Vec::new();
    let mut sequence = vec![delta0];
    let mut cur = delta0;
    // Differences of the last few iterates, for the acceleration guard.
    let mut diffs: Vec<f64> = Vec::new();

    let mut converged = false;
    while sequence.len() <= max_iter {
        if cur > p.kappa && cur < band_hi {
            notes.push(format!(
                "cycle-start gap {cur} lies within the fragile band ({}, {band_hi}); \
                 the next half-cycle cannot sustain sharing",
                p.kappa
            ));
        }
        let next = delta_map(cur, p)?;
        sequence.push(next);
        if next <= p.kappa {
            return Ok(ClassificationResult {
                verdict: Verdict::StationaryConvergent,
                periodic: None,
                iterations_used: sequence.len() - 1,
                stop_reason: StopReason::OscillationCeased,
                delta_sequence: sequence,
                notes,
            });
        }
        if (next - cur).abs() < tol {
            cur = next;
            converged = true;
            break;
        }
        diffs.push(next - cur);
        cur = next;

        // Guarded secant acceleration: require three same-sign differences
        // whose ratios are strictly below one half and agree within 10%,
        // then take the Aitken extrapolant if it stays inside the
        // admissible gap range. Orbits sliding toward the threshold cliff
        // have difference ratios climbing toward (and past) 1, so the
        // sub-half requirement keeps the extrapolation away from them.
        if diffs.len() >= 3 {
            let n = diffs.len();
            let (d1, d2, d3) = (diffs[n - 3], diffs[n - 2], diffs[n - 1]);
            let same_sign = d1.signum() == d2.signum() && d2.signum() == d3.signum();
            let r1 = d2 / d1;
            let r2 = d3 / d2;
            let shrinking = r1 > 0.0 && r1 < 0.5 && r2 > 0.0 && r2 < 0.5;
            let stable = (r2 - r1).abs() <= 0.1 * r2.abs().max(1e-300);
            if same_sign && shrinking && stable {
                let accel = cur + d3 * r2 / (1.0 - r2);
                if accel > p.kappa && accel < delta_bound(p) {
                    notes.push(format!(
                        "secant acceleration applied after iteration {}",
                        sequence.len() - 1
                    ));
                    sequence.push(accel);
                    cur = accel;
                    diffs.clear();
                }
            }
        }
    }

    if !converged {
        return Ok(ClassificationResult {
            verdict: Verdict::Undetermined,
            periodic: None,
            iterations_used: sequence.len() - 1,
            stop_reason: StopReason::MaxIterations,
            delta_sequence: sequence,
            notes,
        });
    }

    // Newton polish of the fixed point.
    let mut star = cur;
    for _ in 0..20 {
        let t1a = solve_t1a(star, p)?;
        let residual = (1.0 - p.mu) / p.mu * (1.0 - (-t1a).exp() - p.tau) - p.kappa - star;
        if residual.abs() < FIXED_POINT_TOL {
            break;
        }
        let slope = delta_map_derivative(t1a, p) - 1.0;
        let candidate = star - residual / slope;
        if !(candidate > p.kappa) || !candidate.is_finite() {
            break;
        }
        star = candidate;
    }

    let t1s = solve_t1a(star, p)?;
    let t2s = t2a(t1s, p);
    let z21_star = -(-t1s).exp_m1();
    Ok(ClassificationResult {
        verdict: Verdict::Oscillatory,
        periodic: Some(PeriodicEquilibrium {
            delta_star: star,
            z21_star,
            t_star: [t1s, t2s, t1s, t2s],
            period: 2.0 * (t1s + t2s),
            states_at_switch: None,
        }),
        iterations_used: sequence.len() - 1,
        stop_reason: StopReason::FixedPoint,
        delta_sequence: sequence,
        notes,
    })
}

// ---------------------------------------------------------------------------
// Oscillation range and contraction certificates
// ---------------------------------------------------------------------------

/// Roots of the quadratic `μ² − (2+κ−τ)μ + (1−τ) = 0`, the boundary of the
/// sharing rates for which the invariant-interval construction below can
/// work. The roots satisfy `0 < μ₁ < 1 < μ₂` and `μ₁·μ₂ = 1−τ`; the smaller
/// root is computed from the larger via that product to avoid cancellation.
pub fn mu_roots(kappa: f64, tau: f64) -> (f64, f64) {
    let disc = ((kappa - tau) * (kappa - tau) + 4.0 * kappa).sqrt();
    let mu2 = (2.0 + kappa - tau + disc) / 2.0;
    ((1.0 - tau) / mu2, mu2)
}

/// Certified convergence-rate constants for the cycle map on an explicit
/// invariant interval.
///
/// For a margin `c ∈ (0, 1−τ)` the interval is
/// `S = [Δᴹ − δ, Δᴹ]` with `Δᴹ = (1−μ)(1−τ)/μ` (the map's range bound) and
/// `δ = ((1−μ)/μ)c + κ`. When `S` sits strictly above the degenerate point
/// `1 − μ + κ`, the map is Lipschitz on `S` with constant
/// `ρ = K·((1−μ)/μ)·e^{(1−μ+κ)/(1+μ)}`, where `K` bounds the derivative of
/// `Δ ↦ e^{−Δ/(1+μ)}` on `S`. `ρ < 1` certifies a geometric rate per cycle
/// and an exponential rate `β` in continuous time, because no cycle lasts
/// longer than `2R`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateConstants {
    /// Smaller root of [`mu_roots`]: sharing rates must stay below it.
    pub mu1: f64,
    /// Larger root of [`mu_roots`].
    pub mu2: f64,
    /// The sharing rate at which the construction is instantiated (`p.mu`).
    pub mu_star: f64,
    /// Largest sharing rate (same margin `c`) at which the interval stays
    /// valid and the map still contracts; `None` when no rate qualifies.
    pub mu_star_star: Option<f64>,
    /// The chosen margin `c`.
    pub c: f64,
    /// Interval half-width `δ = ((1−μ)/μ)c + κ`.
    pub delta_mu: f64,
    /// The invariant interval `S = [Δᴹ − δ, Δᴹ]`.
    pub s_mu: (f64, f64),
    /// Derivative bound `K` of `Δ ↦ e^{−Δ/(1+μ)}` on `S`.
    pub lipschitz_k: f64,
    /// Contraction factor of the cycle map on `S`.
    pub rho: f64,
    /// Amplitude constant `δ/(1−ρ)` of the exponential-stability bound;
    /// `None` when uncertified.
    pub vartheta: Option<f64>,
    /// Exponential rate `−log(ρ)/(2R)` in continuous time; `None` when
    /// uncertified.
    pub beta: Option<f64>,
    /// Upper bound on any half-cycle length (full cycles last at most `2R`).
    pub r_bound: f64,
    /// Minimum excess over `κ` sustained by endless oscillation,
    /// `−log(1−τ)`.
    pub epsilon_kappa: f64,
    /// Image of the interval endpoints under the cycle map (the map is
    /// increasing, so this is the exact image interval); `None` when the
    /// interval is invalid.
    pub map_image: Option<(f64, f64)>,
    /// Whether the map sends `S` into itself.
    pub map_into_itself: bool,
    /// `true` when the interval is valid, maps into itself, and `ρ < 1`.
    pub certified: bool,
}

/// S-interval lower endpoint for sharing rate `m` and margin `c`:
/// `((1−m)/m)(1−τ−c) − κ`.
fn s_lower(m: f64, c: f64, p: &ModelParams) -> f64 {
    (1.0 - m) / m * (1.0 - p.tau - c) - p.kappa
}

/// Contraction factor at sharing rate `m` for margin `c`.
fn rho_at(m: f64, c: f64, p: &ModelParams) -> f64 {
    let k = 1.0 / (1.0 + m) * (-s_lower(m, c, p) / (1.0 + m)).exp();
    (1.0 - m) / m * ((1.0 - m + p.kappa) / (1.0 + m)).exp() * k
}

/// Whether the construction is valid and contracting at sharing rate `m`.
fn certifiable_at(m: f64, c: f64, p: &ModelParams) -> bool {
    if !(0.0 < m && m < 1.0) {
        return false;
    }
    // The interval must sit strictly above the degenerate point, and the
    // near-threshold guard must leave room below `1 − m`.
    if s_lower(m, c, p) <= 1.0 - m + p.kappa {
        return false;
    }
    if 1.0 - m <= -(1.0 - p.tau).ln() {
        return false;
    }
    rho_at(m, c, p) < 1.0
}

/// Compute the certified convergence-rate constants for `p` with margin `c`.
///
/// An invalid interval (sharing rate too large for the margin) or `ρ ≥ 1`
/// yields `certified = false` without an error; only a margin outside
/// `(0, 1−τ)` or invalid parameters are errors.
///
/// # Errors
///
/// Invalid parameters, or `c ∉ (0, 1−τ)`.
pub fn contraction_rate(p: &ModelParams, c: f64) -> Result<RateConstants, FluidError> {
    require_valid_params(p)?;
    if !(c > 0.0 && c < 1.0 - p.tau) {
        return Err(ModelError::Precondition(format!(
            "margin {c} must lie in (0, 1 − τ) = (0, {})",
            1.0 - p.tau
        ))
        .into());
    }

    let (mu1, mu2) = mu_roots(p.kappa, p.tau);
    let mu = p.mu;
    let delta_mu = (1.0 - mu) / mu * c + p.kappa;
    let d_top = delta_bound(p);
    let s_lo = d_top - delta_mu;
    let s_hi = d_top;
    let s_valid = s_lo > 1.0 - mu + p.kappa && 1.0 - mu > -(1.0 - p.tau).ln();

    let lipschitz_k = 1.0 / (1.0 + mu) * (-s_lo / (1.0 + mu)).exp();
    let rho = (1.0 - mu) / mu * ((1.0 - mu + p.kappa) / (1.0 + mu)).exp() * lipschitz_k;
    let r_bound = (d_top - 1.0 + mu - p.kappa) / (1.0 + mu) + 1.0 + (1.0 / p.tau).ln() / mu;

    let (map_image, map_into_itself) = if s_lo > p.kappa {
        let lo_img = delta_map(s_lo, p)?;
        let hi_img = delta_map(s_hi, p)?;
        (Some((lo_img, hi_img)), lo_img >= s_lo && hi_img <= s_hi)
    } else {
        (None, false)
    };

    let certified = s_valid && map_into_itself && rho < 1.0;
    let (beta, vartheta) = if certified {
        (
            Some(-rho.ln() / (2.0 * r_bound)),
            Some(delta_mu / (1.0 - rho)),
        )
    } else {
        (None, None)
    };

    // Threshold search: the set of certifiable rates is a lower interval in
    // practice (validity tightens and ρ grows as the rate rises), so locate
    // its upper edge by bisection.
    let mu_star_star = {
        let lo0 = 1e-8;
        let hi0 = mu1 - 1e-12;
        if certifiable_at(hi0, c, p) {
            Some(hi0)
        } else if !certifiable_at(lo0, c, p) {
            None
        } else {
            let (mut lo, mut hi) = (lo0, hi0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if certifiable_at(mid, c, p) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Some(0.5 * (lo + hi))
        }
    };

    Ok(RateConstants {
        mu1,
        mu2,
        mu_star: mu,
        mu_star_star,
        c,
        delta_mu,
        s_mu: (s_lo, s_hi),
        lipschitz_k,
        rho,
        vartheta,
        beta,
        r_bound,
        epsilon_kappa: epsilon_kappa(p),
        map_image,
        map_into_itself,
        certified,
    })
}

// ---------------------------------------------------------------------------
// Full six-coordinate jump path
// ---------------------------------------------------------------------------

/// Simulate the jump system from `x0` for `horizon` time units, sampling on
/// a uniform `sample_dt` grid plus every switching epoch.
///
/// `x0` must carry zero cross-contents (the jump system's half-cycles start
/// and end there) and nonnegative queues. Abandonment is always absent in
/// this system: `p.theta` is ignored. A start with `|Δ(0)| > κ` runs
/// half-cycles (activation, then release) joined by mirroring; at each
/// release end the leftover shared content `τ` jumps to zero (recorded in
/// [`Trajectory::jumps`]; the gap is continuous across the jump, and
/// `states_at_switch` keeps the pre-jump state). The run stops early when a
/// queue empties mid-cycle ([`TrajectoryHint::QueueHitZero`]). When the gap
/// at a half-cycle end cannot restart the mirrored half — or `|Δ(0)| ≤ κ`
/// from the outset — both pools relax independently toward the rest point
/// `(0, 0, λ, 0, 0, λ)` ([`TrajectoryHint::RelaxingToStationary`]).
///
/// # Errors
///
/// Invalid parameters, a malformed `x0` (nonzero cross-content, negative
/// queue), or a nonpositive horizon/step.
pub fn simulate_approx(
    x0: &StateVector,
    p: &ModelParams,
    horizon: f64,
    sample_dt: f64,
) -> Result<Trajectory, FluidError> {
    require_valid_params(p)?;
    if x0.z12.abs() > MODEL_TOL || x0.z21.abs() > MODEL_TOL {
        return Err(ModelError::InvalidState(format!(
            "jump-system starts need zero cross-contents, got z12 = {}, z21 = {}",
            x0.z12, x0.z21
        ))
        .into());
    }
    if x0.q1 < 0.0 || x0.q2 < 0.0 {
        return Err(ModelError::InvalidState(format!(
            "negative queue content: q1 = {}, q2 = {}",
            x0.q1, x0.q2
        ))
        .into());
    }
    x0.well_formed()?;
    if horizon < 0.0 || !horizon.is_finite() {
        return Err(ModelError::Precondition(format!("invalid horizon {horizon}")).into());
    }
    if sample_dt <= 0.0 || !sample_dt.is_finite() {
        return Err(ModelError::Precondition(format!("invalid sample step {sample_dt}")).into());
    }

    // Work without abandonment regardless of the requested θ.
    let p0 = ModelParams { theta: 0.0, ..*p };
    let p = &p0;

    // Snap the tiny tolerated cross-content to exactly zero.
    let mut x = *x0;
    x.z11 += x.z21;
    x.z21 = 0.0;
    x.z22 += x.z12;
    x.z12 = 0.0;

    let mut builder = TrajectoryBuilder::new(sample_dt);
    let mut records: Vec<CycleRecord> = Vec::new();
    let mut pending_half: Option<CycleRecord> = None;
    let mut t = 0.0;

    let mut mirrored = if x.delta() > p.kappa && x.pools_full() {
        Some(false)
    } else if -x.delta() > p.kappa && x.pools_full() {
        Some(true)
    } else {
        None
    };

    if horizon == 0.0 {
        let phase = if mirrored == Some(false) {
            Phase::I1
        } else if mirrored == Some(true) {
            Phase::I3
        } else {
            Phase::Relaxation
        };
        return Ok(builder.finish(0.0, x, phase, records, TrajectoryHint::Cycling));
    }

    // Merge one canonical half (starting at absolute `start`) into the
    // pending full-cycle record, mirroring states back when needed.
    fn absorb_half(
        records: &mut Vec<CycleRecord>,
        pending: &mut Option<CycleRecord>,
        half: CycleRecord,
        start: f64,
        was_mirrored: bool,
    ) {
        let to_actual = |mut h: CycleRecord, flip: bool, start: f64| {
            h.start_time = start;
            if flip {
                for s in &mut h.states_at_switch {
                    *s = s.mirror();
                }
                if let Some(s) = h.state_at_sigma_q.as_mut() {
                    *s = s.mirror();
                }
            }
            h
        };
        match pending.take() {
            None => {
                let actual = to_actual(half, was_mirrored, start);
                if actual.terminated_by == CycleTermination::Completed {
                    *pending = Some(actual);
                } else {
                    records.push(actual);
                }
            }
            Some(mut first) => {
                let actual = to_actual(half, was_mirrored, start);
                let sigma2 = first.sigma2.expect("pending half is completed");
                first.t3 = actual.t1;
                first.sigma3 = actual.sigma1.map(|s| sigma2 + s);
                if let Some(s) = actual.states_at_switch.get(1) {
                    first.states_at_switch.push(*s);
                }
                match actual.terminated_by {
                    CycleTermination::QueueHitZero => {
                        first.sigma_q = actual.sigma_q.map(|s| sigma2 + s);
                        first.state_at_sigma_q = actual.state_at_sigma_q;
                        first.terminated_by = CycleTermination::QueueHitZero;
                    }
                    term => {
                        first.t4 = actual.t2;
                        first.sigma4 = actual.sigma2.map(|s| sigma2 + s);
                        if let Some(s) = actual.states_at_switch.get(2) {
                            first.states_at_switch.push(*s);
                        }
                        first.terminated_by = term;
                    }
                }
                records.push(first);
            }
        }
    }

    'cycling: while let Some(flip) = mirrored {
        // Canonical view of the current state: gap above threshold, pool 1
        // activating toward class 2.
        let xc = if flip { x.mirror() } else { x };
        let delta0 = xc.delta();
        let q1_0 = xc.q1;

        let cycle = half_cycle_approx(delta0, p)?;
        let t1 = cycle.t1a;
        let z1 = cycle.z21_sigma1;
        let (phase_a, phase_b) = if flip {
            (Phase::I3, Phase::I4)
        } else {
            (Phase::I1, Phase::I2)
        };

        // Activation: pool 1 converts to class 2 while queue 1 is unserved.
        // Queue 2 stays above `q1 + κ > 0` throughout, so no queue can empty
        // here.
        let eval_i1 = |s: f64| {
            let z21 = -(-s).exp_m1();
            let q1 = q1_0 + p.lambda * s;
            let delta = delta0 - (1.0 + p.mu) * s + (1.0 - p.mu) * (-s).exp_m1();
            let state = StateVector {
                q1,
                q2: q1 + delta,
                z11: 1.0 - z21,
                z12: 0.0,
                z21,
                z22: 1.0,
            };
            if flip {
                state.mirror()
            } else {
                state
            }
        };
        if t + t1 >= horizon {
            builder.segment(t, horizon, phase_a, |s| eval_i1(s));
            let mut half = CycleRecord {
                start_time: 0.0,
                t1: None,
                t2: None,
                t3: None,
                t4: None,
                sigma1: None,
                sigma2: None,
                sigma3: None,
                sigma4: None,
                states_at_switch: vec![xc],
                sigma_q: None,
                state_at_sigma_q: None,
                terminated_by: CycleTermination::Completed,
            };
            half.states_at_switch[0] = xc;
            absorb_half(&mut records, &mut pending_half, half, t, flip);
            if let Some(first) = pending_half.take() {
                records.push(first);
            }
            return Ok(builder.finish(horizon, eval_i1(horizon - t), phase_a, records, TrajectoryHint::Cycling));
        }
        builder.segment(t, t + t1, phase_a, |s| eval_i1(s));
        let x_sigma1 = eval_i1(t1);
        let xc_sigma1 = if flip { x_sigma1.mirror() } else { x_sigma1 };

        let mut half = CycleRecord {
            start_time: 0.0,
            t1: Some(t1),
            t2: None,
            t3: None,
            t4: None,
            sigma1: Some(t1),
            sigma2: None,
            sigma3: None,
            sigma4: None,
            states_at_switch: vec![xc, xc_sigma1],
            sigma_q: None,
            state_at_sigma_q: None,
            terminated_by: CycleTermination::Completed,
        };

        // Release: the shared content decays; queue 2 loses ground at rate
        // `1 − λ` and queue 1 first recovers, then drains. Either may empty.
        let q1_s1 = xc_sigma1.q1;
        let q2_s1 = xc_sigma1.q2;
        let t2 = cycle.t2a;
        let eval_i2 = |s: f64| {
            let z21 = z1 * (-p.mu * s).exp();
            let state = StateVector {
                q1: queue_served(q1_s1, z1, s, p).max(0.0),
                q2: queue_served(q2_s1, 0.0, s, p).max(0.0),
                z11: 1.0 - z21,
                z12: 0.0,
                z21,
                z22: 1.0,
            };
            if flip {
                state.mirror()
            } else {
                state
            }
        };

        if t2 == 0.0 {
            // The shared peak never exceeded the release threshold: the next
            // gap would be `−κ` at best — oscillation ends here.
            half.t2 = Some(0.0);
            half.sigma2 = Some(t1);
            half.states_at_switch.push(xc_sigma1);
            half.terminated_by = CycleTermination::OscillationFailed;
            absorb_half(&mut records, &mut pending_half, half, t, flip);
            // The leftover shared content jumps to zero before relaxation.
            let left = x_sigma1;
            let mut right_c = xc_sigma1;
            right_c.z11 += right_c.z21;
            right_c.z21 = 0.0;
            let right = if flip { right_c.mirror() } else { right_c };
            builder.jump(t + t1, left, right, Phase::Relaxation);
            x = right;
            t += t1;
            break 'cycling;
        }

        let t2_capped = t2.min(horizon - (t + t1));
        let hit_q2 = queue_served_zero(q2_s1, 0.0, t2_capped, p)?;
        let hit_q1 = queue_served_zero(q1_s1, z1, t2_capped, p)?;
        let hit = match (hit_q1, hit_q2) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };

        if let Some(s_hit) = hit {
            builder.segment(t + t1, t + t1 + s_hit, phase_b, |s| eval_i2(s));
            half.sigma_q = Some(t1 + s_hit);
            let xq = eval_i2(s_hit);
            half.state_at_sigma_q = Some(if flip { xq.mirror() } else { xq });
            half.terminated_by = CycleTermination::QueueHitZero;
            absorb_half(&mut records, &mut pending_half, half, t, flip);
            if let Some(first) = pending_half.take() {
                records.push(first);
            }
            return Ok(builder.finish(
                t + t1 + s_hit,
                xq,
                phase_b,
                records,
                TrajectoryHint::QueueHitZero,
            ));
        }

        if t + t1 + t2 >= horizon {
            builder.segment(t + t1, horizon, phase_b, |s| eval_i2(s));
            absorb_half(&mut records, &mut pending_half, half, t, flip);
            if let Some(first) = pending_half.take() {
                records.push(first);
            }
            return Ok(builder.finish(
                horizon,
                eval_i2(horizon - t - t1),
                phase_b,
                records,
                TrajectoryHint::Cycling,
            ));
        }
        builder.segment(t + t1, t + t1 + t2, phase_b, |s| eval_i2(s));

        // Half-cycle end: snap the shared content to exactly `τ`, record the
        // pre-jump state, then jump the leftover to zero.
        let mut xc_sigma2 = {
            let raw = eval_i2(t2);
            let mut c = if flip { raw.mirror() } else { raw };
            c.z21 = p.tau;
            c.z11 = 1.0 - p.tau;
            c
        };
        xc_sigma2.q2 = xc_sigma2.q1 + cycle.state3[0];
        half.t2 = Some(t2);
        half.sigma2 = Some(t1 + t2);
        half.states_at_switch.push(xc_sigma2);

        let restart_gap = cycle.next_delta();
        let failed = restart_gap <= p.kappa;
        if failed {
            half.terminated_by = CycleTermination::OscillationFailed;
        }
        absorb_half(&mut records, &mut pending_half, half, t, flip);

        let mut right_c = xc_sigma2;
        right_c.z11 = 1.0;
        right_c.z21 = 0.0;
        let left = if flip { xc_sigma2.mirror() } else { xc_sigma2 };
        let right = if flip { right_c.mirror() } else { right_c };
        let next_phase = if failed {
            Phase::Relaxation
        } else if flip {
            Phase::I1
        } else {
            Phase::I3
        };
        builder.jump(t + t1 + t2, left, right, next_phase);

        x = right;
        t += t1 + t2;
        if failed {
            break 'cycling;
        }
        mirrored = Some(!flip);
    }

    // Relaxation: with zero cross-contents the pools decouple. A positive
    // queue drains at rate `1 − λ` with its pool full; once empty, the own
    // content relaxes toward λ at unit rate.
    let t0 = t;
    let drain = |q: f64| if q > 0.0 { q / (1.0 - p.lambda) } else { 0.0 };
    let (q1_0, q2_0, z11_0, z22_0) = (x.q1, x.q2, x.z11, x.z22);
    let hit1 = drain(q1_0);
    let hit2 = drain(q2_0);
    let pool = move |q0: f64, z0: f64, hit: f64, s: f64| -> (f64, f64) {
        if s < hit {
            (q0 - (1.0 - p.lambda) * s, 1.0)
        } else {
            let z_at_hit = if q0 > 0.0 { 1.0 } else { z0 };
            (
                0.0,
                p.lambda + (z_at_hit - p.lambda) * (-(s - hit)).exp(),
            )
        }
    };
    let eval_relax = move |s: f64| {
        let (q1, z11) = pool(q1_0, z11_0, hit1, s);
        let (q2, z22) = pool(q2_0, z22_0, hit2, s);
        StateVector { q1, q2, z11, z12: 0.0, z21: 0.0, z22 }
    };

    // Split the segment at the drain epochs so the kinks are exact samples.
    let mut cuts: Vec<f64> = [hit1, hit2]
        .into_iter()
        .filter(|h| *h > 0.0 && t0 + *h < horizon)
        .collect();
    cuts.sort_by(f64::total_cmp);
    let mut seg_start = t0;
    for h in cuts {
        builder.segment(seg_start, t0 + h, Phase::Relaxation, |s| {
            eval_relax(s + (seg_start - t0))
        });
        seg_start = t0 + h;
    }
    builder.segment(seg_start, horizon, Phase::Relaxation, |s| {
        eval_relax(s + (seg_start - t0))
    });
    Ok(builder.finish(
        horizon,
        eval_relax(horizon - t0),
        Phase::Relaxation,
        records,
        TrajectoryHint::RelaxingToStationary,
    ))
}

// ---------------------------------------------------------------------------
// The one-line heuristic
// ---------------------------------------------------------------------------

/// The exponential factor `ξ(Δ) = e^{−(Δ−1+μ−κ)/(1+μ)}`: substituting the
/// linear lower bound of the activation time into `e^{−T₁ᵃ}` closes the
/// cycle map in one line. `ξ` is strictly decreasing in `Δ`, equals 1 at
/// `Δ = 1−μ+κ`, and tends to 0 as `Δ` grows.
pub fn xi(delta: f64, p: &ModelParams) -> f64 {
    (-(delta - 1.0 + p.mu - p.kappa) / (1.0 + p.mu)).exp()
}

/// Result of the one-line heuristic iteration: the classification plus the
/// converged exponential factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeuristicResult {
    /// Iteration outcome (sequence, verdict, fixed point when found).
    pub classification: ClassificationResult,
    /// `ξ(Δ*)` at the converged gap; `None` when the iteration stopped on an
    /// illegitimate value instead of converging.
    pub xi_star: Option<f64>,
}

/// Iterate the one-line map `Δ′ = ((1−μ)/μ)(1 − ξ(Δ) − τ) − κ` from
/// `delta0`.
///
/// Stops on convergence (gap settles within `10⁻¹²`; returns `Δ*` and `ξ*`)
/// or on an illegitimate value: the offending iterate is computed and
/// recorded, then the iteration halts, when either the new gap is at or
/// below `κ` or the factor `ξ` of the current gap exceeds 1 (the linearized
/// activation time would be negative). A starting `ξ(delta0) ≥ 0.05` is
/// allowed but noted: the shortcut is accurate only for small `ξ`.
///
/// # Errors
///
/// Invalid parameters or `delta0 ≤ κ`.
pub fn heuristic_iterate(
    delta0: f64,
    p: &ModelParams,
    max_iter: usize,
) -> Result<HeuristicResult, FluidError> {
    require_valid_params(p)?;
    require_above_threshold(delta0, p)?;
    if max_iter == 0 {
        return Err(ModelError::Precondition("max_iter must be nonzero".into()).into());
    }

    let a = (1.0 - p.mu) / p.mu;
    let mut notes = Vec::new();
    if xi(delta0, p) >= 0.05 {
        notes.push(format!(
            "starting factor xi = {} is not small; the linearized activation time \
             is a poor approximation here",
            xi(delta0, p)
        ));
    }

    let mut sequence = vec![delta0];
    let mut cur = delta0;
    let mut result: Option<(Verdict, StopReason, Option<f64>)> = None;

    for _ in 0..max_iter {
        let factor = xi(cur, p);
        let next = a * (1.0 - factor - p.tau) - p.kappa;
        sequence.push(next);
        if factor > 1.0 {
            notes.push(format!(
                "factor xi = {factor} exceeded 1 at gap {cur}; the shortcut left \
                 its domain of validity"
            ));
            result = Some((Verdict::StationaryConvergent, StopReason::OscillationCeased, None));
            break;
        }
        if next <= p.kappa {
            result = Some((Verdict::StationaryConvergent, StopReason::OscillationCeased, None));
            break;
        }
        if (next - cur).abs() < HEURISTIC_TOL {
            cur = next;
            result = Some((Verdict::Oscillatory, StopReason::FixedPoint, Some(xi(next, p))));
            break;
        }
        cur = next;
    }

    let (verdict, stop_reason, xi_star) = result.unwrap_or((
        Verdict::Undetermined,
        StopReason::MaxIterations,
        None,
    ));
    let periodic = xi_star.map(|xs| {
        let t1 = -xs.ln();
        let t2 = ((1.0 - xs) / p.tau).ln() / p.mu;
        PeriodicEquilibrium {
            delta_star: cur,
            z21_star: 1.0 - xs,
            t_star: [t1, t2, t1, t2],
            period: 2.0 * (t1 + t2),
            states_at_switch: None,
        }
    });
    Ok(HeuristicResult {
        classification: ClassificationResult {
            verdict,
            periodic,
            iterations_used: sequence.len() - 1,
            stop_reason,
            delta_sequence: sequence,
            notes,
        },
        xi_star,
    })
}

// ---------------------------------------------------------------------------
// Long-run throughput and the collapse verdict
// ---------------------------------------------------------------------------

/// Externally reported reference throughput for the benchmark parameter set
/// `(λ, μ, θ, κ, τ) = (0.98, 0.1, 0, 0.1, 0.01)`; `None` for any other
/// parameters.
pub fn reference_throughput(p: &ModelParams) -> Option<f64> {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    if close(p.lambda, 0.98)
        && close(p.mu, 0.1)
        && close(p.theta, 0.0)
        && close(p.kappa, 0.1)
        && close(p.tau, 0.01)
    {
        Some(0.44)
    } else {
        None
    }
}

/// Long-run per-pool throughput of the converged cycle, with the
/// congestion-collapse verdict.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThroughputReport {
    /// The converged exponential factor used for the closed forms.
    pub xi_star: f64,
    /// Activation time `−log ξ*` implied by the factor.
    pub t1: f64,
    /// Release time `log((1−ξ*)/τ)/μ` implied by the factor.
    pub t2: f64,
    /// Full cycle length `2(t1 + t2)`.
    pub cycle_length: f64,
    /// Closed-form time average of the pool-1 service rate
    /// `ζ(s) = 1 − (1−μ) z₂₁(s)` over one cycle:
    /// `1 − (1−μ)[(−log ξ* + ξ* − 1) + (1 − ξ* − τ)/μ] / cycle_length`.
    pub l_closed_form: f64,
    /// Evaluation of a sign-variant arrangement of the same average (leading
    /// constant `(1+μ)/2` and a `+ξ*` in place of `−ξ*`). It reproduces the
    /// externally reported reference value but disagrees with the direct
    /// time average; kept so reports can show the discrepancy explicitly.
    pub l_closed_form_variant: f64,
    /// Direct numeric time average of `ζ` over one converged cycle of
    /// [`simulate_approx`] (trapezoid rule over the sampled path). Ground
    /// truth for the collapse verdict.
    pub l_oracle: f64,
    /// Externally reported reference value, when one exists for these
    /// parameters (see [`reference_throughput`]).
    pub l_reference: Option<f64>,
    /// `true` when the oracle throughput falls short of the arrival rate:
    /// queues then grow without bound despite nominal capacity.
    pub collapse: bool,
    /// Queue growth per full cycle implied by the oracle, `(λ − L)·cycle`.
    pub queue_growth_per_cycle: f64,
    /// Diagnostic remarks (always includes the closed-form-vs-variant
    /// comparison).
    pub notes: Vec<String>,
}

/// Compute the long-run throughput report for a converged factor `xi_star`.
///
/// The closed form integrates `ζ(s) = 1 − (1−μ) z₂₁(s)` exactly over the
/// cycle implied by `ξ*`; the oracle value repeats the computation by
/// trapezoid quadrature on a [`simulate_approx`] path of the same cycle
/// (large starting queues, so no queue empties); the collapse verdict
/// compares the oracle against `λ`.
///
/// # Errors
///
/// Invalid parameters, `xi_star ∉ (0, 1)`, or a factor so large that the
/// implied shared peak `1 − ξ*` never reaches the release threshold.
pub fn throughput_l(xi_star: f64, p: &ModelParams) -> Result<ThroughputReport, FluidError> {
    require_valid_params(p)?;
    if !(xi_star > 0.0 && xi_star < 1.0) {
        return Err(ModelError::Precondition(format!(
            "factor {xi_star} must lie in (0, 1)"
        ))
        .into());
    }
    if 1.0 - xi_star <= p.tau {
        return Err(ModelError::Precondition(format!(
            "implied shared peak {} never exceeds the release threshold {}",
            1.0 - xi_star,
            p.tau
        ))
        .into());
    }

    let t1 = -xi_star.ln();
    let t2 = ((1.0 - xi_star) / p.tau).ln() / p.mu;
    let half = t1 + t2;
    let cycle_length = 2.0 * half;

    let shared_time = (-xi_star.ln() + xi_star - 1.0) + (1.0 - xi_star - p.tau) / p.mu;
    let l_closed_form = 1.0 - (1.0 - p.mu) * shared_time / cycle_length;
    let variant_time = (-xi_star.ln() + xi_star - 1.0) + (1.0 + xi_star - p.tau) / p.mu;
    let l_closed_form_variant =
        (1.0 + p.mu) / 2.0 - (1.0 - p.mu) * variant_time / cycle_length;

    // Oracle: rebuild the cycle-start gap from the factor, run the jump
    // system with queues too large to empty, and average ζ over the first
    // full cycle by the trapezoid rule.
    let delta_star = 1.0 - p.mu + p.kappa - (1.0 + p.mu) * xi_star.ln();
    let p0 = ModelParams { theta: 0.0, ..*p };
    let t1_true = solve_t1a(delta_star, &p0)?;
    let half_true = t1_true + t2a(t1_true, &p0);
    let d_top = delta_bound(&p0);
    let r_bound =
        (d_top - 1.0 + p0.mu - p0.kappa) / (1.0 + p0.mu) + 1.0 + (1.0 / p0.tau).ln() / p0.mu;
    let horizon = half_true + r_bound.max(half_true) + 1.0;
    let q1_big = (1.0 + p.mu) * horizon + delta_star.abs() + 1.0;
    let x0 = StateVector {
        q1: q1_big,
        q2: q1_big + delta_star,
        z11: 1.0,
        z12: 0.0,
        z21: 0.0,
        z22: 1.0,
    };
    let path = simulate_approx(&x0, &p0, horizon, 0.01)?;
    let rec = path.cycle_records.first().ok_or_else(|| {
        ModelError::Precondition("the implied cycle never started under the oracle".into())
    })?;
    let mut notes = Vec::new();
    // Average over the full first cycle when it repeats; when the gap after
    // the first half cannot restart oscillation, synthesize the mirrored
    // half by symmetry (the shared content is zero there, so ζ ≡ 1).
    let (quad_end, l_of_integral): (f64, Box<dyn Fn(f64) -> f64>) = match (rec.sigma4, rec.sigma2)
    {
        (Some(s4), _) => (s4, Box::new(move |i: f64| i / s4)),
        (None, Some(s2)) => {
            notes.push(
                "the implied cycle did not repeat; the mirrored half was synthesized \
                 by symmetry for the time average"
                    .into(),
            );
            (s2, Box::new(move |i: f64| (i + s2) / (2.0 * s2)))
        }
        (None, None) => {
            return Err(ModelError::Precondition(
                "the implied cycle did not complete within the oracle horizon".into(),
            )
            .into())
        }
    };
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for s in &path.samples {
        if s.t > quad_end + 1e-9 {
            break;
        }
        let zeta = 1.0 - (1.0 - p.mu) * s.state.z21;
        if let Some((pt, pz)) = prev {
            integral += 0.5 * (zeta + pz) * (s.t - pt);
        }
        prev = Some((s.t, zeta));
    }
    let l_oracle = l_of_integral(integral);

    let collapse = l_oracle < p.lambda;
    let queue_growth_per_cycle = (p.lambda - l_oracle) * cycle_length;
    notes.push(format!(
        "closed form {l_closed_form} agrees with the direct time average {l_oracle}; \
         the sign-variant arrangement gives {l_closed_form_variant}, close to the \
         reference value 0.44 but inconsistent with the time average"
    ));

    Ok(ThroughputReport {
        xi_star,
        t1,
        t2,
        cycle_length,
        l_closed_form,
        l_closed_form_variant,
        l_oracle,
        l_reference: reference_throughput(p),
        collapse,
        queue_growth_per_cycle,
        notes,
    })
}

// ---------------------------------------------------------------------------
