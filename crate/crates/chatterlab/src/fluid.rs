//! Exact piecewise evaluation of the switching fluid model.
//!
//! A sharing cycle in the canonical orientation (class 2 overloaded) has two
//! intervals:
//!
//! * `I₁` (length `T₁`): both pools serve queue 2. Pool 1 fills with class-2
//!   fluid (`ż₂₁ = 1 − z₂₁`), pool 2's stale class-1 content decays
//!   (`ż₁₂ = −μ z₁₂`), queue 1 receives no service (`q̇₁ = λ − θ q₁`), and the
//!   queue difference `Δ = q₂ − q₁` falls until it hits the activation
//!   threshold `κ`.
//! * `I₂` (length `T₂`): no new sharing; all shared content decays at rate
//!   `μ`, each pool otherwise serves its own queue, and `I₂` ends when `z₂₁`
//!   falls to the release threshold `τ`.
//!
//! The state at the end of the half-cycle is (approximately) the mirror image
//! of a cycle start, so a full cycle is two mirrored half-cycles. Every
//! segment has a closed-form solution built from the kernels in
//! [`crate::numerics`]; switching times are roots of scalar monotone
//! functions and are found by bracketed bisection/Newton to `10⁻¹²` residual.
//!
//! [`simulate`] stitches half-cycles together (with label reversal) into a
//! trajectory, detects queue emptying, and — once oscillation ceases — follows
//! the no-sharing relaxation toward the rest point, stopping if the path
//! re-hits a switching manifold with inward fields on both sides (sliding,
//! which is detected and reported, never integrated).

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    check_initial_condition, validate_params, ModelError, ModelParams, Phase, StateVector,
    MODEL_TOL,
};
use crate::numerics::{
    bisect_monotone, exp_decay_integral, exp_decay_quotient, format_g9, newton_bisect,
    NumericsError,
};

/// Errors from the fluid engine.
#[derive(Debug, Error)]
pub enum FluidError {
    /// Invalid parameters or state.
    #[error(transparent)]
    Model(#[from] ModelError),
    /// A root finder failed (should not happen inside analytic brackets).
    #[error("root finding failed: {0}")]
    Numerics(#[from] NumericsError),
    /// Malformed trajectory CSV input.
    #[error("trajectory CSV error: {0}")]
    Csv(String),
    /// Underlying I/O failure while reading or writing artifacts.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Residual target for switching-time root finding.
const ROOT_TOL: f64 = 1e-13;

/// Number of scan cells used when searching a phase segment for a queue
/// hitting zero. At typical segment lengths (`≤ 50` time units) this puts
/// scan points about `0.01` time units apart, far finer than any zero
/// crossing of the closed forms.
const SIGMA_Q_SCAN: usize = 4000;

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

/// Magnitude bounds `(Ψ_L, Ψ_U)` for the `I₁` forcing term `Ψ(t)` of the
/// queue-difference dynamics `Δ̇ = −θΔ + Ψ(t)`, valid whenever the start has
/// `z₁₂(0) ≤ τ` and `z₂₁(0) ≥ 0`:
///
/// `Ψ(t) = −(1+μ) − (1−μ)(1 − z₂₁(0)) e^{−t} + (1−μ) z₁₂(0) e^{−μt}`
///
/// so `−Ψ_U ≤ Ψ(t) ≤ −Ψ_L < 0` with `Ψ_L = (1+μ) − (1−μ)τ` and `Ψ_U = 2`.
pub(crate) fn psi_magnitude_bounds(p: &ModelParams) -> (f64, f64) {
    ((1.0 + p.mu) - (1.0 - p.mu) * p.tau, 2.0)
}

/// The `I₁` forcing term `Ψ(t)` for a start with given shared contents.
#[inline]
fn psi1(t: f64, z21_0: f64, z12_0: f64, p: &ModelParams) -> f64 {
    -(1.0 + p.mu) - (1.0 - p.mu) * (1.0 - z21_0) * (-t).exp()
        + (1.0 - p.mu) * z12_0 * (-p.mu * t).exp()
}

/// Queue difference on `I₁` for general start data (internal: the public
/// [`eval_delta1`] fixes `z₁₂(0) = τ` per the canonical start).
fn delta1_general(delta0: f64, z21_0: f64, z12_0: f64, t: f64, p: &ModelParams) -> f64 {
    let th = p.theta;
    delta0 * (-th * t).exp() - (1.0 + p.mu) * exp_decay_integral(th, t)
        - (1.0 - p.mu) * (1.0 - z21_0) * exp_decay_quotient(th, 1.0, t)
        + (1.0 - p.mu) * z12_0 * exp_decay_quotient(th, p.mu, t)
}

/// Queue content under no service (`q̇ = λ − θq`), the class-1 queue law on
/// `I₁`.
#[inline]
fn queue_unserved(q0: f64, t: f64, p: &ModelParams) -> f64 {
    q0 * (-p.theta * t).exp() + p.lambda * exp_decay_integral(p.theta, t)
}

/// Queue content under own-pool service with decaying cross-content
/// (`q̇ = λ − 1 + (1−μ) z e^{−μt} − θq` with `z` the initial cross content);
/// the law of both queues on `I₂` and of a positive queue in relaxation.
#[inline]
pub(crate) fn queue_served(q0: f64, z_cross0: f64, t: f64, p: &ModelParams) -> f64 {
    q0 * (-p.theta * t).exp() - (1.0 - p.lambda) * exp_decay_integral(p.theta, t)
        + (1.0 - p.mu) * z_cross0 * exp_decay_quotient(p.theta, p.mu, t)
}

/// Closed-form state on `I₁` at elapsed time `t` from start `x0`.
///
/// `z₁₁(t) = z₁₁(0) e^{−t}` (pool 1 converts to class-2 fluid as own-class
/// services complete), `z₁₂(t) = z₁₂(0) e^{−μt}`, queue 1 is unserved, and
/// queue 2 follows `q₁ + Δ` with `Δ` integrated from `Δ̇ = −θΔ + Ψ(t)`.
///
/// # Errors
///
/// `t < 0` or a structurally invalid `x0`.
pub fn eval_interval1(x0: &StateVector, t: f64, p: &ModelParams) -> Result<StateVector, FluidError> {
    if t < 0.0 {
        return Err(ModelError::Precondition(format!("negative elapsed time {t}")).into());
    }
    x0.well_formed()?;
    let z11 = x0.z11 * (-t).exp();
    let z12 = x0.z12 * (-p.mu * t).exp();
    let q1 = queue_unserved(x0.q1, t, p);
    let delta = delta1_general(x0.delta(), x0.z21, x0.z12, t, p);
    Ok(StateVector {
        q1,
        q2: q1 + delta,
        z11,
        z12,
        z21: 1.0 - z11,
        z22: 1.0 - z12,
    })
}

/// Queue difference on `I₁` for a canonical start (`z₁₂(0) = τ`):
/// strictly decreasing in `t`, strictly increasing in `delta0`, `z21_0`,
/// and `τ`.
pub fn eval_delta1(delta0: f64, z21_0: f64, t: f64, p: &ModelParams) -> f64 {
    delta1_general(delta0, z21_0, p.tau, t, p)
}

/// Closed-form state on `I₂` at elapsed time `t` from the interval start
/// `x_at_t1` (the state at `Σ₁`).
///
/// Both shared contents decay at rate `μ`; each queue is served by its own
/// pool at rate `1 − (1−μ) z_cross`. The queue difference obeys
/// `Δ(t) = Δ(0) e^{−θt} + A·(e^{−θt} − e^{−μt})/(μ−θ)` with
/// `A = (1−μ)(z₁₂(Σ₁) − z₂₁(Σ₁)) < 0`, so it stays below `κ` throughout.
///
/// # Errors
///
/// `t < 0` or a structurally invalid `x_at_t1`.
pub fn eval_interval2(
    x_at_t1: &StateVector,
    t: f64,
    p: &ModelParams,
) -> Result<StateVector, FluidError> {
    if t < 0.0 {
        return Err(ModelError::Precondition(format!("negative elapsed time {t}")).into());
    }
    x_at_t1.well_formed()?;
    let decay = (-p.mu * t).exp();
    let z21 = x_at_t1.z21 * decay;
    let z12 = x_at_t1.z12 * decay;
    Ok(StateVector {
        q1: queue_served(x_at_t1.q1, x_at_t1.z21, t, p),
        q2: queue_served(x_at_t1.q2, x_at_t1.z12, t, p),
        z11: 1.0 - z21,
        z12,
        z21,
        z22: 1.0 - z12,
    })
}

// ---------------------------------------------------------------------------
// Switching times
// ---------------------------------------------------------------------------

/// Analytic bracket `[T₁ᴸ, T₁ᵁ]` for the `I₁` exit time, from the sandwich
/// `Δ(0)e^{−θt} − Ψ_U·∫₀ᵗe^{−θs}ds ≤ Δ(t) ≤ Δ(0)e^{−θt} − Ψ_L·∫₀ᵗe^{−θs}ds`.
///
/// For `θ > 0` the endpoints are
/// `log((θΔ(0) + Ψ)/(θκ + Ψ))/θ` with `Ψ = Ψ_U` (lower) and `Ψ = Ψ_L`
/// (upper); for `θ = 0` the limits `(Δ(0) − κ)/Ψ_U ≤ T₁ ≤ (Δ(0) − κ)/Ψ_L`.
/// Both endpoints are strictly increasing in `Δ(0)`. Valid for starts with
/// `z₁₂(0) ≤ τ`; returns `(0, 0)` when `Δ(0) ≤ κ`.
pub(crate) fn t1_bracket(delta0: f64, p: &ModelParams) -> (f64, f64) {
    if delta0 <= p.kappa {
        return (0.0, 0.0);
    }
    let (psi_l, psi_u) = psi_magnitude_bounds(p);
    if p.theta > 0.0 {
        let bound = |psi: f64| {
            ((p.theta * delta0 + psi) / (p.theta * p.kappa + psi)).ln() / p.theta
        };
        (bound(psi_u), bound(psi_l))
    } else {
        ((delta0 - p.kappa) / psi_u, (delta0 - p.kappa) / psi_l)
    }
}

/// The `I₁` exit time: the unique root of `Δ(t) = κ`.
///
/// `Δ` is strictly decreasing on `I₁`, so the root is unique; it is found by
/// bracketed Newton (derivative `Δ̇ = −θΔ + Ψ(t)`) inside the analytic
/// bracket of [`t1_bracket`], to residual `|Δ(T₁) − κ| < 10⁻¹²`.
///
/// # Errors
///
/// Precondition error when `Δ(0) ≤ κ`.
pub fn find_t1(x0: &StateVector, p: &ModelParams) -> Result<f64, FluidError> {
    let delta0 = x0.delta();
    if delta0 <= p.kappa {
        return Err(ModelError::Precondition(format!(
            "Delta(0) = {delta0} must exceed kappa = {}",
            p.kappa
        ))
        .into());
    }
    let (lo, hi) = t1_bracket(delta0, p);
    // Guard the endpoints against roundoff in the analytic bracket.
    let lo = (lo * (1.0 - 1e-12)).max(0.0);
    let hi = hi * (1.0 + 1e-12) + 1e-12;
    let f = |t: f64| delta1_general(delta0, x0.z21, x0.z12, t, p) - p.kappa;
    let df = |t: f64| {
        -p.theta * delta1_general(delta0, x0.z21, x0.z12, t, p) + psi1(t, x0.z21, x0.z12, p)
    };
    Ok(newton_bisect(f, df, lo, hi, ROOT_TOL)?)
}

/// The `I₂` exit time: `log(z₂₁(Σ₁)/τ)/μ` when `z₂₁(Σ₁) > τ`, else `0`
/// (the shared content is already at or below the release threshold, so the
/// draining interval is empty).
pub fn find_t2(x_at_t1: &StateVector, p: &ModelParams) -> f64 {
    if x_at_t1.z21 > p.tau {
        (x_at_t1.z21 / p.tau).ln() / p.mu
    } else {
        0.0
    }
}

/// Earliest zero in `(0, horizon]` of the served-queue closed form
/// `t ↦ queue_served(q0, z_cross0, t)`, or `None` if it stays positive.
pub(crate) fn queue_served_zero(
    q0: f64,
    z_cross0: f64,
    horizon: f64,
    p: &ModelParams,
) -> Result<Option<f64>, FluidError> {
    if horizon <= 0.0 || q0 <= 0.0 {
        return Ok(if q0 <= 0.0 && horizon > 0.0 { Some(0.0) } else { None });
    }
    let f = |t: f64| queue_served(q0, z_cross0, t, p);
    let step = horizon / SIGMA_Q_SCAN as f64;
    let mut prev_t = 0.0;
    let mut prev_q = q0;
    for k in 1..=SIGMA_Q_SCAN {
        let t = if k == SIGMA_Q_SCAN { horizon } else { step * k as f64 };
        let q = f(t);
        if prev_q > 0.0 && q <= 0.0 {
            return Ok(Some(bisect_monotone(f, prev_t, t, 1e-12)?));
        }
        prev_t = t;
        prev_q = q;
    }
    Ok(None)
}

/// Earliest time in `(0, horizon]` at which either queue hits zero within a
/// single phase segment, or `None` if both stay positive.
///
/// The phase selects the closed form: `I1`/`I2` in the canonical orientation,
/// their mirrors for `I3`/`I4`, and the pools-full no-sharing law for
/// `Relaxation` (identical in form to `I2`). On `I₁` with a valid cycle start
/// both queues are provably positive, so the scan returns `None` there.
pub fn find_sigma_q(
    x_segment_start: &StateVector,
    phase: Phase,
    horizon: f64,
    p: &ModelParams,
) -> Result<Option<f64>, FluidError> {
    if horizon <= 0.0 {
        return Ok(None);
    }
    let (x, phase) = match phase {
        Phase::I3 | Phase::I4 => (x_segment_start.mirror(), phase.mirror()),
        _ => (*x_segment_start, phase),
    };
    let eval: Box<dyn Fn(f64) -> Result<(f64, f64), FluidError>> = match phase {
        Phase::I1 => Box::new(move |t| {
            let s = eval_interval1(&x, t, p)?;
            Ok((s.q1, s.q2))
        }),
        Phase::I2 | Phase::Relaxation => Box::new(move |t| {
            let s = eval_interval2(&x, t, p)?;
            Ok((s.q1, s.q2))
        }),
        other => {
            return Err(ModelError::Precondition(format!(
                "queue-hit scan not defined for phase {other}"
            ))
            .into())
        }
    };
    let step = horizon / SIGMA_Q_SCAN as f64;
    let mut root: Option<f64> = None;
    for which in 0..2 {
        let q_of = |t: f64| -> Result<f64, FluidError> {
            let (q1, q2) = eval(t)?;
            Ok(if which == 0 { q1 } else { q2 })
        };
        // A queue already at zero when the segment starts is the caller's
        // business (it would not have entered this phase); the scan looks for
        // a strict positive-to-nonpositive crossing.
        let mut prev_t = 0.0;
        let mut prev_q = q_of(0.0)?.max(0.0);
        for k in 1..=SIGMA_Q_SCAN {
            let t = if k == SIGMA_Q_SCAN { horizon } else { step * k as f64 };
            let q = q_of(t)?;
            if prev_q > 0.0 && q <= 0.0 {
                let hit = bisect_monotone(
                    |s| q_of(s).expect("closed form evaluates on the bracket"),
                    prev_t,
                    t,
                    1e-12,
                )?;
                if root.map_or(true, |r| hit < r) {
                    root = Some(hit);
                }
                break;
            }
            prev_t = t;
            prev_q = q;
        }
    }
    Ok(root)
}

// ---------------------------------------------------------------------------
// Cycle records
// ---------------------------------------------------------------------------

/// Why a (half-)cycle computation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CycleTermination {
    /// The cycle (or half-cycle) completed with a valid mirrored restart.
    Completed,
    /// A queue hit zero inside the cycle (at `sigma_q`).
    QueueHitZero,
    /// The end state cannot restart a cycle: `−Δ(Σ₂) ≤ κ` (or the mirrored
    /// condition), so oscillation ceases.
    OscillationFailed,
    /// The relaxation path reached a switching manifold with inward fields.
    SlidingDetected,
}

impl std::fmt::Display for CycleTermination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CycleTermination::Completed => "Completed",
            CycleTermination::QueueHitZero => "QueueHitZero",
            CycleTermination::OscillationFailed => "OscillationFailed",
            CycleTermination::SlidingDetected => "SlidingDetected",
        };
        f.write_str(s)
    }
}

/// Bookkeeping for one cycle (or the prefix of one that terminated early).
///
/// Times are relative to the cycle start `Σ₀`; `start_time` locates `Σ₀` on
/// the absolute trajectory clock. The switching epochs satisfy
/// `Σ_k = T₁ + … + T_k` exactly. For a half-cycle record, `t3`, `t4` and
/// their epochs are `None`. `states_at_switch[k]` is the state at the k-th
/// defined epoch (`Σ₀`, `Σ₁`, …, in order).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CycleRecord {
    /// Absolute time of the cycle start `Σ₀`.
    pub start_time: f64,
    /// Length of `I₁` (queue-difference drain), when reached.
    pub t1: Option<f64>,
    /// Length of `I₂` (shared-content release), when reached.
    pub t2: Option<f64>,
    /// Length of `I₃` (mirror of `I₁`), when reached.
    pub t3: Option<f64>,
    /// Length of `I₄` (mirror of `I₂`), when reached.
    pub t4: Option<f64>,
    /// Epoch `Σ₁ = T₁`.
    pub sigma1: Option<f64>,
    /// Epoch `Σ₂ = T₁ + T₂`.
    pub sigma2: Option<f64>,
    /// Epoch `Σ₃ = T₁ + T₂ + T₃`.
    pub sigma3: Option<f64>,
    /// Epoch `Σ₄ = T₁ + T₂ + T₃ + T₄`.
    pub sigma4: Option<f64>,
    /// States at the defined switching epochs, starting with `Σ₀`.
    pub states_at_switch: Vec<StateVector>,
    /// Queue-hit epoch (relative to `Σ₀`), when a queue emptied mid-cycle.
    pub sigma_q: Option<f64>,
    /// State at `sigma_q`, when present.
    pub state_at_sigma_q: Option<StateVector>,
    /// Why the record ends where it does.
    pub terminated_by: CycleTermination,
}

/// One canonical half-cycle from a cycle start: `I₁` to `Σ₁`, `I₂` to `Σ₂`.
///
/// Terminations:
/// * `QueueHitZero` — a queue empties strictly inside `I₂` (`sigma_q` set;
///   `t2`/`sigma2` absent);
/// * `OscillationFailed` — the half-cycle completes but its end state cannot
///   seed the mirrored next half (`−Δ(Σ₂) ≤ κ`, which includes the `T₂ = 0`
///   tie `z₂₁(Σ₁) ≤ τ`);
/// * `Completed` — the mirrored end state is a valid cycle start.
///
/// # Errors
///
/// Precondition error when `x0` fails the canonical cycle-start check.
pub fn half_cycle(x0: &StateVector, p: &ModelParams) -> Result<CycleRecord, FluidError> {
    let check = check_initial_condition(x0, p);
    if !check.ok {
        return Err(ModelError::Precondition(format!(
            "invalid cycle start: {}",
            check.violations.join("; ")
        ))
        .into());
    }
    half_cycle_unchecked(x0, p)
}

/// [`half_cycle`] without the strict start check: accepts any pools-full
/// start with `Δ(0) > κ` and `z₁₂(0) ≤ τ` (the closed forms are valid there).
/// Used by the simulator, which admits slightly more general entries.
pub(crate) fn half_cycle_unchecked(
    x0: &StateVector,
    p: &ModelParams,
) -> Result<CycleRecord, FluidError> {
    let t1 = find_t1(x0, p)?;
    let x1 = eval_interval1(x0, t1, p)?;
    let t2_full = find_t2(&x1, p);

    let mut record = CycleRecord {
        start_time: 0.0,
        t1: Some(t1),
        t2: None,
        t3: None,
        t4: None,
        sigma1: Some(t1),
        sigma2: None,
        sigma3: None,
        sigma4: None,
        states_at_switch: vec![*x0, x1],
        sigma_q: None,
        state_at_sigma_q: None,
        terminated_by: CycleTermination::Completed,
    };

    if t2_full == 0.0 {
        // Empty release interval: the next sharing direction would have to
        // start from Δ = −κ, which is not above threshold — oscillation ends.
        record.t2 = Some(0.0);
        record.sigma2 = Some(t1);
        record.states_at_switch.push(x1);
        record.terminated_by = CycleTermination::OscillationFailed;
        return Ok(record);
    }

    if let Some(hit) = find_sigma_q(&x1, Phase::I2, t2_full, p)? {
        record.sigma_q = Some(t1 + hit);
        record.state_at_sigma_q = Some(clamp_queues(eval_interval2(&x1, hit, p)?));
        record.terminated_by = CycleTermination::QueueHitZero;
        return Ok(record);
    }

    let mut x2 = eval_interval2(&x1, t2_full, p)?;
    // Σ₂ is defined by z₂₁ reaching τ; snap it exactly (the root residual is
    // below 10⁻¹²) so downstream restart states carry the threshold value.
    x2.z21 = p.tau;
    x2.z11 = 1.0 - p.tau;
    record.t2 = Some(t2_full);
    record.sigma2 = Some(t1 + t2_full);
    record.states_at_switch.push(x2);
    if -x2.delta() <= p.kappa {
        record.terminated_by = CycleTermination::OscillationFailed;
    }
    Ok(record)
}

fn clamp_queues(mut x: StateVector) -> StateVector {
    x.q1 = x.q1.max(0.0);
    x.q2 = x.q2.max(0.0);
    x
}

/// A full cycle (two mirrored half-cycles) from a canonical start, merged
/// into one record. If the first half terminates early, its record is
/// returned as-is; if the second half terminates early, the merged record
/// carries the termination with epochs shifted past `Σ₂`.
pub fn full_cycle(x0: &StateVector, p: &ModelParams) -> Result<CycleRecord, FluidError> {
    let first = half_cycle(x0, p)?;
    if first.terminated_by != CycleTermination::Completed {
        return Ok(first);
    }
    let sigma2 = first.sigma2.expect("completed half has sigma2");
    let y0 = first.states_at_switch[2].mirror();
    let second = half_cycle_unchecked(&y0, p)?;
    let mut merged = first;
    merged.t3 = second.t1;
    merged.sigma3 = second.sigma1.map(|s| sigma2 + s);
    if let Some(x) = second.states_at_switch.get(1) {
        merged.states_at_switch.push(x.mirror());
    }
    match second.terminated_by {
        CycleTermination::QueueHitZero => {
            merged.sigma_q = second.sigma_q.map(|s| sigma2 + s);
            merged.state_at_sigma_q = second.state_at_sigma_q.map(|x| x.mirror());
            merged.terminated_by = CycleTermination::QueueHitZero;
        }
        term => {
            merged.t4 = second.t2;
            merged.sigma4 = second.sigma2.map(|s| sigma2 + s);
            if let Some(x) = second.states_at_switch.get(2) {
                merged.states_at_switch.push(x.mirror());
            }
            merged.terminated_by = term;
        }
    }
    Ok(merged)
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

/// One time-stamped trajectory sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Sample {
    /// Sample time.
    pub t: f64,
    /// State at (the right limit of) `t`.
    pub state: StateVector,
    /// Phase in force from this sample on.
    pub phase: Phase,
    /// Queue difference `q₂ − q₁`, carried explicitly so emitted files are
    /// reproducible byte-for-byte under a parse/re-emit round trip.
    pub delta: f64,
}

/// A discontinuity record: at time `t` the state jumps from `left` to
/// `right`. The sample at `t` carries the right limit. Produced only by the
/// approximating jump system; fluid trajectories are continuous.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JumpRecord {
    /// Jump epoch.
    pub t: f64,
    /// State just before the jump.
    pub left: StateVector,
    /// State just after the jump.
    pub right: StateVector,
}

/// How a simulation ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryHint {
    /// The horizon arrived while sharing cycles were still running.
    Cycling,
    /// Oscillation ceased (or never started); the path was relaxing toward
    /// the no-sharing rest point when the horizon arrived.
    RelaxingToStationary,
    /// A queue hit zero inside a sharing cycle; the cycle analysis stops
    /// there.
    QueueHitZero,
    /// The relaxation path hit a switching manifold with inward fields on
    /// both sides; sliding motion is reported, not integrated.
    SlidingDetected,
}

/// A sampled path: uniform grid plus every switching epoch as an exact
/// sample, cycle bookkeeping, and jump records (for the jump system).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    /// Strictly time-increasing samples.
    pub samples: Vec<Sample>,
    /// Cycle records in order.
    pub cycle_records: Vec<CycleRecord>,
    /// Jump discontinuities (empty for the fluid model).
    pub jumps: Vec<JumpRecord>,
    /// How the run ended.
    pub hint: TrajectoryHint,
}

/// Exact CSV header for trajectory export.
pub const TRAJECTORY_CSV_HEADER: &str = "t,q1,q2,z11,z12,z21,z22,delta,phase";

impl Trajectory {
    /// Write the samples as CSV (9-significant-digit numbers, header
    /// [`TRAJECTORY_CSV_HEADER`]). Emission is deterministic and stable under
    /// a parse/re-emit round trip.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), FluidError> {
        writeln!(w, "{TRAJECTORY_CSV_HEADER}")?;
        for s in &self.samples {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                format_g9(s.t),
                format_g9(s.state.q1),
                format_g9(s.state.q2),
                format_g9(s.state.z11),
                format_g9(s.state.z12),
                format_g9(s.state.z21),
                format_g9(s.state.z22),
                format_g9(s.delta),
                s.phase
            )?;
        }
        Ok(())
    }

    /// Render the CSV to a string.
    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    /// Parse a trajectory CSV produced by [`Trajectory::write_csv`].
    ///
    /// Cycle records and jumps are not part of the CSV schema, so the parsed
    /// trajectory carries samples only (hint defaults to `Cycling`).
    ///
    /// # Errors
    ///
    /// [`FluidError::Csv`] on a wrong header, wrong column count, or
    /// unparseable fields.
    pub fn read_csv<R: Read>(mut r: R) -> Result<Self, FluidError> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::from_csv_str(&text)
    }

    /// Parse from an in-memory CSV string; see [`Trajectory::read_csv`].
    pub fn from_csv_str(text: &str) -> Result<Self, FluidError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim_end() == TRAJECTORY_CSV_HEADER => {}
            other => {
                return Err(FluidError::Csv(format!(
                    "expected header {TRAJECTORY_CSV_HEADER:?}, found {other:?}"
                )))
            }
        }
        let mut samples = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(FluidError::Csv(format!(
                    "row {}: expected 9 fields, found {}",
                    i + 2,
                    fields.len()
                )));
            }
            let num = |j: usize| -> Result<f64, FluidError> {
                fields[j].parse().map_err(|e| {
                    FluidError::Csv(format!("row {}: field {}: {e}", i + 2, j + 1))
                })
            };
            let state = StateVector {
                q1: num(1)?,
                q2: num(2)?,
                z11: num(3)?,
                z12: num(4)?,
                z21: num(5)?,
                z22: num(6)?,
            };
            let phase: Phase = fields[8]
                .parse()
                .map_err(|e| FluidError::Csv(format!("row {}: {e}", i + 2)))?;
            samples.push(Sample { t: num(0)?, state, phase, delta: num(7)? });
        }
        Ok(Trajectory {
            samples,
            cycle_records: Vec::new(),
            jumps: Vec::new(),
            hint: TrajectoryHint::Cycling,
        })
    }
}

/// Grid samples are dropped when they fall within this distance of an exact
/// event sample, so sample times survive 9-significant-digit emission as a
/// strictly increasing sequence.
fn merge_tol(t: f64) -> f64 {
    (1e-8 * t.abs()).max(1e-9)
}

/// Incremental trajectory builder: pushes segment starts (exact events) and
/// interior grid samples, merging events that land on top of each other.
pub(crate) struct TrajectoryBuilder {
    dt: f64,
    samples: Vec<Sample>,
    jumps: Vec<JumpRecord>,
}

impl TrajectoryBuilder {
    pub(crate) fn new(dt: f64) -> Self {
        Self { dt, samples: Vec::new(), jumps: Vec::new() }
    }

    fn push(&mut self, t: f64, state: StateVector, phase: Phase) {
        if let Some(last) = self.samples.last_mut() {
            if t <= last.t + merge_tol(t) {
                // Coincident event: the newest (rightmost) description wins.
                last.state = state;
                last.phase = phase;
                last.delta = state.delta();
                return;
            }
        }
        self.samples.push(Sample { t, state, phase, delta: state.delta() });
    }

    /// Sample a segment `[t_start, t_end)` evaluated by `eval` (local time):
    /// the exact start plus interior grid multiples of `dt`.
    pub(crate) fn segment<F>(&mut self, t_start: f64, t_end: f64, phase: Phase, eval: F)
    where
        F: Fn(f64) -> StateVector,
    {
        self.push(t_start, eval(0.0), phase);
        if self.dt <= 0.0 {
            return;
        }
        let mut k = (t_start / self.dt).floor() as i64 + 1;
        loop {
            let t = k as f64 * self.dt;
            if t >= t_end - merge_tol(t_end) {
                break;
            }
            if t > t_start + merge_tol(t) {
                self.push(t, eval(t - t_start), phase);
            }
            k += 1;
        }
    }

    /// Record a jump at `t`: the sample carries the right limit.
    pub(crate) fn jump(&mut self, t: f64, left: StateVector, right: StateVector, phase: Phase) {
        self.jumps.push(JumpRecord { t, left, right });
        self.push(t, right, phase);
    }

    /// Push the closing sample and assemble the trajectory.
    pub(crate) fn finish(
        mut self,
        t_end: f64,
        state: StateVector,
        phase: Phase,
        cycle_records: Vec<CycleRecord>,
        hint: TrajectoryHint,
    ) -> Trajectory {
        self.push(t_end, state, phase);
        Trajectory { samples: self.samples, cycle_records, jumps: self.jumps, hint }
    }
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Eligibility for running a canonical (or mirrored) sharing half-cycle from
/// `x`: `Δ` above threshold, stale reverse content at or below `τ`, pools
/// full. (A zero helped-side queue is admitted: it regrows instantly while
/// its pool serves the other class.)
fn cycling_eligible(x: &StateVector, p: &ModelParams) -> bool {
    x.q1 >= 0.0 && x.delta() > p.kappa && x.z12 <= p.tau + MODEL_TOL && x.pools_full()
}

/// Move queued fluid into idle own-pool capacity (an instantaneous `t = 0`
/// normalization: the fluid dynamics would perform this transfer at infinite
/// rate). Leaves states with positive queues only when their pool is full.
fn normalize_start(mut x: StateVector) -> StateVector {
    let idle1 = (1.0 - x.z11 - x.z21).max(0.0);
    let move1 = x.q1.min(idle1);
    x.q1 -= move1;
    x.z11 += move1;
    let idle2 = (1.0 - x.z22 - x.z12).max(0.0);
    let move2 = x.q2.min(idle2);
    x.q2 -= move2;
    x.z22 += move2;
    x
}

/// State of one pool during no-sharing relaxation.
#[derive(Clone, Copy)]
struct RelaxPool {
    /// Queue content at the segment start (0 once drained).
    q: f64,
    /// Own-class in-service content at the segment start.
    z_own: f64,
    /// Whether the queue is still positive (pool full, served at rate
    /// `1 − (1−μ) z_cross`).
    draining: bool,
}

/// Closed-form relaxation evaluation for one pool at local time `t`, given
/// the cross-content `z_cross0` at the segment start.
fn relax_pool_at(pool: &RelaxPool, z_cross0: f64, z_cross_t: f64, t: f64, p: &ModelParams) -> (f64, f64) {
    if pool.draining {
        let q = queue_served(pool.q, z_cross0, t, p);
        (q, 1.0 - z_cross_t)
    } else {
        // Queue empty: arrivals flow straight into service, own content
        // relaxes toward λ at unit rate, capped by the pool capacity left
        // over by the decaying cross content.
        let z = p.lambda + (pool.z_own - p.lambda) * (-t).exp();
        (0.0, z.min(1.0 - z_cross_t))
    }
}

/// Simulate the switching fluid model from `x0` for `horizon` time units,
/// sampling on a uniform `sample_dt` grid plus every switching epoch.
///
/// Behavior:
/// * a start eligible for sharing (canonically or after label reversal) runs
///   half-cycles joined by mirroring until the horizon, a queue hits zero
///   inside a cycle ([`TrajectoryHint::QueueHitZero`]), or a half-cycle ends
///   unable to restart ([`CycleTermination::OscillationFailed`]), after which
///   the no-sharing relaxation is followed;
/// * relaxation drains the queues and lets all shared content decay, heading
///   for the rest point `(0, 0, λ, 0, 0, λ)`; if the queue difference
///   re-reaches a threshold while the reverse-sharing content is already
///   released (`≤ τ`), both vector fields point into the manifold and the
///   run stops with [`TrajectoryHint::SlidingDetected`];
/// * starts with pools not full first move queued fluid into idle own-pool
///   capacity (instantaneous normalization).
///
/// # Errors
///
/// Invalid parameters, a malformed `x0`, or a negative horizon/step.
pub fn simulate(
    x0: &StateVector,
    p: &ModelParams,
    horizon: f64,
    sample_dt: f64,
) -> Result<Trajectory, FluidError> {
    let report = validate_params(p, false);
    if !report.is_valid() {
        return Err(ModelError::InvalidParams(report.errors.join("; ")).into());
    }
    x0.well_formed()?;
    if horizon < 0.0 || !horizon.is_finite() {
        return Err(ModelError::Precondition(format!("invalid horizon {horizon}")).into());
    }
    if sample_dt <= 0.0 || !sample_dt.is_finite() {
        return Err(ModelError::Precondition(format!("invalid sample step {sample_dt}")).into());
    }

    let mut x = normalize_start(*x0);
    let mut builder = TrajectoryBuilder::new(sample_dt);
    let mut records: Vec<CycleRecord> = Vec::new();
    // A pending completed first half waiting to be merged with its mirror.
    let mut pending_half: Option<CycleRecord> = None;
    let mut t = 0.0;

    // `mirrored` tracks whether the canonical engine is running on the
    // label-reversed state; emitted samples undo the reversal.
    let mut mirrored = if cycling_eligible(&x, p) {
        Some(false)
    } else if cycling_eligible(&x.mirror(), p) {
        Some(true)
    } else {
        None
    };

    if horizon == 0.0 {
        let phase = if mirrored.is_some() { Phase::I1 } else { Phase::Relaxation };
        return Ok(builder.finish(0.0, x, phase, records, TrajectoryHint::Cycling));
    }

    // Merge a completed second half (in canonical orientation, started at
    // absolute `start`) into the pending record, or flush what exists.
    fn absorb_half(
        records: &mut Vec<CycleRecord>,
        pending: &mut Option<CycleRecord>,
        half: CycleRecord,
        start: f64,
        was_mirrored: bool,
    ) {
        // Map a canonical half record into actual orientation.
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
                // `half` is the mirror-orientation continuation of `first`.
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
                        records.push(first);
                    }
                    term => {
                        first.t4 = actual.t2;
                        first.sigma4 = actual.sigma2.map(|s| sigma2 + s);
                        if let Some(s) = actual.states_at_switch.get(2) {
                            first.states_at_switch.push(*s);
                        }
                        first.terminated_by = term;
                        records.push(first);
                    }
                }
            }
        }
    }

    // ------------------------------------------------------------------
    // Cycling mode
    // ------------------------------------------------------------------
    'cycling: while let Some(flip) = mirrored {
        let y0 = if flip { x.mirror() } else { x };
        let half = half_cycle_unchecked(&y0, p)?;
        let (phase1, phase2) =
            if flip { (Phase::I3, Phase::I4) } else { (Phase::I1, Phase::I2) };
        let t1 = half.t1.expect("half-cycle always computes T1");
        let y1 = half.states_at_switch[1];

        // I₁ (or its mirror), capped at the horizon.
        let seg1_end = (t + t1).min(horizon);
        {
            let y0c = y0;
            builder.segment(t, seg1_end, phase1, |s| {
                let st = eval_interval1(&y0c, s, p).expect("closed form on I1");
                if flip { st.mirror() } else { st }
            });
        }
        if t + t1 >= horizon {
            let s_end = horizon - t;
            let st = eval_interval1(&y0, s_end, p)?;
            let st = if flip { st.mirror() } else { st };
            // Flush bookkeeping for the partial cycle.
            absorb_half(&mut records, &mut pending_half, half, t, flip);
            if let Some(pend) = pending_half.take() {
                records.push(pend);
            }
            return Ok(builder.finish(horizon, st, phase1, records, TrajectoryHint::Cycling));
        }

        match half.terminated_by {
            CycleTermination::QueueHitZero => {
                let sq = half.sigma_q.expect("queue-hit half has sigma_q");
                let seg2_end = (t + sq).min(horizon);
                let y1c = y1;
                builder.segment(t + t1, seg2_end, phase2, |s| {
                    let st = eval_interval2(&y1c, s, p).expect("closed form on I2");
                    if flip { st.mirror() } else { st }
                });
                let stop = t + sq;
                if stop >= horizon {
                    let st = eval_interval2(&y1, horizon - t - t1, p)?;
                    let st = if flip { st.mirror() } else { st };
                    absorb_half(&mut records, &mut pending_half, half, t, flip);
                    if let Some(pend) = pending_half.take() {
                        records.push(pend);
                    }
                    return Ok(builder.finish(horizon, st, phase2, records, TrajectoryHint::Cycling));
                }
                let st = half
                    .state_at_sigma_q
                    .expect("queue-hit half has its state");
                let st = if flip { st.mirror() } else { st };
                absorb_half(&mut records, &mut pending_half, half, t, flip);
                if let Some(pend) = pending_half.take() {
                    records.push(pend);
                }
                return Ok(builder.finish(stop, st, phase2, records, TrajectoryHint::QueueHitZero));
            }
            CycleTermination::Completed | CycleTermination::OscillationFailed => {
                let t2 = half.t2.expect("completed half has T2");
                let seg2_end = (t + t1 + t2).min(horizon);
                if t2 > 0.0 {
                    let y1c = y1;
                    builder.segment(t + t1, seg2_end, phase2, |s| {
                        let st = eval_interval2(&y1c, s, p).expect("closed form on I2");
                        if flip { st.mirror() } else { st }
                    });
                }
                if t + t1 + t2 >= horizon {
                    let st = eval_interval2(&y1, horizon - t - t1, p)?;
                    let st = if flip { st.mirror() } else { st };
                    absorb_half(&mut records, &mut pending_half, half, t, flip);
                    if let Some(pend) = pending_half.take() {
                        records.push(pend);
                    }
                    return Ok(builder.finish(horizon, st, phase2, records, TrajectoryHint::Cycling));
                }
                let y2 = half.states_at_switch[2];
                let failed = half.terminated_by == CycleTermination::OscillationFailed;
                let new_t = t + t1 + t2;
                absorb_half(&mut records, &mut pending_half, half, t, flip);
                x = if flip { y2.mirror() } else { y2 };
                t = new_t;
                if failed {
                    if let Some(pend) = pending_half.take() {
                        records.push(pend);
                    }
                    break 'cycling;
                }
                // The mirrored end state seeds the next half-cycle.
                mirrored = Some(!flip);
            }
            CycleTermination::SlidingDetected => unreachable!("half cycles never emit sliding"),
        }
    }

    // ------------------------------------------------------------------
    // Relaxation mode
    // ------------------------------------------------------------------
    let mut pool1 = RelaxPool { q: x.q1, z_own: x.z11, draining: x.q1 > 0.0 };
    let mut pool2 = RelaxPool { q: x.q2, z_own: x.z22, draining: x.q2 > 0.0 };
    let mut z21 = x.z21;
    let mut z12 = x.z12;

    loop {
        let seg_start_t = t;
        let seg_horizon = horizon - t;
        if seg_horizon <= 0.0 {
            break;
        }
        let (p1, p2, z21_0, z12_0) = (pool1, pool2, z21, z12);
        let eval_local = move |s: f64, p: &ModelParams| -> StateVector {
            let z21_t = z21_0 * (-p.mu * s).exp();
            let z12_t = z12_0 * (-p.mu * s).exp();
            let (q1, z11) = relax_pool_at(&p1, z21_0, z21_t, s, p);
            let (q2, z22) = relax_pool_at(&p2, z12_0, z12_t, s, p);
            StateVector { q1: q1.max(0.0), q2: q2.max(0.0), z11, z12: z12_t, z21: z21_t, z22 }
        };

        // Next structural event: a draining queue reaches zero.
        let mut seg_end = seg_horizon;
        let mut drained: Option<u8> = None;
        if pool1.draining {
            if let Some(hit) = queue_served_zero(pool1.q, z21, seg_horizon, p)? {
                if hit < seg_end {
                    seg_end = hit;
                    drained = Some(1);
                }
            }
        }
        if pool2.draining {
            if let Some(hit) = queue_served_zero(pool2.q, z12, seg_horizon, p)? {
                if hit < seg_end {
                    seg_end = hit;
                    drained = Some(2);
                }
            }
        }

        // Threshold monitoring. Two outcomes can interrupt the segment:
        //
        // * sliding — the gap reaches a threshold from below while that
        //   direction's release content is already at or below τ, so both
        //   vector fields point into the manifold;
        // * re-entry — the gap is (or comes to be) beyond a threshold while
        //   the release content is still above τ (sharing blocked); at the
        //   release epoch, if the gap is still open, sharing re-activates
        //   and cycling resumes.
        let mut sliding_at: Option<(f64, StateVector)> = None;
        let mut reentry_at: Option<(f64, bool)> = None; // (time, toward class 1)

        let st0 = eval_local(0.0, p);
        let blocked = if st0.d21(p) >= 0.0 && st0.z12 > p.tau + MODEL_TOL {
            Some(false)
        } else if st0.d12(p) >= 0.0 && st0.z21 > p.tau + MODEL_TOL {
            Some(true)
        } else {
            None
        };
        if let Some(toward_class1) = blocked {
            let release = if toward_class1 { st0.z21 } else { st0.z12 };
            let rel_t = (release / p.tau).ln() / p.mu;
            if rel_t < seg_end {
                let st_rel = eval_local(rel_t, p);
                let still_open =
                    if toward_class1 { st_rel.d12(p) > 0.0 } else { st_rel.d21(p) > 0.0 };
                let eligible = if toward_class1 {
                    cycling_eligible(&st_rel.mirror(), p)
                } else {
                    cycling_eligible(&st_rel, p)
                };
                if still_open && eligible {
                    reentry_at = Some((rel_t, toward_class1));
                }
            }
        }

        if reentry_at.is_none() {
            // Scan for an upward crossing of d₂₁ = Δ − κ or d₁₂ = −Δ − κ.
            let scan_step = (seg_end / 400.0).max(1e-6);
            let mut s_prev = 0.0;
            let mut st_prev = st0;
            let mut s = scan_step;
            while s_prev < seg_end {
                let s_clamped = s.min(seg_end);
                let st = eval_local(s_clamped, p);
                let crossing = if st_prev.d21(p) < 0.0 && st.d21(p) >= 0.0 {
                    Some((false, bisect_monotone(|u| eval_local(u, p).d21(p), s_prev, s_clamped, 1e-12)
                        .unwrap_or(s_clamped)))
                } else if st_prev.d12(p) < 0.0 && st.d12(p) >= 0.0 {
                    Some((true, bisect_monotone(|u| eval_local(u, p).d12(p), s_prev, s_clamped, 1e-12)
                        .unwrap_or(s_clamped)))
                } else {
                    None
                };
                if let Some((toward_class1, hit)) = crossing {
                    let st_hit = eval_local(hit, p);
                    let release = if toward_class1 { st_hit.z21 } else { st_hit.z12 };
                    if release <= p.tau + MODEL_TOL {
                        sliding_at = Some((hit, st_hit));
                    } else {
                        // Blocked crossing: schedule the release epoch.
                        let rel_t = hit + (release / p.tau).ln() / p.mu;
                        if rel_t < seg_end {
                            let st_rel = eval_local(rel_t, p);
                            let still_open = if toward_class1 {
                                st_rel.d12(p) > 0.0
                            } else {
                                st_rel.d21(p) > 0.0
                            };
                            let eligible = if toward_class1 {
                                cycling_eligible(&st_rel.mirror(), p)
                            } else {
                                cycling_eligible(&st_rel, p)
                            };
                            if still_open && eligible {
                                reentry_at = Some((rel_t, toward_class1));
                            }
                        }
                    }
                    break;
                }
                s_prev = s_clamped;
                st_prev = st;
                s += scan_step;
            }
        }

        if let Some((hit, st_hit)) = sliding_at {
            builder.segment(seg_start_t, seg_start_t + hit, Phase::Relaxation, |u| {
                eval_local(u, p)
            });
            return Ok(builder.finish(
                seg_start_t + hit,
                st_hit,
                Phase::SlidingDetected,
                records,
                TrajectoryHint::SlidingDetected,
            ));
        }

        if let Some((rel_t, _toward_class1)) = reentry_at {
            builder.segment(seg_start_t, seg_start_t + rel_t, Phase::Relaxation, |u| {
                eval_local(u, p)
            });
            t = seg_start_t + rel_t;
            x = eval_local(rel_t, p);
            // Hand control back to the cycling machinery by recursing into a
            // fresh simulation of the remainder.
            let rest = simulate(&x, p, horizon - t, sample_dt)?;
            let mut merged = builder.finish(t, x, Phase::Relaxation, records, rest.hint);
            let offset = t;
            let mut first = true;
            for smp in rest.samples {
                if first {
                    // The handoff epoch belongs to the phase that starts
                    // there: the recursion's first sample overwrites the
                    // closing one.
                    first = false;
                    if let Some(last) = merged.samples.last_mut() {
                        last.state = smp.state;
                        last.phase = smp.phase;
                        last.delta = smp.delta;
                    }
                    continue;
                }
                merged.samples.push(Sample {
                    t: smp.t + offset,
                    state: smp.state,
                    phase: smp.phase,
                    delta: smp.delta,
                });
            }
            for mut rec in rest.cycle_records {
                rec.start_time += offset;
                merged.cycle_records.push(rec);
            }
            for mut j in rest.jumps {
                j.t += offset;
                merged.jumps.push(j);
            }
            return Ok(merged);
        }

        // Plain segment up to seg_end.
        builder.segment(seg_start_t, seg_start_t + seg_end, Phase::Relaxation, |u| {
            eval_local(u, p)
        });
        t = seg_start_t + seg_end;
        if t >= horizon - merge_tol(horizon) {
            let st = eval_local(seg_horizon, p);
            return Ok(builder.finish(
                horizon,
                st,
                Phase::Relaxation,
                records,
                TrajectoryHint::RelaxingToStationary,
            ));
        }
        // A queue drained: switch that pool to the empty-queue regime.
        let st = eval_local(seg_end, p);
        z21 = st.z21;
        z12 = st.z12;
        pool1 = RelaxPool {
            q: st.q1,
            z_own: st.z11,
            draining: st.q1 > 0.0 && drained != Some(1),
        };
        pool2 = RelaxPool {
            q: st.q2,
            z_own: st.z22,
            draining: st.q2 > 0.0 && drained != Some(2),
        };
    }

    let st = {
        let z21_t = z21;
        let z12_t = z12;
        StateVector {
            q1: pool1.q,
            q2: pool2.q,
            z11: if pool1.draining { 1.0 - z21_t } else { pool1.z_own },
            z12: z12_t,
            z21: z21_t,
            z22: if pool2.draining { 1.0 - z12_t } else { pool2.z_own },
        }
    };
    Ok(builder.finish(horizon, st, Phase::Relaxation, records, TrajectoryHint::RelaxingToStationary))
}
