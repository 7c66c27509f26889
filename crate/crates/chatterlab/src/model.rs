//! Parameters, state containers, and structural predicates for the symmetric
//! two-class / two-pool X model under the FQR-ART overload control.
//!
//! The symmetric model is described by five parameters: per-class arrival
//! rate `λ`, cross-class service rate `μ` (own-class service rate normalized
//! to `1`), abandonment rate `θ`, activation threshold `κ` on the queue
//! difference, and release threshold `τ` on the shared-server content.
//!
//! The state is `x = (q₁, q₂, z₁₁, z₁₂, z₂₁, z₂₂)` where `q_i` is the class-`i`
//! queue content and `z_{i,j}` is the amount of class-`i` fluid in service in
//! pool `j`. Both pools have unit capacity, so "pool `j` full" means
//! `z_{1,j} + z_{2,j} = 1`.
//!
//! Key derived quantities: the queue difference `Δ = q₂ − q₁` and the
//! threshold gaps `d₁₂ = q₁ − q₂ − κ`, `d₂₁ = q₂ − q₁ − κ`. Sharing toward a
//! class activates when the corresponding gap becomes positive, and is gated
//! by the release threshold `τ` on the reverse sharing content. By
//! construction `d₁₂ + d₂₁ = −2κ` identically.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for equality checks against thresholds (`z₁₂ = τ`,
/// `Δ = κ`, pools-full sums). All closed forms are evaluated in double
/// precision through well-conditioned exponential kernels, so `10⁻⁹` is far
/// above accumulated roundoff yet far below any model scale.
pub const MODEL_TOL: f64 = 1e-9;

/// Errors reported by constructors and engine entry points.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    /// Parameters violate a hard constraint (or a strict-mode assumption).
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    /// A state vector is structurally invalid for the requested operation.
    #[error("invalid state: {0}")]
    InvalidState(String),
    /// A precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// The five symmetric model parameters.
///
/// Serialized field names are exactly `lambda`, `mu`, `theta`, `kappa`, `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Arrival rate per class (`0 < λ < 1`).
    pub lambda: f64,
    /// Cross-class service rate (`0 < μ < 1`); own-class rate is `1`.
    pub mu: f64,
    /// Abandonment rate (`θ ≥ 0`; `θ = 0` is the no-abandonment limit mode).
    pub theta: f64,
    /// Activation threshold on the queue difference (`κ > 0`).
    pub kappa: f64,
    /// Release threshold on shared-server content (`0 < τ < 1`).
    pub tau: f64,
}

impl ModelParams {
    /// Construct and hard-validate (non-strict). Returns an error when any
    /// always-required constraint fails.
    pub fn new(lambda: f64, mu: f64, theta: f64, kappa: f64, tau: f64) -> Result<Self, ModelError> {
        let p = Self { lambda, mu, theta, kappa, tau };
        let report = validate_params(&p, false);
        if !report.is_valid() {
            return Err(ModelError::InvalidParams(report.errors.join("; ")));
        }
        Ok(p)
    }
}

/// Outcome of [`validate_params`]: hard errors always reject; strict
/// violations reject only in strict mode; notes are informational.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Violations of constraints that must hold in every mode.
    pub errors: Vec<String>,
    /// Violations of the overload-analysis assumptions (strict mode only).
    pub strict_violations: Vec<String>,
    /// Informational notes (e.g. the `θ = 0` limit mode).
    pub notes: Vec<String>,
}

impl ValidationReport {
    /// True when no hard constraint failed.
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    /// True when the parameters are acceptable under the given strictness.
    pub fn accepted(&self, strict: bool) -> bool {
        self.is_valid() && (!strict || self.strict_violations.is_empty())
    }
}

/// Check parameters against the model constraints.
///
/// Hard constraints (any mode): `0 < λ < 1`, `0 < μ < 1`, `θ ≥ 0`, `κ > 0`,
/// `0 < τ < 1`. When `strict` is set, the overload-analysis assumptions
/// `λ ≤ 1 − τ` and `θ < μ` are additionally checked (into
/// `strict_violations`), with one carve-out: `θ = 0` is admitted as a limit
/// mode (noted, not rejected), because the no-abandonment system is an
/// analysis target in its own right.
pub fn validate_params(p: &ModelParams, strict: bool) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut hard = |ok: bool, msg: &str| {
        if !ok {
            report.errors.push(msg.to_string());
        }
    };
    hard(p.lambda > 0.0, &format!("lambda must be positive (got {})", p.lambda));
    hard(p.lambda < 1.0, &format!("lambda must be below 1 (got {})", p.lambda));
    hard(p.mu > 0.0, &format!("mu must be positive (got {})", p.mu));
    hard(p.mu < 1.0, &format!("mu must be below 1 (got {})", p.mu));
    hard(p.theta >= 0.0, &format!("theta must be nonnegative (got {})", p.theta));
    hard(p.kappa > 0.0, &format!("kappa must be positive (got {})", p.kappa));
    hard(p.tau > 0.0 && p.tau < 1.0, &format!("tau must lie in (0, 1) (got {})", p.tau));

    if p.theta == 0.0 {
        report.notes.push(
            "theta = 0: no-abandonment limit mode (theta < mu read as a limit)".to_string(),
        );
    }
    if strict {
        if p.lambda > 1.0 - p.tau {
            report
                .strict_violations
                .push(format!("lambda <= 1 - tau fails ({} > {})", p.lambda, 1.0 - p.tau));
        }
        if p.theta > 0.0 && p.theta >= p.mu {
            report
                .strict_violations
                .push(format!("theta < mu fails ({} >= {})", p.theta, p.mu));
        }
    }
    report
}

/// The six-coordinate fluid state.
///
/// Serialized field names are exactly `q1`, `q2`, `z11`, `z12`, `z21`, `z22`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    /// Class-1 queue content.
    pub q1: f64,
    /// Class-2 queue content.
    pub q2: f64,
    /// Class-1 fluid in service in pool 1.
    pub z11: f64,
    /// Class-1 fluid in service in pool 2 (pool 2 helping class 1).
    pub z12: f64,
    /// Class-2 fluid in service in pool 1 (pool 1 helping class 2).
    pub z21: f64,
    /// Class-2 fluid in service in pool 2.
    pub z22: f64,
}

impl StateVector {
    /// Build a state from all six coordinates.
    pub fn new(q1: f64, q2: f64, z11: f64, z12: f64, z21: f64, z22: f64) -> Self {
        Self { q1, q2, z11, z12, z21, z22 }
    }

    /// Queue difference `Δ = q₂ − q₁`.
    #[inline]
    pub fn delta(&self) -> f64 {
        self.q2 - self.q1
    }

    /// Threshold gap `d₁₂ = q₁ − q₂ − κ` (positive ⇒ class 1 qualifies for
    /// help from pool 2).
    #[inline]
    pub fn d12(&self, p: &ModelParams) -> f64 {
        self.q1 - self.q2 - p.kappa
    }

    /// Threshold gap `d₂₁ = q₂ − q₁ − κ` (positive ⇒ class 2 qualifies for
    /// help from pool 1).
    #[inline]
    pub fn d21(&self, p: &ModelParams) -> f64 {
        self.q2 - self.q1 - p.kappa
    }

    /// Whether pool 1 is full: `z₁₁ + z₂₁ = 1` within [`MODEL_TOL`].
    #[inline]
    pub fn pool1_full(&self) -> bool {
        (self.z11 + self.z21 - 1.0).abs() <= MODEL_TOL
    }

    /// Whether pool 2 is full: `z₂₂ + z₁₂ = 1` within [`MODEL_TOL`].
    #[inline]
    pub fn pool2_full(&self) -> bool {
        (self.z22 + self.z12 - 1.0).abs() <= MODEL_TOL
    }

    /// Both pools full.
    #[inline]
    pub fn pools_full(&self) -> bool {
        self.pool1_full() && self.pool2_full()
    }

    /// Structural sanity: finite coordinates, queues `≥ 0` (within tolerance),
    /// occupancies in `[0, 1]` (within tolerance), pool sums `≤ 1`.
    pub fn well_formed(&self) -> Result<(), ModelError> {
        let coords =
            [self.q1, self.q2, self.z11, self.z12, self.z21, self.z22];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(ModelError::InvalidState("non-finite coordinate".to_string()));
        }
        if self.q1 < -MODEL_TOL || self.q2 < -MODEL_TOL {
            return Err(ModelError::InvalidState(format!(
                "negative queue content (q1 = {}, q2 = {})",
                self.q1, self.q2
            )));
        }
        for (name, z) in
            [("z11", self.z11), ("z12", self.z12), ("z21", self.z21), ("z22", self.z22)]
        {
            if !(-MODEL_TOL..=1.0 + MODEL_TOL).contains(&z) {
                return Err(ModelError::InvalidState(format!("{name} = {z} outside [0, 1]")));
            }
        }
        if self.z11 + self.z21 > 1.0 + MODEL_TOL || self.z22 + self.z12 > 1.0 + MODEL_TOL {
            return Err(ModelError::InvalidState("pool occupancy exceeds capacity".to_string()));
        }
        Ok(())
    }

    /// Label-reversal (mirror) operator: swap class and pool indices 1 ↔ 2,
    /// i.e. `(q₁, q₂, z₁₁, z₁₂, z₂₁, z₂₂) ↦ (q₂, q₁, z₂₂, z₂₁, z₁₂, z₁₁)`.
    ///
    /// An involution: `mirror(mirror(x)) = x`. The model equations are
    /// invariant under it, which is what reduces a full cycle to two mirrored
    /// half-cycles.
    pub fn mirror(&self) -> Self {
        Self {
            q1: self.q2,
            q2: self.q1,
            z11: self.z22,
            z12: self.z21,
            z21: self.z12,
            z22: self.z11,
        }
    }
}

/// Diagnostics from [`check_initial_condition`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialConditionCheck {
    /// Whether all conditions hold.
    pub ok: bool,
    /// One entry per violated condition, empty when `ok`.
    pub violations: Vec<String>,
}

/// Check the canonical cycle-start condition (class 2 overloaded):
/// `q₁(0) > 0`, `Δ(0) > κ` strictly, `z₁₂(0) = τ` within [`MODEL_TOL`],
/// `0 ≤ z₂₁(0) < τ`, and both pools full.
///
/// A state passing this check starts the sharing interval in which pool 1
/// helps class 2; the mirrored check describes the opposite overload.
pub fn check_initial_condition(x: &StateVector, p: &ModelParams) -> InitialConditionCheck {
    let mut violations = Vec::new();
    if !(x.q1 > 0.0) {
        violations.push(format!("q1(0) > 0 fails (q1 = {})", x.q1));
    }
    if !(x.delta() > p.kappa) {
        violations.push(format!("Delta(0) > kappa fails ({} <= {})", x.delta(), p.kappa));
    }
    if (x.z12 - p.tau).abs() > MODEL_TOL {
        violations.push(format!("z12(0) = tau fails (z12 = {}, tau = {})", x.z12, p.tau));
    }
    if !(x.z21 >= -MODEL_TOL && x.z21 < p.tau) {
        violations.push(format!("0 <= z21(0) < tau fails (z21 = {}, tau = {})", x.z21, p.tau));
    }
    if !x.pools_full() {
        violations.push(format!(
            "pools not full (z11 + z21 = {}, z22 + z12 = {})",
            x.z11 + x.z21,
            x.z22 + x.z12
        ));
    }
    InitialConditionCheck { ok: violations.is_empty(), violations }
}

/// Build the canonical cycle-start state from the reduced triple
/// `(q₁, q₂, z₂₁)` by filling `z₁₂ = τ` and completing both pools.
pub fn state_from_triple(q1: f64, q2: f64, z21: f64, p: &ModelParams) -> StateVector {
    StateVector {
        q1,
        q2,
        z11: 1.0 - z21,
        z12: p.tau,
        z21,
        z22: 1.0 - p.tau,
    }
}

/// The six phases a trajectory can report.
///
/// `I1`–`I4` are the four intervals of a sharing cycle (`I1`: pool 1 takes on
/// class-2 fluid; `I2`: sharing frozen while pool 1 releases it; `I3`/`I4`:
/// the mirrored pair). `Relaxation` is the no-sharing drain toward the rest
/// point, and `SlidingDetected` marks the sample at which the trajectory hits
/// a switching manifold with inward fields on both sides (not integrated).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    /// Pool 1 absorbing class-2 fluid (`Δ > κ`).
    I1,
    /// Shared fluid draining in pool 1, no new sharing (`z₂₁ > τ`).
    I2,
    /// Mirror of `I1`: pool 2 absorbing class-1 fluid.
    I3,
    /// Mirror of `I2`: shared fluid draining in pool 2.
    I4,
    /// No sharing active; queues drain and pools refill with own-class fluid.
    Relaxation,
    /// Switching manifold reached with inward fields on both sides.
    SlidingDetected,
}

impl Phase {
    /// The mirrored phase label (`I1 ↔ I3`, `I2 ↔ I4`).
    pub fn mirror(self) -> Self {
        match self {
            Phase::I1 => Phase::I3,
            Phase::I2 => Phase::I4,
            Phase::I3 => Phase::I1,
            Phase::I4 => Phase::I2,
            other => other,
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::I1 => "I1",
            Phase::I2 => "I2",
            Phase::I3 => "I3",
            Phase::I4 => "I4",
            Phase::Relaxation => "Relaxation",
            Phase::SlidingDetected => "SlidingDetected",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Phase {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "I1" => Ok(Phase::I1),
            "I2" => Ok(Phase::I2),
            "I3" => Ok(Phase::I3),
            "I4" => Ok(Phase::I4),
            "Relaxation" => Ok(Phase::Relaxation),
            "SlidingDetected" => Ok(Phase::SlidingDetected),
            other => Err(ModelError::InvalidState(format!("unknown phase label: {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_params() -> ModelParams {
        ModelParams { lambda: 0.98, mu: 0.1, theta: 0.01, kappa: 0.1, tau: 0.01 }
    }

    #[test]
    fn validate_accepts_reference_parameters_strictly() {
        let report = validate_params(&base_params(), true);
        assert!(report.accepted(true), "{report:?}");
    }

    #[test]
    fn validate_notes_theta_zero_limit_mode_but_accepts_it() {
        let p = ModelParams { theta: 0.0, ..base_params() };
        let report = validate_params(&p, true);
        assert!(report.accepted(true), "{report:?}");
        assert!(report.notes.iter().any(|n| n.contains("limit mode")));
    }

    #[test]
    fn validate_rejects_lambda_at_one_and_above_sharing_margin() {
        let p = ModelParams { lambda: 1.0, ..base_params() };
        let report = validate_params(&p, true);
        assert!(!report.is_valid());
        assert!(report.strict_violations.iter().any(|v| v.contains("lambda <= 1 - tau")));
        // λ inside (1-τ, 1) is a strict violation only.
        let p = ModelParams { lambda: 0.995, ..base_params() };
        let report = validate_params(&p, true);
        assert!(report.is_valid());
        assert!(!report.accepted(true));
        assert!(report.accepted(false));
    }

    #[test]
    fn validate_rejects_theta_at_or_above_mu_in_strict_mode() {
        let p = ModelParams { theta: 0.1, ..base_params() };
        let report = validate_params(&p, true);
        assert!(report.is_valid());
        assert!(!report.accepted(true));
        assert!(report.accepted(false));
    }

    #[test]
    fn mirror_swaps_labels_and_is_an_involution() {
        let x = StateVector::new(1.0, 2.0, 0.25, 0.5, 0.75, 0.125);
        let m = x.mirror();
        assert_eq!((m.q1, m.q2), (2.0, 1.0));
        assert_eq!((m.z11, m.z12, m.z21, m.z22), (0.125, 0.75, 0.5, 0.25));
        assert_eq!(m.mirror(), x);
        // A label-symmetric state is a fixed point.
        let s = StateVector::new(3.0, 3.0, 0.6, 0.2, 0.2, 0.6);
        assert_eq!(s.mirror(), s);
    }

    #[test]
    fn threshold_gaps_sum_to_minus_two_kappa() {
        let p = base_params();
        let x = StateVector::new(1.3, 7.9, 0.5, 0.5, 0.5, 0.5);
        assert!((x.d12(&p) + x.d21(&p) + 2.0 * p.kappa).abs() < 1e-15);
    }

    #[test]
    fn initial_condition_examples() {
        let p = ModelParams { theta: 0.0, ..base_params() };
        // Canonical start: Delta(0) = 0.2 > kappa, z21 below tau, pools full.
        let x = state_from_triple(1.0, 1.2, 0.005, &p);
        assert!(check_initial_condition(&x, &p).ok);
        // Queue difference at or below the threshold fails.
        let x = state_from_triple(1.0, 1.05, 0.0, &p);
        let check = check_initial_condition(&x, &p);
        assert!(!check.ok);
        assert!(check.violations.iter().any(|v| v.contains("Delta")));
        // z21 must be strictly below tau.
        let x = state_from_triple(1.0, 5.0, p.tau, &p);
        let check = check_initial_condition(&x, &p);
        assert!(!check.ok);
        assert!(check.violations.iter().any(|v| v.contains("z21")));
    }

    #[test]
    fn phase_labels_round_trip() {
        for phase in
            [Phase::I1, Phase::I2, Phase::I3, Phase::I4, Phase::Relaxation, Phase::SlidingDetected]
        {
            let label = phase.to_string();
            assert_eq!(label.parse::<Phase>().unwrap(), phase);
        }
        assert_eq!(Phase::I1.mirror(), Phase::I3);
        assert_eq!(Phase::I4.mirror(), Phase::I2);
        assert_eq!(Phase::Relaxation.mirror(), Phase::Relaxation);
    }

    #[test]
    fn params_json_field_names_are_stable() {
        let p = base_params();
        let json = serde_json::to_value(p).unwrap();
        for key in ["lambda", "mu", "theta", "kappa", "tau"] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
        let x = StateVector::new(1.0, 1.2, 0.995, 0.01, 0.005, 0.99);
        let json = serde_json::to_value(x).unwrap();
        for key in ["q1", "q2", "z11", "z12", "z21", "z22"] {
            assert!(json.get(key).is_some(), "missing key {key}");
        }
    }
}
