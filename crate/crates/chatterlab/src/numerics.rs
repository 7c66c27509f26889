//! Low-level numerical kernels shared by the closed-form evaluators and solvers.
//!
//! The switching dynamics are built from exponentials with nearly equal decay
//! rates, so raw expressions such as `(1 - e^{-a t}) / a` and
//! `(e^{-a t} - e^{-b t}) / (b - a)` suffer catastrophic cancellation exactly
//! in the regimes of interest (no abandonment `θ = 0`, and `θ ≈ μ`).
//! Everything here routes through [`exp_decay_integral`] and
//! [`exp_decay_quotient`], which are uniformly accurate in the rate
//! parameters, including the degenerate limits.
//!
//! The module also provides the two root finders used throughout (plain
//! bisection for guaranteed-monotone residuals, and bracketed Newton with
//! bisection fallback for transcendental holding-time equations) and the
//! 9-significant-digit formatting used by every emitted artifact.

use thiserror::Error;

/// Errors from the bracketing root finders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    /// The supplied bracket does not enclose a sign change.
    #[error("bracket [{lo}, {hi}] does not enclose a root: f(lo) = {f_lo:.6e}, f(hi) = {f_hi:.6e}")]
    BracketWithoutRoot {
        /// Lower bracket endpoint.
        lo: f64,
        /// Upper bracket endpoint.
        hi: f64,
        /// Residual at the lower endpoint.
        f_lo: f64,
        /// Residual at the upper endpoint.
        f_hi: f64,
    },
    /// The iteration exhausted its budget without meeting the residual target.
    #[error("root refinement stalled after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence {
        /// Iterations performed before giving up.
        iterations: usize,
        /// Best residual magnitude reached.
        residual: f64,
    },
}

/// `∫₀ᵗ e^{-a s} ds = (1 - e^{-a t}) / a`, continuous in `a` through `a = 0`
/// (where the value is `t`).
///
/// Implemented as `-expm1(-a t) / a`, which is accurate for all magnitudes of
/// `a t`, unlike the textbook difference form.
#[inline]
pub fn exp_decay_integral(a: f64, t: f64) -> f64 {
    if a == 0.0 {
        t
    } else {
        -f64::exp_m1(-a * t) / a
    }
}

/// `(e^{-a t} - e^{-b t}) / (b - a)`, continuous in `(a, b)` through `b = a`
/// (where the value is `t e^{-a t}`).
///
/// This is the kernel behind every mixed-decay term of the closed forms,
/// e.g. `(e^{-θ t} - e^{-μ t}) / (μ - θ)`. It factors through
/// [`exp_decay_integral`], so it stays fully accurate when `b → a`.
#[inline]
pub fn exp_decay_quotient(a: f64, b: f64, t: f64) -> f64 {
    (-a * t).exp() * exp_decay_integral(b - a, t)
}

/// Maximum iterations for the bracketing root finders. A bisection halves the
/// bracket each step, so 200 steps exhaust `f64` resolution for any bracket.
const MAX_ROOT_ITER: usize = 200;

/// Find the root of a continuous, strictly monotone `f` on `[lo, hi]` by
/// bisection, stopping when `|f(x)| < f_tol` (with a final midpoint fallback
/// once the bracket collapses to machine width).
///
/// Either orientation (increasing or decreasing) is accepted. Endpoints whose
/// residual already meets the target are returned immediately.
///
/// # Errors
///
/// [`NumericsError::BracketWithoutRoot`] if `f(lo)` and `f(hi)` have the same
/// strict sign; [`NumericsError::NoConvergence`] if the residual target is not
/// met after the bracket has collapsed (can only happen for extremely steep
/// residual functions combined with an unrealistically small `f_tol`).
pub fn bisect_monotone(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    f_tol: f64,
) -> Result<f64, NumericsError> {
    let f_lo = f(lo);
    if f_lo.abs() < f_tol {
        return Ok(lo);
    }
    let f_hi = f(hi);
    if f_hi.abs() < f_tol {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(NumericsError::BracketWithoutRoot { lo, hi, f_lo, f_hi });
    }
    let (mut lo, mut hi, mut f_lo) = (lo, hi, f_lo);
    let mut best = (0.5 * (lo + hi), f64::INFINITY);
    for i in 0..MAX_ROOT_ITER {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid.abs() < f_tol {
            return Ok(mid);
        }
        if f_mid.abs() < best.1 {
            best = (mid, f_mid.abs());
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * lo.abs().max(hi.abs()).max(1.0) {
            // Bracket is at machine resolution; accept the best point seen.
            if best.1.is_finite() {
                return Ok(best.0);
            }
            return Err(NumericsError::NoConvergence { iterations: i + 1, residual: best.1 });
        }
    }
    Ok(best.0)
}

/// Bracketed Newton iteration with bisection fallback for a strictly
/// monotone residual `f` with derivative `df` on `[lo, hi]`.
///
/// Newton steps are taken whenever they stay inside the current bracket;
/// otherwise a bisection step is substituted.
/// The bracket is updated after every evaluation, so the method inherits the
/// bisection guarantee while converging quadratically near the root.
///
/// # Errors
///
/// Same conditions as [`bisect_monotone`].
pub fn newton_bisect(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    f_tol: f64,
) -> Result<f64, NumericsError> {
    let f_lo = f(lo);
    if f_lo.abs() < f_tol {
        return Ok(lo);
    }
    let f_hi = f(hi);
    if f_hi.abs() < f_tol {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(NumericsError::BracketWithoutRoot { lo, hi, f_lo, f_hi });
    }
    let (mut lo, mut hi, mut f_lo) = (lo, hi, f_lo);
    let mut x = 0.5 * (lo + hi);
    let mut fx = f(x);
    for _ in 0..MAX_ROOT_ITER {
        if fx.abs() < f_tol {
            return Ok(x);
        }
        // Shrink the bracket with the latest evaluation.
        if fx.signum() == f_lo.signum() {
            lo = x;
            f_lo = fx;
        } else {
            hi = x;
        }
        let d = df(x);
        let newton = x - fx / d;
        x = if d != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        fx = f(x);
        if hi - lo <= f64::EPSILON * lo.abs().max(hi.abs()).max(1.0) {
            return Ok(x);
        }
    }
    Err(NumericsError::NoConvergence { iterations: MAX_ROOT_ITER, residual: fx.abs() })
}

/// Format a float with 9 significant digits in the style of C's `%.9g`:
/// fixed notation when the decimal exponent lies in `[-4, 9)`, scientific
/// otherwise, with trailing zeros stripped.
///
/// The mapping is idempotent under a parse round trip:
/// `format_g9(format_g9(x).parse().unwrap()) == format_g9(x)`, which is what
/// makes emitted CSV files byte-stable under re-emission.
pub fn format_g9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".to_string() } else { "-inf".to_string() };
    }
    if x == 0.0 {
        // Collapse -0.0 as well: a signed zero never carries information here.
        return "0".to_string();
    }
    let neg = x < 0.0;
    // `{:.8e}` yields one digit before the point and eight after: 9 significant
    // digits, correctly rounded, with the decimal exponent after `e`.
    let sci = format!("{:.8e}", x.abs());
    let (mantissa, exp_str) = sci.split_once('e').expect("scientific format always has an exponent");
    let exp: i32 = exp_str.parse().expect("exponent is an integer");
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    debug_assert_eq!(digits.len(), 9);

    let body = if (-4..9).contains(&exp) {
        if exp >= 0 {
            let split = (exp + 1) as usize;
            let int_part = &digits[..split];
            let frac_part = digits[split..].trim_end_matches('0');
            if frac_part.is_empty() {
                int_part.to_string()
            } else {
                format!("{int_part}.{frac_part}")
            }
        } else {
            let frac = format!("{}{}", "0".repeat((-exp - 1) as usize), digits);
            format!("0.{}", frac.trim_end_matches('0'))
        }
    } else {
        let head = &digits[..1];
        let tail = digits[1..].trim_end_matches('0');
        let m = if tail.is_empty() { head.to_string() } else { format!("{head}.{tail}") };
        format!("{m}e{exp:+03}")
    };
    if neg {
        format!("-{body}")
    } else {
        body
    }
}

/// Round to 9 significant digits (the value whose shortest decimal form is
/// produced by [`format_g9`]). Used to pre-round every number placed in a JSON
/// report so that serialization is byte-deterministic.
pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    format_g9(x).parse().expect("format_g9 output is always parseable")
}
