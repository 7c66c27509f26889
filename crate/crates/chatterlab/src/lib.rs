//! Analysis toolkit for threshold-based service sharing between two
//! overloaded customer classes and two server pools (the symmetric X
//! topology).
//!
//! The control activates sharing when one queue exceeds the other by a
//! threshold `κ` and releases it when the borrowed pool's stale content
//! drains to `τ`. In heavy overload this feedback loop can lock into
//! persistent switching oscillations instead of settling: each half-cycle
//! the roles of the two classes swap, service capacity is wasted on slow
//! cross-trained work, and the queues grow without bound even though the
//! offered load is subcritical.
//!
//! The crate provides:
//!
//! * [`model`] — parameters, state vectors, symmetry and validity checks;
//! * [`numerics`] — stable exponential kernels, root finding, deterministic
//!   9-significant-digit formatting;
//! * [`fluid`] — exact piecewise closed forms of the switching fluid model,
//!   switching-time solvers, and a hybrid trajectory simulator;
//! * [`equilibrium`] — the half-cycle return map, periodic-equilibrium
//!   search, trajectory classification, and an interval-arithmetic
//!   certificate of endless oscillation;
//! * [`approx`] — a tractable jump-system approximation (no abandonment),
//!   its one-dimensional return map, contraction estimates, a back-of-envelope
//!   design heuristic, and throughput/collapse diagnostics;
//! * [`ctmc`] — the finite-`n` Markov chain, event-driven simulation, and
//!   convergence/sanity checks against the fluid model;
//! * [`svg`] — dependency-free deterministic SVG plots;
//! * [`report`] — JSON run reports with stable rounding;
//! * [`cli`] — the `chatterlab` command-line interface.

pub mod approx;
pub mod cli;
pub mod ctmc;
pub mod equilibrium;
pub mod fluid;
pub mod model;
pub mod numerics;
pub mod report;
pub mod svg;
