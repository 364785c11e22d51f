//! Joint estimation of section positions, per-section quality and the
//! similarity decay curve.
//!
//! The problem has no closed form, so it is solved by alternating three
//! steps until the iteration budget is spent:
//!
//! 1. fit decay curves `rho` to the quality-corrected similarities at the
//!    current positions ([`fit_curves`]),
//! 2. re-estimate the quality multipliers `m` against those curves
//!    ([`estimate_quality`]),
//! 3. let every pair vote for a position through the inverted curve and
//!    move each section by a damped fraction of its mean vote
//!    ([`compute_shifts`], [`apply_shifts`]).
//!
//! Two constraints rule out trivial solutions: every curve is pinned to 1
//! at distance 0, and the coordinates are renormalized after every step so
//! the first and last section stay at `0` and `n - 1`. Multipliers are
//! modelled as attenuation compensation and clamped to `[1, m_max]`.

mod band;
mod curve;
mod objective;
mod options;
mod quality;
mod shifts;
mod solver;

pub use curve::{fit_curves, fit_decay_curve, pav_nonincreasing, CurveSet, DecayCurve};
pub use objective::{objective, ObjectiveTerms};
pub use options::{gaussian, CurveMode, EstimateOptions, Windows};
pub use quality::estimate_quality;
pub use shifts::{apply_shifts, compute_shifts, renormalize, MIN_ORDER_GAP, MIN_SPAN};
pub use solver::{estimate_positions, estimate_positions_with, spacing_range, IterationState, SolverResult};
