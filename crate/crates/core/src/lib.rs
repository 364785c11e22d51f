//! Estimation of the z-position of every section in a serial-section
//! microscopy stack from the decay of image similarity along the series.
//!
//! The pipeline runs in four stages, each in its own module:
//!
//! - [`similarity`] computes a banded matrix of normalized
//!   cross-correlations between sections,
//! - [`inference`] jointly fits a similarity decay curve, per-section
//!   quality multipliers and per-section positions to that matrix,
//! - [`render`] resamples the stack on the estimated coordinates,
//! - [`synthetic`] produces instances with known ground truth to score the
//!   estimate.
//!
//! [`stackio`] holds the file formats shared by all of them.

// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fmt;
pub mod inference;
pub mod psm;
pub mod render;
pub mod similarity;
pub mod stack;
pub mod stackio;
pub mod synthetic;

pub use error::{Error, Result};
pub use inference::{estimate_positions, CurveMode, CurveSet, DecayCurve, EstimateOptions, SolverResult};
pub use psm::PairwiseSimilarityMatrix;
pub use similarity::{compute_blockwise_psm, compute_psm, ncc, BlockGrid};
pub use stack::{Image, ImageStack, Plane, StackData};
