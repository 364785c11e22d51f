use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How decay curves are localized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveMode {
    /// One curve fitted from every pair.
    Global,
    /// One curve per reference section, pairs weighted by a Gaussian
    /// window around the reference.
    Local,
}

/// Solver hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub iterations: usize,
    /// Fraction of each shift applied per iteration, in `(0, 1]`.
    pub shift_damping: f64,
    pub curve_mode: CurveMode,
    /// Width of the curve-fit window; `None` means a quarter of the
    /// section count.
    pub wf_sigma: Option<f64>,
    /// Width of the quality/shift vote window; `None` means the
    /// comparison range of the matrix.
    pub ws_sigma: Option<f64>,
    /// Upper clamp of the quality multipliers.
    pub m_max: f64,
    /// Pull of each quality multiplier toward 1.
    pub quality_regularization: f64,
    pub allow_reorder: bool,
    /// Recorded in reports; the solver itself draws no random numbers.
    pub seed: u64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            iterations: 100,
            shift_damping: 0.1,
            curve_mode: CurveMode::Global,
            wf_sigma: None,
            ws_sigma: None,
            m_max: 4.0,
            quality_regularization: 0.1,
            allow_reorder: true,
            seed: 0,
        }
    }
}

/// Window widths after defaults have been applied for a given matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Windows {
    pub wf_sigma: f64,
    pub ws_sigma: f64,
}

impl EstimateOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.shift_damping > 0.0 && self.shift_damping <= 1.0) {
            return bad(format!("shift damping must be in (0, 1], got {}", self.shift_damping));
        }
        for (name, s) in [("wf_sigma", self.wf_sigma), ("ws_sigma", self.ws_sigma)] {
            if let Some(s) = s {
                if !(s > 0.0) {
                    return bad(format!("{name} must be positive, got {s}"));
                }
            }
        }
        if !(self.m_max >= 1.0) || !self.m_max.is_finite() {
            return bad(format!("m_max must be at least 1, got {}", self.m_max));
        }
        if !(self.quality_regularization >= 0.0) {
            return bad(format!(
                "quality regularization must be non-negative, got {}",
                self.quality_regularization
            ));
        }
        Ok(())
    }

    pub fn windows(&self, n: usize, range: usize) -> Windows {
        Windows {
            wf_sigma: self.wf_sigma.unwrap_or(n as f64 / 4.0),
            ws_sigma: self.ws_sigma.unwrap_or(range.max(1) as f64),
        }
    }
}

/// `exp(-d^2 / (2 sigma^2))`; an infinite sigma gives a uniform window.
#[inline]
pub fn gaussian(d: f64, sigma: f64) -> f64 {
    if sigma.is_infinite() {
        1.0
    } else {
        (-(d * d) / (2.0 * sigma * sigma)).exp()
    }
}
