use super::band::Band;
use super::curve::{fit_curves_band, CurveSet};
use super::objective::{objective_band, ObjectiveTerms};
use super::options::EstimateOptions;
use super::quality::quality_band;
use super::shifts::{apply_shifts, shifts_band};
use crate::error::{Error, Result};
use crate::psm::PairwiseSimilarityMatrix;

/// Final state of a solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverResult {
    /// Section z-positions in grid units, spanning `[0, n - 1]`.
    pub coordinates: Vec<f64>,
    pub quality: Vec<f64>,
    /// Curves of the last iteration.
    pub curves: CurveSet,
    pub objective_history: Vec<f64>,
    pub iterations_run: usize,
}

impl SolverResult {
    /// Smallest and largest gap between neighbouring sections, in
    /// coordinate order.
    pub fn spacing_range(&self) -> (f64, f64) {
        spacing_range(&self.coordinates)
    }
}

pub fn spacing_range(c: &[f64]) -> (f64, f64) {
    let mut sorted = c.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)))
}

/// State handed to an observer after each iteration.
#[derive(Debug)]
pub struct IterationState<'a> {
    pub iteration: usize,
    /// Curves, multipliers and shifts computed in this iteration.
    pub curves: &'a CurveSet,
    pub quality: &'a [f64],
    pub shifts: &'a [f64],
    /// Coordinates after the shifts were applied.
    pub coordinates: &'a [f64],
    pub objective: ObjectiveTerms,
}

/// Estimates section positions from a similarity matrix.
pub fn estimate_positions(psm: &PairwiseSimilarityMatrix, opts: &EstimateOptions) -> Result<SolverResult> {
    estimate_positions_with(psm, opts, |_| {})
}

/// Like [`estimate_positions`], calling `observer` after every iteration.
///
/// Each iteration fits the decay curves at the current positions, updates
/// the quality multipliers, then moves every section by the damped mean
/// of its position votes and renormalizes.
pub fn estimate_positions_with(
    psm: &PairwiseSimilarityMatrix,
    opts: &EstimateOptions,
    mut observer: impl FnMut(&IterationState<'_>),
) -> Result<SolverResult> {
    opts.validate()?;
    let n = psm.n();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need at least 3 sections, got {n}")));
    }
    let band = Band::new(psm);
    if let Some(z) = band.rows.iter().position(|r| r.is_empty()) {
        return Err(Error::NoPairs { section: z });
    }
    let windows = opts.windows(n, psm.range());
    let mut c: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let mut m = vec![1.0; n];
    let mut history = Vec::with_capacity(opts.iterations);
    let mut last_curves = None;

    for iteration in 0..opts.iterations {
        let at = |source: Error| Error::Iteration {
            iteration,
            source: Box::new(source),
        };
        let curves = fit_curves_band(&band, &c, &m, opts.curve_mode, windows.wf_sigma).map_err(at)?;
        m = quality_band(&band, &curves, &c, &m, opts, windows.ws_sigma).map_err(at)?;
        let s = shifts_band(&band, &curves, &c, &m, windows.ws_sigma);
        let terms = objective_band(&band, &curves, &c, &m, &s, windows);
        c = apply_shifts(&c, &s, opts).map_err(at)?;
        history.push(terms.total());
        observer(&IterationState {
            iteration,
            curves: &curves,
            quality: &m,
            shifts: &s,
            coordinates: &c,
            objective: terms,
        });
        last_curves = Some(curves);
    }

    Ok(SolverResult {
        coordinates: c,
        quality: m,
        curves: last_curves.expect("at least one iteration"),
        iterations_run: history.len(),
        objective_history: history,
    })
}
