//! Fixtures shared by the benchmarks.

use zpos_core::synthetic::{generate_volume, sample_sections, synthesize_psm, Decay, GroundTruth};
use zpos_core::{ImageStack, PairwiseSimilarityMatrix};

/// Jittered exponential-decay instance of `n` sections.
pub fn jitter_psm(n: usize, range: usize, seed: u64) -> PairwiseSimilarityMatrix {
    let truth = GroundTruth::jittered(n, 0.4, Decay::Exponential { tau: 3.0 }, seed).expect("valid truth");
    synthesize_psm(&truth, 0.0, range, seed).expect("valid matrix")
}

/// `n` jittered sections of a smooth random volume.
pub fn section_stack(width: usize, height: usize, n: usize, seed: u64) -> ImageStack {
    let volume = generate_volume(width, height, n + 4, 2.0, seed).expect("valid volume");
    let truth = GroundTruth::jittered(n, 0.4, Decay::Exponential { tau: 3.0 }, seed).expect("valid truth");
    let z: Vec<f64> = truth.positions.iter().map(|p| p + 2.0).collect();
    sample_sections(&volume, &z).expect("positions inside the volume")
}
