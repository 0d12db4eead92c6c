//! Criterion benchmarks for the signal and model kernels; see `benches/`.

use pcg_core::nn::Rng;
use pcg_core::segment::{sine_corpus, SegmentMatrix};

/// Seeded sine rows with the corpus segment length.
pub fn rows(n: usize, seed: u64) -> SegmentMatrix {
    sine_corpus(n, 110, (20.0, 40.0), seed).expect("valid sine corpus")
}

pub fn noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    (0..n).map(|_| rng.normal()).collect()
}
