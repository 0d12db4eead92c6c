//! Minimal neural-network substrate: tensors, a fixed layer vocabulary with
//! hand-written backward passes, Adam, losses, μ-law companding and
//! finite-difference gradient verification. All arithmetic is `f64`.

pub mod activations;
pub mod adam;
pub mod conv;
pub mod curve;
pub mod dense;
pub mod gradcheck;
pub mod linalg;
pub mod loss;
pub mod lstm;
pub mod mulaw;
pub mod params;
pub mod rng;
pub mod tensor;

pub use activations::{gated_activation, sigmoid, Gated};
pub use adam::{adam_update, AdamConfig, AdamState};
pub use conv::{stacked_receptive_field, Conv1d, Padding};
pub use curve::LossCurve;
pub use dense::Dense;
pub use gradcheck::{finite_diff_check, finite_diff_check_sampled, relative_error, GradCheckReport};
pub use lstm::{Lstm, LstmState, LstmStepCache};
pub use mulaw::{mu_law_decode, mu_law_encode};
pub use params::ModelParams;
pub use rng::Rng;
pub use tensor::Tensor;

/// Draws an index from a probability vector.
pub fn sample_categorical(probs: &[f64], rng: &mut Rng) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
