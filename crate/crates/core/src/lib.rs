pub mod error;
pub mod nn;

pub use error::{Error, Result};
pub mod ingest;
pub mod preprocess;
pub mod segment;
pub mod quality;
pub mod metrics;
pub mod wavenet;
pub mod dgan;
pub mod diffusion;
pub mod pipeline;
