//! Computational core for language-model-oriented human mobility modeling:
//! semantic location tokenization with a residual-quantized autoencoder,
//! codeword-token embedding alignment, trajectory preprocessing, statistical
//! trajectory features, generation metrics, distribution-matching rewards and
//! a minimal-edit trajectory refiner, plus the instruction-tuning exporters
//! that tie them together.

pub mod align;
pub mod error;
pub mod export;
pub mod io;
pub mod nn;
pub mod metrics;
pub mod profile;
pub mod refine;
pub mod reward;
pub mod rq;
pub mod stats;
pub mod traj;

pub use error::{Error, Result};

/// Version of the on-disk artifact formats (codebook, embedding table).
pub const ARTIFACT_VERSION: u32 = rq::CODEBOOK_FORMAT_VERSION;
