//! Fully connected feed-forward network engine for ranked multi-class
//! profiling of normalized survey data.
//!
//! The crate covers the whole pipeline:
//!
//! - [`data`]: schema-driven CSV ingestion, range normalization, splits and batches;
//! - [`synth`]: a reproducible synthetic survey generator with median-preserving augmentation;
//! - [`nn`]: dense ReLU/Softmax layers, dropout, cross-entropy and backpropagation;
//! - [`train`]: mini-batch training with SGD or Adam, per-epoch metrics and dead-ReLU diagnostics;
//! - [`io`]: versioned model files, prediction, ranked profiles and augmented CSV export.
//!
//! All randomness is derived from explicit seeds. With the `parallel`
//! feature (on by default) per-sample work is spread over a rayon pool; the
//! result is bit-identical to [`Execution::Sequential`].

pub mod data;
pub mod error;
pub mod exec;
pub mod io;
pub mod linalg;
pub mod nn;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use exec::Execution;
pub use linalg::{Matrix, Vector};
