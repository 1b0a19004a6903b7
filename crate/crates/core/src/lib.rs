//! Sequence regression with feed-forward and recurrent networks trained by
//! plain per-sample steepest descent.
//!
//! The crate is `no_std` (with `alloc`) and covers everything that is pure
//! computation:
//!
//! - [`linalg`]: dense vectors and matrices, the logistic function and a
//!   fully specified SplitMix64 generator.
//! - [`ffnn`]: one-hidden-layer network, exact gradients, SGD training.
//! - [`rnn`]: Elman-style network trained with backpropagation through time,
//!   error injected only at the last step.
//! - [`lstm`]: single-layer LSTM and bidirectional LSTM baselines.
//! - [`knowledge`]: temporal envelopes `f(i)`, per-segment label infusion and
//!   clip-level reconstruction.
//! - [`dataset`]: clips, synthetic fade-envelope generation, nested splits.
//! - [`metrics`]: MSE, Pearson correlation, clip-level evaluation.
//! - [`gradcheck`]: central-difference gradient oracle.
//!
//! File formats, experiment sweeps and the command-line tool live in the
//! `kffnn` companion crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod error;
pub mod ffnn;
pub mod gradcheck;
pub mod knowledge;
pub mod linalg;
pub mod lstm;
pub mod metrics;
pub mod model;
pub mod params;
pub mod rnn;
pub mod train;

pub use dataset::{Clip, Dataset, Segment};
pub use error::{Error, Result};
pub use ffnn::FfnnModel;
pub use knowledge::Envelope;
pub use linalg::{sigmoid, Matrix, Rng, Vector};
pub use lstm::LstmModel;
pub use model::{ModelKind, OutputActivation, TrainedModel};
pub use rnn::RnnModel;
pub use train::TrainConfig;
