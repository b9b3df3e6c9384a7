//! Column networks for collective classification on multi-relational graphs,
//! with optional human advice injected through multiplicative soft gates.
//!
//! The crate provides:
//!
//! - [`graph`]: TSV-backed multi-relational knowledge graphs with sparse
//!   per-entity features and train/test splitting.
//! - [`numerics`]: the small dense linear-algebra kernel, activations,
//!   Glorot initialization, Adam, and finite-difference gradient checking.
//! - [`model`]: the column network itself — layer-wise context aggregation,
//!   gated hidden units, softmax output, and hand-derived backprop.
//! - [`advice`]: the preference-rule language (parser and validator), the
//!   conjunctive rule matcher that builds advice masks, and the gate
//!   computation from stored advice gradients.
//! - [`train`]: the epoch loop interleaving gate refresh, gated
//!   forward/backward, and full-batch Adam updates.
//! - [`metrics`] and [`harness`]: micro-F1 / AUC-PR and the three
//!   experimental protocols (epoch curves, sample curves, alpha sweeps).
//! - [`synth`]: a generator for relational datasets with planted rules and
//!   ground-truth advice, used by the acceptance suite.
//!
//! The `kcln` binary exposes the pipeline as subcommands; see the README.

pub mod advice;
pub mod config;
pub mod error;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
