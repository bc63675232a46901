//! AE-SMPN: a network performance evaluation model.
//!
//! Predicts per-flow average delay on a network snapshot by combining
//! autoencoder feature extraction, LSTM-based message passing over flows,
//! L2 links and L3 links, and a skip-connected MLP readout. Ships with a
//! dense-tensor reverse-mode autodiff engine, an M/M/1 queueing data
//! generator, and an Adam/MAPE training loop.
//!
//! The `parallel` feature (default on) fans dataset generation and
//! evaluation out over rayon; disable it for a fully sequential build.

pub mod data;
pub mod error;
pub mod gradsuite;
pub mod model;
pub mod nn;
pub mod numerics;
pub mod par;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
