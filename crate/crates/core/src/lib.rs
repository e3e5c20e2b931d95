//! i-vector speaker verification toolkit.
//!
//! The crate covers the full pipeline: diagonal-covariance UBM training,
//! Baum-Welch statistics, relevance-MAP supervectors, a family of
//! total-variability extractors (FEFA, PCA, PPCA, FA, and the supervised
//! PPLS / SPPCA variants), a whitening + length-normalization + PLDA
//! backend, verification metrics, and a synthetic corpus generator for
//! end-to-end experiments.

pub mod backend;
pub mod bench;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod io;
pub mod parallel;
pub mod pipeline;
pub mod supervector;
pub mod synth;
pub mod tvm;

pub use error::{Error, Result};
