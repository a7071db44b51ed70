//! Graph-level anomaly detection through Rayleigh Quotient spectral analytics.
//!
//! The crate provides the full pipeline: TUDataset ingestion and synthetic
//! perturbation corpora, sparse graph Laplacians with a dense
//! eigendecomposition oracle, Chebyshev-approximated graph wavelet filtering
//! with RQ-pooling, and class-balanced focal-loss training with reverse-mode
//! gradients.
//!
//! All numerical kernels are generic over the scalar type through
//! [`scalar::Scalar`]; the `*64` aliases below fix the default `f64`
//! instantiation the CLI and the verification suites use.

pub mod dataset;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod spectral;
pub mod train;
pub mod wavelet;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mat64 = linalg::DenseMatrix<f64>;
pub type SparseSym64 = linalg::SparseSymMatrix<f64>;
pub type Decomposition64 = linalg::SpectralDecomposition<f64>;
pub type GraphRecord64 = dataset::GraphRecord<f64>;
pub type Dataset64 = dataset::Dataset<f64>;
pub type Params64 = model::ModelParams<f64>;
pub type Bank64 = wavelet::WaveletBank<f64>;
