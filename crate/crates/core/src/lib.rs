//! Temporal gene-regulatory-network forecasting.
//!
//! Expression counts are ordered along a diffusion pseudotime, cut into
//! bins, and each bin yields one regulatory snapshot. The resulting
//! temporal graph feeds a small reverse-mode tensor engine, a set of static
//! and temporal graph models, and a live-update benchmark that forecasts
//! links, expression changes and hub centrality one snapshot ahead.
//!
//! Numeric kernels are generic over [`scalar::Scalar`]; the aliases below
//! fix the common instantiations.

pub mod bench;
pub mod digest;
pub mod grn;
pub mod ingest;
pub mod linalg;
pub mod models;
pub mod nn;
pub mod scalar;
pub mod seed;
pub mod sparse;
pub mod synthetic;
pub mod tgraph;
pub mod trajectory;

pub use scalar::Scalar;

pub type Tape64 = nn::Tape<f64>;
pub type Tape32 = nn::Tape<f32>;
pub type ParamStore64 = nn::ParamStore<f64>;
pub type ParamStore32 = nn::ParamStore<f32>;
pub type Model64 = models::Model<f64>;
pub type Model32 = models::Model<f32>;
pub type GraphInput64 = nn::GraphInput<f64>;
pub type GraphInput32 = nn::GraphInput<f32>;
pub type Csr64 = sparse::CsrMatrix<f64>;
pub type Csr32 = sparse::CsrMatrix<f32>;
