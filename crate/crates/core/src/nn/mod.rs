//! Minimal tensor engine: reverse-mode tape, layers, recurrent cells and
//! the Adam optimizer.

mod adam;
mod graph;
mod layers;
mod params;
mod tape;

use thiserror::Error;

pub use adam::{Adam, AdamConfig};
pub use graph::{GraphInput, Neighbourhoods, SparseAdj};
pub use layers::{dropout, ChebConv, GatConv, GcnConv, GraphGruCell, GruCell, Linear, MatrixGru};
pub use params::{Bound, Init, Param, ParamId, ParamStore, ARCHIVE_VERSION};
pub use tape::{Gradients, Tape, Var};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("Chebyshev convolution needs a symmetric adjacency")]
    AsymmetricAdjacency,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
