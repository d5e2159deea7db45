//! Machine-readable failure categories and exit codes.

use serde::Serialize;
use tgrn_core::bench::BenchError;
use tgrn_core::grn::GrnError;
use tgrn_core::ingest::IngestError;
use tgrn_core::nn::NnError;
use tgrn_core::tgraph::GraphError;
use tgrn_core::trajectory::TrajectoryError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Internal,
    Config,
    Io,
    InvalidInput,
    DegenerateData,
    Numerical,
}

impl Category {
    pub fn exit_code(self) -> i32 {
        match self {
            Category::Internal => 1,
            Category::Config => 2,
            Category::Io => 3,
            Category::InvalidInput => 4,
            Category::DegenerateData => 5,
            Category::Numerical => 6,
        }
    }
}

/// A stage failure carrying its category.
#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct Tagged {
    pub category: Category,
    pub message: String,
}

pub fn tagged(category: Category, message: impl Into<String>) -> anyhow::Error {
    Tagged {
        category,
        message: message.into(),
    }
    .into()
}

fn ingest(e: &IngestError) -> Category {
    match e {
        IngestError::Io { .. } => Category::Io,
        IngestError::EmptyAfterFiltering { .. } | IngestError::NoSnapshots | IngestError::AllGenesMissing(_) => {
            Category::DegenerateData
        }
        IngestError::Vocab(g) => graph(g),
        _ => Category::InvalidInput,
    }
}

fn graph(e: &GraphError) -> Category {
    match e {
        GraphError::Io(_) => Category::Io,
        GraphError::EmptyInput | GraphError::TooFewSnapshots { .. } | GraphError::VocabTooSmall(_) => {
            Category::DegenerateData
        }
        _ => Category::InvalidInput,
    }
}

fn nn(e: &NnError) -> Category {
    match e {
        NnError::Numerical(_) => Category::Numerical,
        NnError::InvalidConfig(_) => Category::Config,
        NnError::Checkpoint(_) => Category::InvalidInput,
        _ => Category::Internal,
    }
}

fn bench(e: &BenchError) -> Category {
    match e {
        BenchError::Nn(n) => nn(n),
        BenchError::Io(_) => Category::Io,
        BenchError::InvalidConfig(_) => Category::Config,
        BenchError::Schema(_) | BenchError::ConfigMismatch { .. } => Category::InvalidInput,
        _ => Category::DegenerateData,
    }
}

fn trajectory(e: &TrajectoryError) -> Category {
    match e {
        TrajectoryError::InvalidParameter(_) | TrajectoryError::KTooLarge { .. } => Category::Config,
        TrajectoryError::EigSolverFailure(_) => Category::Numerical,
        _ => Category::DegenerateData,
    }
}

fn grn(e: &GrnError) -> Category {
    match e {
        GrnError::InvalidParams(_) => Category::Config,
        GrnError::Graph(g) => graph(g),
        GrnError::DimensionMismatch(_) => Category::InvalidInput,
        _ => Category::DegenerateData,
    }
}

/// First recognizable error in the chain decides the category.
pub fn categorize(err: &anyhow::Error) -> Category {
    for cause in err.chain() {
        if let Some(t) = cause.downcast_ref::<Tagged>() {
            return t.category;
        }
        if let Some(e) = cause.downcast_ref::<IngestError>() {
            return ingest(e);
        }
        if let Some(e) = cause.downcast_ref::<GraphError>() {
            return graph(e);
        }
        if let Some(e) = cause.downcast_ref::<BenchError>() {
            return bench(e);
        }
        if let Some(e) = cause.downcast_ref::<NnError>() {
            return nn(e);
        }
        if let Some(e) = cause.downcast_ref::<TrajectoryError>() {
            return trajectory(e);
        }
        if let Some(e) = cause.downcast_ref::<GrnError>() {
            return grn(e);
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return Category::Config;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return Category::Io;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() || cause.downcast_ref::<csv::Error>().is_some() {
            return Category::InvalidInput;
        }
    }
    Category::Internal
}

#[derive(Serialize)]
pub struct ErrorLine<'a> {
    pub stage: &'a str,
    pub category: Category,
    pub message: String,
}
