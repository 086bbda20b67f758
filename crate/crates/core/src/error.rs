//! Crate-level error with process exit-code mapping: 0 success, 1 config
//! error, 2 data error, 3 internal invariant violation.

use thiserror::Error;

use crate::config::ConfigError;
use crate::defense::DefenseError;
use crate::flow::FlowError;
use crate::fusion::FusionError;
use crate::ingest::IngestError;
use crate::models::ModelError;
use crate::preprocess::PreprocessError;
use crate::synth::SynthError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("data: {0}")]
    Data(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Defense(#[from] DefenseError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Internal(_) => 3,
            _ => 2,
        }
    }
}
