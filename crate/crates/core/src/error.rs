use crate::agents::TrainError;
use crate::config::ConfigError;
use crate::engine::EngineError;
use crate::eval::{EvalError, ScenarioError};
use crate::features::{IngestError, RegistryError};

/// Any failure surfaced by the crate's top-level workflows.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("training the ML agent: {0}")]
    Train(#[from] TrainError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
