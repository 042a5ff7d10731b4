use thiserror::Error;

use crate::advtrain::AdvTrainError;
use crate::attack::AttackError;
use crate::config::ConfigError;
use crate::eval::EvalError;
use crate::features::FeatureError;
use crate::model::ModelError;
use crate::netlist::NetlistError;
use crate::rewrite::RewriteError;

/// Crate-level error wrapping each module's error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Rewrite(#[from] RewriteError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    AdvTrain(#[from] AdvTrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
