//! Reproduction-number estimation, policy-based country clustering, a
//! two-pathway recurrent case forecaster and counterfactual lockdown
//! scenarios.

pub mod clustering;
pub mod data;
pub mod forecast;
pub mod neural;
pub mod pipeline;
pub mod rt;
pub mod synth;
pub mod whatif;

use thiserror::Error;

/// Any failure from the pipeline stages.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Rt(#[from] rt::RtError),
    #[error(transparent)]
    Cluster(#[from] clustering::ClusterError),
    #[error(transparent)]
    Neural(#[from] neural::NeuralError),
    #[error(transparent)]
    Forecast(#[from] forecast::ForecastError),
    #[error(transparent)]
    Scenario(#[from] whatif::ScenarioError),
    #[error("unknown country `{0}`")]
    UnknownCountry(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
