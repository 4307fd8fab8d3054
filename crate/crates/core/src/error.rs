use thiserror::Error;

use crate::{births, data, likelihood, mcmc, model, projection, synth, validation};

/// Crate-wide error, wrapping the error of each module.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Ingest(#[from] data::IngestError),
    #[error(transparent)]
    Likelihood(#[from] likelihood::LikelihoodError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Mcmc(#[from] mcmc::McmcError),
    #[error(transparent)]
    Projection(#[from] projection::ProjectionError),
    #[error(transparent)]
    Births(#[from] births::BirthsError),
    #[error(transparent)]
    Validation(#[from] validation::ValidationError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
