//! A self-contained laboratory for camera-aided mmWave beam alignment in
//! vehicle-to-infrastructure settings.
//!
//! The crate simulates seeded traffic scenes around a road-side unit (RSU),
//! synthesizes geometry-consistent multipath channels (line of sight, ground
//! bounce, and first-order specular reflections off vehicle and building
//! faces), sweeps DFT beam codebooks for optimal beam-pair labels, and builds
//! the camera-derived learning inputs: the vehicle distribution feature (VDF),
//! the scene image feature (SIF), and beam coherence time (BCT) labels.
//!
//! On top of the data pipeline sit a small transformer-fusion beam classifier
//! with hand-written gradients, a location-only nearest-neighbour baseline, a
//! BCT group classifier, and the evaluation metrics: achievable transmission
//! rate ratio for beam selection (ATRR) and for alignment policies, plus BCT
//! prediction accuracy (BCTPA).
//!
//! Everything is deterministic given a master seed. Data-parallel stages run
//! on rayon when the default `parallel` feature is enabled and fall back to
//! sequential execution when it is disabled; results are identical either way.

pub mod beams;
pub mod channel;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod exec;
pub mod features;
pub mod geometry;
pub mod pipeline;
pub mod predict;
pub mod scenario;
pub mod workflow;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value failed validation. `field` is the path of the
    /// offending entry in the run-config file.
    #[error("invalid config `{field}`: {message}")]
    Config { field: String, message: String },
    /// Inconsistent inputs detected at runtime (shape mismatches, missing
    /// features, incompatible checkpoints).
    #[error("{0}")]
    Invalid(String),
    /// Training diverged (non-finite loss).
    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },
    #[error("malformed file `{path}`: {message}")]
    Format { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::Invalid(message.into())
    }

    /// True for errors that indicate bad user input rather than a runtime
    /// failure; the CLI maps these to exit code 1.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Invalid(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
