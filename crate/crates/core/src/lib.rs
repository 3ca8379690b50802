//! Numerical lab for mean-field limits of multilayer networks.

pub mod diagnostics;
pub mod embedding;
pub mod error;
pub mod io;
pub mod matrix;
pub mod mf;
pub mod model;
pub mod net;
pub mod reduce;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Double-precision instantiations.
pub type Weights64 = net::Weights<f64>;
pub type FiniteTrajectory64 = net::FiniteTrajectory<f64>;
pub type Sample64 = model::Sample<f64>;
pub type DataModel64 = model::DataModel<f64>;
pub type ParticleSystem64 = mf::ParticleSystem<f64>;
pub type MfProblem64 = mf::MfProblem<f64>;
pub type MfTrajectory64 = mf::MfTrajectory<f64>;
pub type AuxPairState64 = mf::AuxPairState<f64>;
pub type Matrix64 = matrix::Matrix<f64>;
