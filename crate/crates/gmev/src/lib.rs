//! Route-choice models from the generalized multivariate extreme value
//! family: twelve closed-form models produced by one probability formula,
//! together with their analytic moments, a multinomial-probit ground-truth
//! simulator, maximum-likelihood estimation and validation, and a
//! stochastic-user-equilibrium solver.
//!
//! The numeric core is generic over the scalar type (see [`scalar::Scalar`]);
//! `f64` is the default precision used by the CLI and the bundled benchmark,
//! and the probit simulator is `f64`-only since it leans on LAPACK-style
//! factorizations and a concrete RNG.

pub mod benchmark;
pub mod error;
pub mod estimation;
pub mod matrix;
pub mod mnp;
pub mod model;
pub mod moments;
pub mod network;
pub mod optim;
pub mod refroute;
pub mod scalar;
pub mod spec;
pub mod sue;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

/// Default scalar type for applications that do not need to pick one.
pub type DefaultScalar = f64;

/// Route set at default precision.
pub type RouteSet = network::RouteSet<DefaultScalar>;
/// Generating function at default precision.
pub type GeneratingFunction = model::GeneratingFunction<DefaultScalar>;
/// Utility specification at default precision.
pub type UtilitySpec = model::UtilitySpec<DefaultScalar>;
/// Model specification at default precision.
pub type ModelSpec = spec::ModelSpec<DefaultScalar>;
/// Model parameters at default precision.
pub type ModelParams = spec::ModelParams<DefaultScalar>;
/// Choice dataset at default precision.
pub type ChoiceDataset = estimation::ChoiceDataset<DefaultScalar>;
/// Equilibrium problem at default precision.
pub type SueProblem = sue::SueProblem<DefaultScalar>;
