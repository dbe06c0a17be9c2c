//! Data-driven Bayesian inverse problems with generative transport-map priors.

pub mod bayes;
pub mod darcy;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod mcmc;
pub mod measures;
pub mod ot;
pub mod rng;
pub mod scalar;
pub mod transport;

pub use error::{Error, Result};
pub use rng::RngSeed;
pub use scalar::Scalar;

pub type PointCloud64 = measures::PointCloud<f64>;
pub type PointCloud32 = measures::PointCloud<f32>;
pub type MapStack64 = transport::ResidualMapStack<f64>;
pub type MapStack32 = transport::ResidualMapStack<f32>;
pub type Likelihood64 = bayes::LikelihoodSpec<f64>;
pub type Likelihood32 = bayes::LikelihoodSpec<f32>;
pub type DarcyConfig64 = darcy::DarcyConfig<f64>;
pub type GridField64 = darcy::GridField<f64>;
