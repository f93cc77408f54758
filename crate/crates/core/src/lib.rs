//! Gaussian variational inference motion planning over Gauss-Markov
//! trajectory priors, with a Gauss-Newton MAP baseline.

pub mod environment;
pub mod error;
pub mod factors;
pub mod gp_prior;
pub mod gvi;
pub mod map;
pub mod output;
pub mod quadrature;
pub mod runner;
pub mod scenario;
pub mod sparse;

pub use error::{Error, Result};
pub use factors::{Factor, FactorGraph, FactorKind};
pub use gvi::{GaussianTrajectory, SolverConfig, Status};
pub use sparse::{BlockTridiagonal, LdlFactorization, PartialCovariance};
