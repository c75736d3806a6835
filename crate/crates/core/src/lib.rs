//! Generalized Kimura diffusions on corner domains: operators, path
//! simulation with boundary absorption, Monte Carlo estimators, degenerate
//! Kolmogorov solvers and barrier checks.

pub mod error;
pub mod estimators;
pub mod geometry;
pub mod linalg;
pub mod operator;
pub mod pde;
pub mod quad;
pub mod sde;
pub mod verify;

pub use error::{Error, Result};
pub use geometry::{DomainSpec, Point, StratumId};
pub use operator::KimuraOperator;
