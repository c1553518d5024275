//! Multisource multicast over capacitated DAGs with correlated side information.
//!
//! The crate decides feasibility, computes minimum-cost per-edge rates for one
//! or many clients, and for the finite linear source model builds and checks an
//! explicit network code.

pub mod entropy;
pub mod error;
pub mod feasibility;
pub mod field;
pub mod lp;
pub mod model;
pub mod multi;
pub mod netcode;
pub mod problem;
pub mod rational;
pub mod single;
pub mod submodular;
pub mod subset;

pub use error::{Error, Result};
pub use problem::Problem;
pub use rational::Rational;
pub use subset::Subset;
