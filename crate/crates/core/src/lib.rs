//! Carré du champ matrices of Poisson functionals by the lent particle method.

pub mod chaos;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod functionals;
pub mod intensity;
pub mod lent_particle;
pub mod plot;
pub mod point_process;
pub mod quadrature;
pub mod registry;
pub mod rng;
pub mod run;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
