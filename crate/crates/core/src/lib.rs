//! Simulation laboratory for jump SDEs with monotone non-Lipschitz
//! coefficients: path simulation, reflection-type coupling, Girsanov
//! bridges and ergodicity diagnostics.

pub mod coupling;
pub mod ergodic;
pub mod experiment;
pub mod error;
pub mod girsanov;
pub mod matops;
pub mod model;
pub mod observable;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{ConfigIssue, Error, Result};
