//! Counterdiabatic QAOA: derive QAOA angle schedules from counterdiabatic
//! annealing protocols by matching BCH and Magnus generators, and map optimized
//! angles back to continuous schedules.

pub mod agp;
pub mod dense;
pub mod error;
pub mod expand;
pub mod matching;
pub mod model;
pub mod optim;
pub mod oracle;
pub mod pauli;
pub mod quad;
pub mod schedule;
pub mod sim;

pub use error::{Error, Result};
