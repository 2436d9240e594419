//! Attractive deposition processes on the integer lattice: rate models,
//! stationary measures, hydrodynamic flux, exact simulation, basic coupling
//! with second class particles, the microscopic concavity coupling, exact
//! small-system oracles and a statistical experiment harness.

pub mod coupling;
pub mod error;
pub mod flux;
pub mod harness;
pub mod measures;
pub mod microconcavity;
pub mod oracle;
pub mod rates;
pub mod replicate;
pub mod simulator;
pub mod stats;
pub mod sumtree;

pub use error::{Error, Result};
pub use rates::{builtin, BuiltinModel, ModelParams, RateSpec};
