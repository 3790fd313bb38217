pub mod constants;
pub mod covariance;
pub mod error;
pub mod estimators;
pub mod fieldsim;
pub mod geometry;
pub mod harness;
mod io;
pub mod scaling;

pub use error::{Error, Result};
