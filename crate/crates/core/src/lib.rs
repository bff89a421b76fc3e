//! Construction and numerical verification of the six-dimensional
//! [2211]-type rigid h-space metrics.

pub mod cli;
pub mod config;
pub mod error;
pub mod funcjet;
pub mod geodesic;
pub mod hspace2211;
pub mod hyperjet;
pub mod metrics;
pub mod tensor;
pub mod tensorcalc;
pub mod verify;

pub use error::GeometryError;
