//! Certified numerics for one-dimensional chains and Gibbs specifications.

pub mod certified;
pub mod error;
pub mod kernels;
pub mod lattice;
pub mod model;
pub mod oracle;
pub mod rates;
pub mod report;
pub mod transport;

pub use certified::CertifiedValue;
pub use error::{Error, Result};
