//! Dissipative vibronic network dynamics with matrix product operators.

pub mod basis;
pub mod bcf;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod fit;
pub mod io;
pub mod linalg;
pub mod model;
pub mod mpo;
pub mod observables;
pub mod oracle;
pub mod propagator;
pub mod quadrature;
pub mod runner;
pub mod state;
pub mod units;

pub use error::{Error, Result};
