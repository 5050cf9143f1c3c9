//! Shared configurations for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;
use vibronic_mpo::model::{ModeSpec, NetworkSpec};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

/// Dimer with a slow 1500 cm⁻¹ mode and a faster-damped 500 cm⁻¹ mode per
/// site, J = 500 cm⁻¹, 300 K.
pub fn comparison_dimer() -> NetworkSpec {
    let modes = vec![
        ModeSpec::new(1500.0, 0.1, 1.0 / 1000.0, 300.0, 8),
        ModeSpec::new(500.0, 0.1, 1.0 / 100.0, 300.0, 4),
    ];
    NetworkSpec::chain(2, 12000.0, 500.0, modes)
}

/// Two modes per site: 1500 cm⁻¹ (s₁, 1 ps) and 500 cm⁻¹ (s = 0.1, 50 fs), 300 K.
pub fn two_mode_chain(n: usize, s1: f64, j: f64) -> NetworkSpec {
    let modes = vec![
        ModeSpec::new(1500.0, s1, 1.0 / 1000.0, 300.0, 8),
        ModeSpec::new(500.0, 0.1, 1.0 / 50.0, 300.0, 4),
    ];
    NetworkSpec::chain(n, 12000.0, j, modes)
}

pub const DIMER_ORACLE_FIXTURE: &str = "dimer_dense_oracle.csv";
pub const DIMER_ORACLE_T_FINAL: f64 = 500.0;
pub const DIMER_ORACLE_SAMPLE: f64 = 2.5;
