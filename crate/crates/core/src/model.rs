//! Problem definition for a vibronic network: sites, electronic couplings and
//! the damped oscillators attached to each site.

use crate::error::{Error, Result};
use crate::units::{cm1_to_angular, BOLTZMANN_CM1_PER_K};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// One damped harmonic mode. Frequencies in cm⁻¹, damping in fs⁻¹.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub omega_cm1: f64,
    pub huang_rhys: f64,
    pub gamma_per_fs: f64,
    pub temperature_k: f64,
    pub n_levels: usize,
}

impl ModeSpec {
    pub fn new(omega_cm1: f64, huang_rhys: f64, gamma_per_fs: f64, temperature_k: f64, n_levels: usize) -> Self {
        Self { omega_cm1, huang_rhys, gamma_per_fs, temperature_k, n_levels }
    }

    /// Frequency in rad/fs.
    pub fn omega(&self) -> f64 {
        cm1_to_angular(self.omega_cm1)
    }

    /// Vibronic coupling ω√s in rad/fs.
    pub fn displacement(&self) -> f64 {
        self.omega() * self.huang_rhys.sqrt()
    }

    pub fn mean_occupation(&self) -> f64 {
        // validated specs never hit the error branch
        thermal_occupancy(self.omega_cm1, self.temperature_k).unwrap_or(0.0)
    }

    pub(crate) fn check(&self, ctx: &str, out: &mut Vec<String>) {
        if !(self.omega_cm1 > 0.0 && self.omega_cm1.is_finite()) {
            out.push(format!("{ctx}: omega_cm1 must be positive and finite, got {}", self.omega_cm1));
        }
        if !(self.huang_rhys >= 0.0 && self.huang_rhys.is_finite()) {
            out.push(format!("{ctx}: huang_rhys must be >= 0, got {}", self.huang_rhys));
        }
        if !(self.gamma_per_fs >= 0.0 && self.gamma_per_fs.is_finite()) {
            out.push(format!("{ctx}: gamma_per_fs must be >= 0, got {}", self.gamma_per_fs));
        }
        if !(self.temperature_k >= 0.0 && self.temperature_k.is_finite()) {
            out.push(format!("{ctx}: temperature_k must be >= 0, got {}", self.temperature_k));
        }
        if self.n_levels < 2 {
            out.push(format!("{ctx}: n_levels must be >= 2, got {}", self.n_levels));
        }
    }
}

/// Mean phonon number of a mode at temperature `temperature_k`.
pub fn thermal_occupancy(omega_cm1: f64, temperature_k: f64) -> Result<f64> {
    if !(omega_cm1 > 0.0) || !omega_cm1.is_finite() {
        return Err(Error::Domain(format!("thermal_occupancy needs omega > 0, got {omega_cm1}")));
    }
    if !(temperature_k >= 0.0) {
        return Err(Error::Domain(format!("thermal_occupancy needs T >= 0, got {temperature_k}")));
    }
    if temperature_k == 0.0 {
        return Ok(0.0);
    }
    let x = omega_cm1 / (BOLTZMANN_CM1_PER_K * temperature_k);
    Ok(1.0 / x.exp_m1())
}

/// Replaces the default mode list for a single site (0-based index).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteModes {
    pub site: usize,
    pub modes: Vec<ModeSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub n_sites: usize,
    pub site_energies_cm1: Vec<f64>,
    /// Row-major N×N, symmetric with zero diagonal.
    pub couplings_cm1: Vec<Vec<f64>>,
    /// Modes attached to every site unless overridden.
    pub modes: Vec<ModeSpec>,
    #[serde(default)]
    pub site_overrides: Vec<SiteModes>,
    #[serde(default)]
    pub has_ground_state: bool,
}

/// Where an oscillator sits in the MPO chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSlot {
    pub site: usize,
    pub q: usize,
    pub spec: ModeSpec,
}

impl NetworkSpec {
    /// Equal site energies, nearest-neighbour coupling `j_cm1`, same modes everywhere.
    pub fn chain(n_sites: usize, energy_cm1: f64, j_cm1: f64, modes: Vec<ModeSpec>) -> Self {
        let mut couplings = vec![vec![0.0; n_sites]; n_sites];
        for n in 0..n_sites.saturating_sub(1) {
            couplings[n][n + 1] = j_cm1;
            couplings[n + 1][n] = j_cm1;
        }
        Self {
            n_sites,
            site_energies_cm1: vec![energy_cm1; n_sites],
            couplings_cm1: couplings,
            modes,
            site_overrides: Vec::new(),
            has_ground_state: false,
        }
    }

    pub fn with_ground_state(mut self, on: bool) -> Self {
        self.has_ground_state = on;
        self
    }

    /// Electronic dimension, counting the optional ground level.
    pub fn n_electronic(&self) -> usize {
        self.n_sites + usize::from(self.has_ground_state)
    }

    /// The ground level is stored after all sites.
    pub fn ground_index(&self) -> Option<usize> {
        self.has_ground_state.then_some(self.n_sites)
    }

    pub fn modes_for_site(&self, site: usize) -> &[ModeSpec] {
        self.site_overrides
            .iter()
            .rev()
            .find(|o| o.site == site)
            .map(|o| o.modes.as_slice())
            .unwrap_or(&self.modes)
    }

    /// Oscillators in chain order: mode slot major, site minor. With uniform
    /// mode lists this is i = q·N + n.
    pub fn mode_layout(&self) -> Vec<ModeSlot> {
        let max_q = (0..self.n_sites).map(|n| self.modes_for_site(n).len()).max().unwrap_or(0);
        let mut out = Vec::new();
        for q in 0..max_q {
            for site in 0..self.n_sites {
                if let Some(spec) = self.modes_for_site(site).get(q) {
                    out.push(ModeSlot { site, q, spec: spec.clone() });
                }
            }
        }
        out
    }

    pub fn n_modes(&self) -> usize {
        (0..self.n_sites).map(|n| self.modes_for_site(n).len()).sum()
    }

    /// Chain index of mode slot `q` at `site`.
    pub fn mode_index(&self, site: usize, q: usize) -> Option<usize> {
        self.mode_layout().iter().position(|s| s.site == site && s.q == q)
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let n = self.n_sites;
        if n == 0 {
            errs.push("n_sites must be >= 1".to_string());
        }
        if self.site_energies_cm1.len() != n {
            errs.push(format!(
                "site_energies_cm1 has {} entries, expected n_sites = {n}",
                self.site_energies_cm1.len()
            ));
        }
        for (i, e) in self.site_energies_cm1.iter().enumerate() {
            if !e.is_finite() {
                errs.push(format!("site_energies_cm1[{i}] is not finite"));
            }
        }
        let square = self.couplings_cm1.len() == n && self.couplings_cm1.iter().all(|r| r.len() == n);
        if !square {
            errs.push(format!("couplings_cm1 must be a {n}x{n} matrix"));
        } else {
            for i in 0..n {
                if self.couplings_cm1[i][i] != 0.0 {
                    errs.push(format!("couplings_cm1[{i}][{i}] must be zero, got {}", self.couplings_cm1[i][i]));
                }
                for j in (i + 1)..n {
                    let (a, b) = (self.couplings_cm1[i][j], self.couplings_cm1[j][i]);
                    if !a.is_finite() || !b.is_finite() {
                        errs.push(format!("couplings_cm1[{i}][{j}] is not finite"));
                    } else if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                        errs.push(format!("couplings not symmetric: J[{i}][{j}] = {a} but J[{j}][{i}] = {b}"));
                    }
                }
            }
        }
        for (q, m) in self.modes.iter().enumerate() {
            m.check(&format!("modes[{q}]"), &mut errs);
        }
        let mut seen = std::collections::BTreeSet::new();
        for o in &self.site_overrides {
            if o.site >= n {
                errs.push(format!("site override for site {} but n_sites = {n}", o.site));
            }
            if !seen.insert(o.site) {
                errs.push(format!("duplicate site override for site {}", o.site));
            }
            for (q, m) in o.modes.iter().enumerate() {
                m.check(&format!("site_overrides[site {}].modes[{q}]", o.site), &mut errs);
            }
        }
        if errs.is_empty() && self.n_modes() == 0 {
            errs.push("network has no vibrational modes".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    /// H_e in cm⁻¹. The ground level, if present, is the last row and column
    /// and is all zeros.
    pub fn electronic_hamiltonian(&self) -> Result<Array2<Complex64>> {
        self.validate()?;
        let d = self.n_electronic();
        let mut h = Array2::<Complex64>::zeros((d, d));
        for m in 0..self.n_sites {
            h[[m, m]] = Complex64::new(self.site_energies_cm1[m], 0.0);
            for n in 0..self.n_sites {
                if m != n {
                    h[[m, n]] = Complex64::new(self.couplings_cm1[m][n], 0.0);
                }
            }
        }
        Ok(h)
    }

    /// H_e in rad/fs.
    pub fn electronic_hamiltonian_angular(&self) -> Result<Array2<Complex64>> {
        Ok(self.electronic_hamiltonian()?.mapv(|z| z * cm1_to_angular(1.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mode() -> ModeSpec {
        ModeSpec::new(1500.0, 0.1, 1e-3, 300.0, 4)
    }

    #[test]
    fn occupancy_values() {
        assert_eq!(thermal_occupancy(1500.0, 0.0).unwrap(), 0.0);
        let n = thermal_occupancy(1500.0, 300.0).unwrap();
        assert!((n - 7.5e-4).abs() < 0.05e-4, "{n}");
        let n = thermal_occupancy(500.0, 300.0).unwrap();
        assert!((n - 0.09999).abs() < 1e-4, "{n}");
        assert!(thermal_occupancy(0.0, 300.0).is_err());
        assert!(thermal_occupancy(-5.0, 300.0).is_err());
    }

    #[test]
    fn dimer_eigenvalues() {
        let spec = NetworkSpec::chain(2, 0.0, 500.0, vec![mode()]);
        let h = spec.electronic_hamiltonian().unwrap();
        // eigenvalues of [[0,J],[J,0]] are ±J; check via trace and determinant
        let tr = h[[0, 0]] + h[[1, 1]];
        let det = h[[0, 0]] * h[[1, 1]] - h[[0, 1]] * h[[1, 0]];
        assert_eq!(tr.re, 0.0);
        assert_eq!(det.re, -250000.0);
    }

    #[test]
    fn single_site_and_ground_level() {
        let spec = NetworkSpec::chain(1, 16667.0, 0.0, vec![mode()]).with_ground_state(true);
        let h = spec.electronic_hamiltonian().unwrap();
        assert_eq!(h.dim(), (2, 2));
        assert_eq!(h[[0, 0]].re, 16667.0);
        assert!(h.row(1).iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn chain_of_twenty_is_tridiagonal() {
        let spec = NetworkSpec::chain(20, 0.0, 400.0, vec![mode()]);
        let h = spec.electronic_hamiltonian().unwrap();
        for m in 0..20usize {
            for n in 0..20 {
                let expect = if m.abs_diff(n) == 1 { 400.0 } else { 0.0 };
                assert_eq!(h[[m, n]].re, expect);
            }
        }
    }

    #[test]
    fn validation_collects_every_problem() {
        let mut spec = NetworkSpec::chain(2, 0.0, 500.0, vec![mode()]);
        spec.couplings_cm1[1][0] = 400.0;
        spec.modes[0].n_levels = 1;
        match spec.validate() {
            Err(Error::Validation(v)) => {
                assert_eq!(v.len(), 2, "{v:?}");
                assert!(v.iter().any(|s| s.contains("symmetric")));
                assert!(v.iter().any(|s| s.contains("n_levels")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn layout_is_slot_major() {
        let modes = vec![mode(), ModeSpec::new(500.0, 0.1, 0.01, 300.0, 3)];
        let spec = NetworkSpec::chain(3, 0.0, 100.0, modes);
        let lay = spec.mode_layout();
        let pairs: Vec<_> = lay.iter().map(|s| (s.q, s.site)).collect();
        assert_eq!(pairs, vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]);
        assert_eq!(spec.mode_index(2, 1), Some(5));
    }

    #[test]
    fn overrides_change_layout() {
        let mut spec = NetworkSpec::chain(2, 0.0, 100.0, vec![mode(), mode()]);
        spec.site_overrides.push(SiteModes { site: 1, modes: vec![ModeSpec::new(800.0, 0.2, 0.0, 0.0, 3)] });
        spec.validate().unwrap();
        let pairs: Vec<_> = spec.mode_layout().iter().map(|s| (s.q, s.site)).collect();
        assert_eq!(pairs, vec![(0, 0), (0, 1), (1, 0)]);
        assert_eq!(spec.n_modes(), 3);
    }
}
