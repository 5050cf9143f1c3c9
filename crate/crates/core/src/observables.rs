//! Reduced states, populations, Mandel parameters, trace distance and linear
//! absorption computed from a [`VibronicState`].

use crate::basis::{number_operator, OperatorBasis};
use crate::error::{Error, Result};
use crate::linalg::{adjoint, eigh};
use crate::model::NetworkSpec;
use crate::propagator::{Propagator, StepConfig};
use crate::state::VibronicState;
use crate::units::{cm1_to_angular, cm1_to_nm};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

type C = Complex64;

/// ρ_e[m, n] = Tr O_{m,n}.
pub fn reduced_electronic(state: &VibronicState) -> Array2<C> {
    let d = state.n_electronic();
    Array2::from_shape_fn((d, d), |(m, n)| state.block_trace(m, n))
}

/// Real parts of the diagonal of [`reduced_electronic`].
pub fn populations(state: &VibronicState) -> Vec<f64> {
    (0..state.n_electronic()).map(|n| state.block_trace(n, n).re).collect()
}

/// Density matrix of oscillator `mode_index` (chain order), traced over the
/// electronic levels and every other oscillator.
pub fn reduced_oscillator(state: &VibronicState, mode_index: usize) -> Result<Array2<C>> {
    let levels = state.n_levels();
    if mode_index >= levels.len() {
        return Err(Error::Domain(format!("mode index {mode_index} out of range ({} modes)", levels.len())));
    }
    let nb = levels[mode_index];
    let basis = OperatorBasis::new(nb)?;
    let others: f64 = state.trace_factor() / (nb as f64).sqrt();
    let mut coeffs = vec![C::new(0.0, 0.0); nb * nb];
    for n in 0..state.n_electronic() {
        let block = state.block(n, n);
        for (acc, c) in coeffs.iter_mut().zip(block.open_site_component(mode_index)) {
            *acc += c;
        }
    }
    coeffs.iter_mut().for_each(|c| *c *= others);
    basis.reconstruct(&coeffs)
}

/// ⟨n⟩ and ⟨n²⟩ of a single-oscillator density matrix, normalized by its trace.
pub fn number_moments(rho: &Array2<C>) -> (f64, f64) {
    let nb = rho.nrows();
    let num = number_operator(nb);
    let tr: f64 = (0..nb).map(|k| rho[[k, k]].re).sum();
    let tr = if tr.abs() > 0.0 { tr } else { 1.0 };
    let n1: f64 = (0..nb).map(|k| num[[k, k]].re * rho[[k, k]].re).sum::<f64>() / tr;
    let n2: f64 = (0..nb).map(|k| num[[k, k]].re.powi(2) * rho[[k, k]].re).sum::<f64>() / tr;
    (n1, n2)
}

/// (⟨n²⟩ − ⟨n⟩²)/⟨n⟩ − 1, or `None` below ⟨n⟩ = 1e-12.
pub fn mandel_from_density(rho: &Array2<C>) -> Option<f64> {
    let (n1, n2) = number_moments(rho);
    if n1 < 1e-12 {
        None
    } else {
        Some((n2 - n1 * n1) / n1 - 1.0)
    }
}

pub fn mandel_parameter(state: &VibronicState, spec: &NetworkSpec, site: usize, slot: usize) -> Result<Option<f64>> {
    let idx = spec
        .mode_index(site, slot)
        .ok_or_else(|| Error::Domain(format!("no mode slot {slot} on site {site}")))?;
    Ok(mandel_from_density(&reduced_oscillator(state, idx)?))
}

/// ½‖ρ₁ − ρ₂‖₁ for Hermitian inputs.
pub fn trace_distance(rho1: &Array2<C>, rho2: &Array2<C>) -> Result<f64> {
    if rho1.dim() != rho2.dim() || rho1.nrows() != rho1.ncols() {
        return Err(Error::Shape("trace distance needs two square matrices of equal size".into()));
    }
    let diff = rho1 - rho2;
    let scale = diff.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let skew = (&diff - &adjoint(&diff)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if skew > 1e-8 * scale {
        return Err(Error::Domain(format!("trace distance input is not Hermitian (defect {skew:.2e})")));
    }
    let herm = (&diff + &adjoint(&diff)).mapv(|z| z * 0.5);
    let (vals, _) = eigh(&herm);
    Ok(0.5 * vals.iter().map(|v| v.abs()).sum::<f64>())
}

/// Which series a [`Recorder`] keeps at every sample.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordOptions {
    #[serde(default)]
    pub electronic_density: bool,
    /// Chain indices of oscillators whose ⟨n⟩ and Mandel value are stored.
    #[serde(default)]
    pub modes: Vec<usize>,
    /// Dipole amplitudes; when set, the optical coherence Σ μ_n ρ[n, g] is stored.
    #[serde(default)]
    pub dipoles: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time_fs: f64,
    pub populations: Vec<f64>,
    pub trace: C,
    pub electronic_density: Option<Array2<C>>,
    pub mode_occupation: Vec<f64>,
    pub mandel: Vec<Option<f64>>,
    pub coherence: Option<C>,
    pub error_bound_increment: f64,
    pub cumulative_bound: f64,
    pub distance_bound: f64,
    pub max_bond: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time_fs).collect()
    }

    pub fn coherence(&self) -> Vec<C> {
        self.samples.iter().map(|s| s.coherence.unwrap_or_default()).collect()
    }

    /// Checks monotone times and Σ P_k = Re trace at every sample.
    pub fn check(&self, tol: f64) -> Result<()> {
        for w in self.samples.windows(2) {
            if w[1].time_fs <= w[0].time_fs {
                return Err(Error::Domain("trajectory times are not strictly increasing".into()));
            }
        }
        for s in &self.samples {
            let sum: f64 = s.populations.iter().sum();
            if (sum - s.trace.re).abs() > tol {
                return Err(Error::Domain(format!("populations sum {sum} differs from trace {}", s.trace.re)));
            }
        }
        Ok(())
    }
}

/// Optical coherence Σ_n μ_n Tr O_{n,g}.
pub fn optical_coherence(state: &VibronicState, spec: &NetworkSpec, dipoles: &[f64]) -> Result<C> {
    let g = spec
        .ground_index()
        .ok_or_else(|| Error::Validation(vec!["has_ground_state must be true for optical coherence".into()]))?;
    Ok(dipoles.iter().enumerate().map(|(n, &mu)| mu * state.block_trace(n, g)).sum())
}

/// Collects [`Sample`]s every `stride` steps.
pub struct Recorder<'a> {
    pub spec: &'a NetworkSpec,
    pub options: RecordOptions,
    pub stride: usize,
    pub trajectory: Trajectory,
}

impl<'a> Recorder<'a> {
    pub fn new(spec: &'a NetworkSpec, options: RecordOptions, stride: usize) -> Self {
        Self { spec, options, stride: stride.max(1), trajectory: Trajectory::default() }
    }

    pub fn sample(&self, state: &VibronicState, increment: f64) -> Result<Sample> {
        let mut mode_occupation = Vec::with_capacity(self.options.modes.len());
        let mut mandel = Vec::with_capacity(self.options.modes.len());
        for &k in &self.options.modes {
            let rho = reduced_oscillator(state, k)?;
            mode_occupation.push(number_moments(&rho).0);
            mandel.push(mandel_from_density(&rho));
        }
        let coherence = match &self.options.dipoles {
            Some(mu) => Some(optical_coherence(state, self.spec, mu)?),
            None => None,
        };
        Ok(Sample {
            time_fs: state.time_fs,
            populations: populations(state),
            trace: state.trace(),
            electronic_density: self.options.electronic_density.then(|| reduced_electronic(state)),
            mode_occupation,
            mandel,
            coherence,
            error_bound_increment: increment,
            cumulative_bound: state.ledger.cumulative(),
            distance_bound: state.ledger.distance_bound(),
            max_bond: state.max_bond(),
        })
    }

    /// Records the state when its step count is a multiple of the stride.
    pub fn observe(&mut self, state: &VibronicState, increment: f64) -> Result<()> {
        if state.steps % self.stride == 0 {
            let s = self.sample(state, increment)?;
            self.trajectory.samples.push(s);
        }
        Ok(())
    }
}

/// Runs `state` to `t_final_fs`, sampling every `stride` steps.
pub fn run_trajectory(
    spec: &NetworkSpec,
    state: &mut VibronicState,
    config: StepConfig,
    t_final_fs: f64,
    trace_guard: f64,
    options: RecordOptions,
    stride: usize,
) -> Result<Trajectory> {
    let prop = Propagator::new(spec, config)?;
    let mut rec = Recorder::new(spec, options, stride);
    let mut increment_since_sample = 0.0;
    prop.evolve(state, t_final_fs, trace_guard, |s, rep| {
        if let Some(r) = rep {
            increment_since_sample += r.error.bound_increment;
        }
        if s.steps % rec.stride == 0 {
            rec.observe(s, increment_since_sample)?;
            increment_since_sample = 0.0;
        }
        Ok(())
    })?;
    Ok(rec.trajectory)
}

/// Apodization applied to C(t) before the half-range transform.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Window {
    #[default]
    None,
    Hann,
    Exponential { tau_fs: f64 },
    Gaussian { sigma_fs: f64 },
}

impl Window {
    fn weight(&self, t: f64, t_max: f64) -> f64 {
        match *self {
            Window::None => 1.0,
            Window::Hann => 0.5 * (1.0 + (std::f64::consts::PI * t / t_max).cos()),
            Window::Exponential { tau_fs } => (-t / tau_fs).exp(),
            Window::Gaussian { sigma_fs } => (-0.5 * (t / sigma_fs).powi(2)).exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub start_cm1: f64,
    pub stop_cm1: f64,
    pub points: usize,
}

impl FrequencyGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points < 2 {
            return vec![self.start_cm1];
        }
        let h = (self.stop_cm1 - self.start_cm1) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.start_cm1 + h * k as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lineshape {
    pub omega_cm1: Vec<f64>,
    pub wavelength_nm: Vec<f64>,
    /// Peak-normalized Re ∫ C(t) e^{iωt} w(t) dt.
    pub intensity: Vec<f64>,
}

impl Lineshape {
    pub fn peak_cm1(&self) -> f64 {
        let (i, _) = self
            .intensity
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        self.omega_cm1[i]
    }

    /// ∫ over [lo, hi] cm⁻¹ by the trapezoid rule on the grid.
    pub fn area(&self, lo: f64, hi: f64) -> f64 {
        let mut acc = 0.0;
        for k in 1..self.omega_cm1.len() {
            let (a, b) = (self.omega_cm1[k - 1], self.omega_cm1[k]);
            if a >= lo && b <= hi {
                acc += 0.5 * (b - a) * (self.intensity[k - 1] + self.intensity[k]);
            }
        }
        acc
    }

    /// Area in [peak+1200, peak+1800] cm⁻¹ over area in [peak−300, peak+300].
    pub fn sideband_ratio(&self) -> f64 {
        let p = self.peak_cm1();
        self.area(p + 1200.0, p + 1800.0) / self.area(p - 300.0, p + 300.0)
    }
}

/// Half-range transform of a uniformly sampled coherence (trapezoid rule).
pub fn lineshape(coherence: &[C], dt_fs: f64, grid: &FrequencyGrid, window: Window) -> Result<Lineshape> {
    if coherence.len() < 2 || dt_fs <= 0.0 {
        return Err(Error::Domain("lineshape needs at least two samples and dt > 0".into()));
    }
    let t_max = dt_fs * (coherence.len() - 1) as f64;
    let omega_cm1 = grid.values();
    let last = coherence.len() - 1;
    let mut intensity: Vec<f64> = omega_cm1
        .iter()
        .map(|&w| {
            let wa = cm1_to_angular(w);
            let mut acc = C::new(0.0, 0.0);
            for (k, c) in coherence.iter().enumerate() {
                let t = k as f64 * dt_fs;
                let f = if k == 0 || k == last { 0.5 } else { 1.0 };
                acc += c * C::new(0.0, wa * t).exp() * (f * window.weight(t, t_max));
            }
            (acc * dt_fs).re
        })
        .collect();
    let peak = intensity.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if peak > 0.0 {
        intensity.iter_mut().for_each(|v| *v /= peak);
    }
    let wavelength_nm = omega_cm1.iter().map(|&w| if w > 0.0 { cm1_to_nm(w) } else { f64::INFINITY }).collect();
    Ok(Lineshape { omega_cm1, wavelength_nm, intensity })
}

/// Initial state with Σ_n μ_n |n⟩⟨g| (plus its adjoint) times the thermal
/// environment.
pub fn absorption_initial_state(spec: &NetworkSpec, dipoles: &[f64]) -> Result<VibronicState> {
    let g = spec.ground_index().ok_or_else(|| {
        Error::Validation(vec!["absorption requires has_ground_state = true in the network".into()])
    })?;
    if dipoles.len() != spec.n_sites {
        return Err(Error::Validation(vec![format!(
            "dipoles has {} entries, expected one per site ({})",
            dipoles.len(),
            spec.n_sites
        )]));
    }
    let d = spec.n_electronic();
    let mut rho = Array2::<C>::zeros((d, d));
    for (n, &mu) in dipoles.iter().enumerate() {
        rho[[n, g]] = C::new(mu, 0.0);
        rho[[g, n]] = C::new(mu, 0.0);
    }
    VibronicState::init_product_state(spec, &crate::state::InitialElectronic::Matrix(rho))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Absorption {
    pub times_fs: Vec<f64>,
    pub coherence: Vec<C>,
    pub lineshape: Lineshape,
    pub trajectory: Trajectory,
}

/// Linear absorption: evolve the optical coherence and transform it.
pub fn absorption_spectrum(
    spec: &NetworkSpec,
    dipoles: &[f64],
    config: StepConfig,
    t_max_fs: f64,
    grid: &FrequencyGrid,
    window: Window,
) -> Result<Absorption> {
    let mut state = absorption_initial_state(spec, dipoles)?;
    let options = RecordOptions { dipoles: Some(dipoles.to_vec()), ..Default::default() };
    let dt = config.dt_fs;
    let trajectory = run_trajectory(spec, &mut state, config, t_max_fs, 1e-6, options, 1)?;
    let coherence = trajectory.coherence();
    let lineshape = lineshape(&coherence, dt, grid, window)?;
    Ok(Absorption { times_fs: trajectory.times(), coherence, lineshape, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::thermal_state;
    use crate::model::ModeSpec;
    use crate::state::InitialElectronic;
    use ndarray::array;

    fn dimer() -> NetworkSpec {
        let modes = vec![ModeSpec::new(1500.0, 0.1, 1e-3, 300.0, 4), ModeSpec::new(500.0, 0.1, 1e-2, 300.0, 3)];
        NetworkSpec::chain(2, 12000.0, 500.0, modes)
    }

    #[test]
    fn initial_reduced_states() {
        let spec = dimer();
        let st = VibronicState::init_product_state(&spec, &InitialElectronic::Site(0)).unwrap();
        let re = reduced_electronic(&st);
        assert!((re[[0, 0]].re - 1.0).abs() < 1e-14 && re[[1, 1]].norm() < 1e-14 && re[[0, 1]].norm() < 1e-14);
        for k in 0..spec.n_modes() {
            let slot = &spec.mode_layout()[k];
            let th = thermal_state(slot.spec.omega_cm1, slot.spec.temperature_k, slot.spec.n_levels).unwrap();
            let ro = reduced_oscillator(&st, k).unwrap();
            assert!(crate::linalg::max_abs_diff(&ro, &th) < 1e-14);
        }
        assert!(reduced_oscillator(&st, 99).is_err());
    }

    #[test]
    fn mandel_values() {
        let mut fock = Array2::<C>::zeros((4, 4));
        fock[[1, 1]] = C::new(1.0, 0.0);
        assert!((mandel_from_density(&fock).unwrap() + 1.0).abs() < 1e-14);
        let mut vac = Array2::<C>::zeros((4, 4));
        vac[[0, 0]] = C::new(1.0, 0.0);
        assert_eq!(mandel_from_density(&vac), None);
        // truncated thermal state at small n̄ reproduces M = n̄ closely
        let th = thermal_state(500.0, 300.0, 30).unwrap();
        let nbar = crate::model::thermal_occupancy(500.0, 300.0).unwrap();
        assert!((mandel_from_density(&th).unwrap() - nbar).abs() < 1e-10);
    }

    #[test]
    fn trace_distance_basics() {
        let a = array![[C::new(1.0, 0.0), C::new(0.0, 0.0)], [C::new(0.0, 0.0), C::new(0.0, 0.0)]];
        let b = array![[C::new(0.0, 0.0), C::new(0.0, 0.0)], [C::new(0.0, 0.0), C::new(1.0, 0.0)]];
        assert!(trace_distance(&a, &a).unwrap().abs() < 1e-15);
        assert!((trace_distance(&a, &b).unwrap() - 1.0).abs() < 1e-14);
        let bad = array![[C::new(0.0, 0.0), C::new(1.0, 0.0)], [C::new(0.0, 0.0), C::new(0.0, 0.0)]];
        assert!(trace_distance(&bad, &a).is_err());
    }

    #[test]
    fn absorption_requires_ground_level() {
        let spec = dimer();
        match absorption_initial_state(&spec, &[1.0, 1.0]) {
            Err(Error::Validation(v)) => assert!(v[0].contains("has_ground_state")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bare_two_level_line_peaks_at_transition() {
        let spec = NetworkSpec::chain(1, 15000.0, 0.0, vec![ModeSpec::new(1000.0, 0.0, 0.01, 300.0, 2)])
            .with_ground_state(true);
        let cfg = StepConfig { dt_fs: 0.5, ..Default::default() };
        let grid = FrequencyGrid { start_cm1: 14000.0, stop_cm1: 16000.0, points: 401 };
        let out = absorption_spectrum(&spec, &[1.0], cfg, 400.0, &grid, Window::Hann).unwrap();
        assert!((out.lineshape.peak_cm1() - 15000.0).abs() <= 5.0);
        for (t, c) in out.times_fs.iter().zip(&out.coherence) {
            let want = C::new(0.0, -cm1_to_angular(15000.0) * t).exp();
            assert!((c - want).norm() < 1e-9);
        }
    }
}
