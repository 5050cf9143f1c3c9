//! Bath correlation functions: those induced by damped Lindblad modes, and
//! those of continuous spectral densities.
//!
//! BCF values are returned in rad²/fs². Spectral densities take and return
//! cm⁻¹.

use crate::error::{Error, Result};
use crate::model::ModeSpec;
use crate::quadrature::{integrate, integrate_real, QuadOptions};
use crate::units::{cm1_to_angular, rate_to_cm1, BOLTZMANN_CM1_PER_K, WAVENUMBER_TO_ANGULAR};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

type C = Complex64;

/// Σ_q ω_q²s_q [(n̄_q+1) e^{−iω_q t} + n̄_q e^{iω_q t}] e^{−γ_q t}.
pub fn lindblad_bcf(modes: &[ModeSpec], t_fs: f64) -> C {
    modes
        .iter()
        .map(|m| {
            let w = m.omega();
            let nbar = m.mean_occupation();
            let amp = w * w * m.huang_rhys;
            let decay = (-m.gamma_per_fs * t_fs).exp();
            let ph = C::new(0.0, -w * t_fs).exp();
            amp * decay * ((nbar + 1.0) * ph + nbar * ph.conj())
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectralDensity {
    /// Ohmic rise with a Gaussian cutoff, normalized so ∫J/ω = reorganization.
    OhmicGaussian { reorganization_cm1: f64, center_cm1: f64, width_cm1: f64 },
    /// Antisymmetrized Lorentzian of an underdamped mode; ∫J/ω = ω·s.
    Lorentzian { omega_cm1: f64, gamma_cm1: f64, huang_rhys: f64 },
    /// Piecewise-linear samples, zero outside the sampled range.
    Tabulated { omega_cm1: Vec<f64>, j_cm1: Vec<f64> },
    Sum { parts: Vec<SpectralDensity> },
}

impl SpectralDensity {
    /// Broad Gaussian-cut background plus a narrow 1500 cm⁻¹ peak, typical of
    /// conjugated organic chromophores.
    pub fn reference_model() -> Self {
        Self::Sum {
            parts: vec![
                Self::OhmicGaussian { reorganization_cm1: 500.0, center_cm1: 700.0, width_cm1: 500.0 },
                Self::Lorentzian { omega_cm1: 1500.0, gamma_cm1: rate_to_cm1(1.0 / 500.0), huang_rhys: 0.1 },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.collect_errors(&mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    fn collect_errors(&self, errs: &mut Vec<String>) {
        match self {
            Self::OhmicGaussian { reorganization_cm1, center_cm1, width_cm1 } => {
                if !(*reorganization_cm1 >= 0.0) || !(*width_cm1 > 0.0) || !center_cm1.is_finite() {
                    errs.push("ohmic_gaussian needs reorganization >= 0, width > 0, finite center".into());
                }
            }
            Self::Lorentzian { omega_cm1, gamma_cm1, huang_rhys } => {
                if !(*omega_cm1 > 0.0) || !(*gamma_cm1 > 0.0) || !(*huang_rhys >= 0.0) {
                    errs.push("lorentzian needs omega > 0, gamma > 0, huang_rhys >= 0".into());
                }
            }
            Self::Tabulated { omega_cm1, j_cm1 } => {
                if omega_cm1.len() != j_cm1.len() || omega_cm1.len() < 2 {
                    errs.push("tabulated density needs matching omega/j columns with at least two rows".into());
                } else if omega_cm1.windows(2).any(|w| !(w[1] > w[0])) {
                    errs.push("tabulated omega must be strictly increasing".into());
                } else if j_cm1.iter().any(|&j| !(j >= 0.0)) {
                    errs.push("tabulated J must be non-negative".into());
                }
            }
            Self::Sum { parts } => parts.iter().for_each(|p| p.collect_errors(errs)),
        }
    }

    /// J(ω) for ω > 0, in cm⁻¹.
    pub fn evaluate(&self, omega_cm1: f64) -> Result<f64> {
        if !(omega_cm1 > 0.0) {
            return Err(Error::Domain(format!("spectral density needs omega > 0, got {omega_cm1}")));
        }
        Ok(self.eval(omega_cm1))
    }

    fn eval(&self, w: f64) -> f64 {
        match self {
            Self::OhmicGaussian { reorganization_cm1: lam, center_cm1: c, width_cm1: g } => {
                let norm = 2.0 / (PI.sqrt() * g * (1.0 + libm::erf(c / g)));
                norm * lam * w * (-((w - c) / g).powi(2)).exp()
            }
            Self::Lorentzian { omega_cm1: o, gamma_cm1: g, huang_rhys: s } => {
                let pre = 4.0 * g * o * (o * o + g * g) * s / PI;
                pre * w / (((w + o).powi(2) + g * g) * ((w - o).powi(2) + g * g))
            }
            Self::Tabulated { omega_cm1, j_cm1 } => {
                if w < omega_cm1[0] || w > *omega_cm1.last().unwrap() {
                    return 0.0;
                }
                let k = omega_cm1.partition_point(|&x| x <= w).min(omega_cm1.len() - 1).max(1);
                let (x0, x1) = (omega_cm1[k - 1], omega_cm1[k]);
                let f = (w - x0) / (x1 - x0);
                j_cm1[k - 1] * (1.0 - f) + j_cm1[k] * f
            }
            Self::Sum { parts } => parts.iter().map(|p| p.eval(w)).sum(),
        }
    }

    /// Points where the integrand changes character, used to seed quadrature.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::OhmicGaussian { center_cm1, width_cm1, .. } => {
                (-3..=3).map(|k| center_cm1 + k as f64 * width_cm1).filter(|&x| x > 0.0).collect()
            }
            Self::Lorentzian { omega_cm1, gamma_cm1, .. } => {
                let mut v = vec![*omega_cm1];
                for k in [1.0, 5.0, 25.0, 125.0] {
                    v.push(omega_cm1 - k * gamma_cm1);
                    v.push(omega_cm1 + k * gamma_cm1);
                }
                v.push(2.0 * omega_cm1);
                v.push(10.0 * omega_cm1);
                v.into_iter().filter(|&x| x > 0.0).collect()
            }
            Self::Tabulated { omega_cm1, .. } => omega_cm1.clone(),
            Self::Sum { parts } => parts.iter().flat_map(|p| p.breakpoints()).collect(),
        }
    }

    /// Frequency beyond which J is treated as zero.
    pub fn upper_limit(&self) -> f64 {
        match self {
            Self::OhmicGaussian { center_cm1, width_cm1, .. } => center_cm1.max(0.0) + 10.0 * width_cm1,
            Self::Lorentzian { omega_cm1, gamma_cm1, .. } => (300.0 * omega_cm1).max(omega_cm1 + 1e4 * gamma_cm1),
            Self::Tabulated { omega_cm1, .. } => *omega_cm1.last().unwrap_or(&0.0),
            Self::Sum { parts } => parts.iter().map(|p| p.upper_limit()).fold(0.0, f64::max),
        }
    }

    /// ∫ J(ω)/ω dω in cm⁻¹.
    pub fn reorganization_energy(&self) -> Result<f64> {
        let opts = QuadOptions { abs_tol: 1e-12, rel_tol: 1e-10, max_intervals: 50_000 };
        integrate_real(|w| if w > 0.0 { self.eval(w) / w } else { 0.0 }, 0.0, self.upper_limit(), &self.breakpoints(), opts)
            .map(|(v, _)| v)
    }
}

/// coth(x/2)·J written to stay finite as x → 0.
fn thermal_weight(j: f64, w: f64, beta: f64) -> f64 {
    if beta.is_infinite() {
        return j;
    }
    let x = 0.5 * beta * w;
    if x < 1e-6 {
        j * (1.0 / x + x / 3.0)
    } else {
        j / x.tanh()
    }
}

/// Evaluates the BCF of a spectral density at a fixed temperature.
#[derive(Clone, Debug)]
pub struct TargetBcf {
    pub density: SpectralDensity,
    pub temperature_k: f64,
    beta: f64,
    c0: f64,
    pub opts: QuadOptions,
}

impl TargetBcf {
    /// Absolute tolerance defaults to 1e−6 of C(0).
    pub fn new(density: SpectralDensity, temperature_k: f64) -> Result<Self> {
        density.validate()?;
        if !(temperature_k >= 0.0) {
            return Err(Error::Domain(format!("temperature must be >= 0, got {temperature_k}")));
        }
        let beta = if temperature_k == 0.0 { f64::INFINITY } else { 1.0 / (BOLTZMANN_CM1_PER_K * temperature_k) };
        let mut me = Self { density, temperature_k, beta, c0: 0.0, opts: QuadOptions { abs_tol: 0.0, rel_tol: 1e-10, max_intervals: 50_000 } };
        let c0 = me.integrate_at(0.0)?.re;
        me.c0 = c0;
        me.opts = QuadOptions { abs_tol: 1e-6 * c0.abs().max(1e-300), rel_tol: 1e-12, max_intervals: 50_000 };
        Ok(me)
    }

    fn integrate_at(&self, t_fs: f64) -> Result<C> {
        let sd = &self.density;
        let beta = self.beta;
        let f = |w: f64| {
            if w <= 0.0 {
                return C::new(0.0, 0.0);
            }
            let j = sd.eval(w);
            let ph = cm1_to_angular(w) * t_fs;
            C::new(thermal_weight(j, w, beta) * ph.cos(), -j * ph.sin())
        };
        let (v, _) = integrate(f, 0.0, sd.upper_limit(), &sd.breakpoints(), self.opts)?;
        Ok(v * WAVENUMBER_TO_ANGULAR * WAVENUMBER_TO_ANGULAR)
    }

    /// C(0) in rad²/fs².
    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// C(t) in rad²/fs², t ≥ 0.
    pub fn at(&self, t_fs: f64) -> Result<C> {
        if !(t_fs >= 0.0) {
            return Err(Error::Domain(format!("BCF is evaluated for t >= 0 only, got {t_fs}")));
        }
        self.integrate_at(t_fs)
    }
}

pub fn target_bcf(density: &SpectralDensity, temperature_k: f64, t_fs: f64) -> Result<C> {
    TargetBcf::new(density.clone(), temperature_k)?.at(t_fs)
}

/// One row of a Lindblad-mode parameter table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub q: usize,
    pub omega_cm1: f64,
    pub gamma_inv_fs: f64,
    pub huang_rhys: f64,
    #[serde(rename = "T_K")]
    pub temperature_k: f64,
}

impl ModeRow {
    pub fn to_mode(&self, n_levels: usize) -> ModeSpec {
        ModeSpec::new(self.omega_cm1, self.huang_rhys, 1.0 / self.gamma_inv_fs, self.temperature_k, n_levels)
    }

    pub fn from_mode(q: usize, m: &ModeSpec) -> Self {
        Self {
            q,
            omega_cm1: m.omega_cm1,
            gamma_inv_fs: 1.0 / m.gamma_per_fs,
            huang_rhys: m.huang_rhys,
            temperature_k: m.temperature_k,
        }
    }
}

const REFERENCE_TABLE: &str = include_str!("../data/reference_environment_modes.csv");

/// The bundled 21-mode fit of [`SpectralDensity::reference_model`] at 300 K.
pub fn reference_modes() -> Vec<ModeRow> {
    parse_mode_table(REFERENCE_TABLE.as_bytes()).expect("bundled mode table is well-formed")
}

pub fn parse_mode_table<R: std::io::Read>(reader: R) -> Result<Vec<ModeRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let rows: std::result::Result<Vec<ModeRow>, _> = rdr.deserialize().collect();
    Ok(rows?)
}

pub fn read_mode_table(path: &Path) -> Result<Vec<ModeRow>> {
    parse_mode_table(std::fs::File::open(path)?)
}

pub fn write_mode_table(path: &Path, rows: &[ModeRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
