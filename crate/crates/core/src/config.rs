//! TOML run configuration.

use crate::bcf::SpectralDensity;
use crate::error::{Error, Result};
use crate::fit::FitOptions;
use crate::model::NetworkSpec;
use crate::observables::{FrequencyGrid, RecordOptions, Window};
use crate::propagator::{CompressionMode, StepConfig};
use crate::state::InitialElectronic;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Dynamics,
    Absorption,
    BcfFit,
    OracleCompare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub dt_fs: f64,
    pub t_final_fs: f64,
    /// Omit for an unbounded bond dimension.
    #[serde(default)]
    pub chi: Option<usize>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_stride")]
    pub sample_stride: usize,
    #[serde(default = "default_guard")]
    pub trace_guard: f64,
    #[serde(default)]
    pub compression: CompressionMode,
    /// See [`StepConfig::identity_weight`].
    #[serde(default = "default_identity_weight")]
    pub identity_weight: f64,
    /// Steps between checkpoint writes when `--checkpoint` is given; 0 writes
    /// only at the end.
    #[serde(default)]
    pub checkpoint_every: usize,
}

fn default_identity_weight() -> f64 {
    1.0
}
fn default_tau() -> f64 {
    1e-12
}
fn default_stride() -> usize {
    1
}
fn default_guard() -> f64 {
    1e-6
}

impl Numerics {
    pub fn step_config(&self) -> StepConfig {
        StepConfig { dt_fs: self.dt_fs, chi: self.chi.unwrap_or(usize::MAX), tau: self.tau, compression: self.compression, identity_weight: self.identity_weight }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    Site { site: usize },
    LowestExciton,
    HighestExciton,
    Superposition { re: Vec<f64>, #[serde(default)] im: Vec<f64> },
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Site { site: 0 }
    }
}

impl InitialConfig {
    pub fn to_initial(&self) -> InitialElectronic {
        match self {
            InitialConfig::Site { site } => InitialElectronic::Site(*site),
            InitialConfig::LowestExciton => InitialElectronic::LowestExciton,
            InitialConfig::HighestExciton => InitialElectronic::HighestExciton,
            InitialConfig::Superposition { re, im } => InitialElectronic::Superposition(
                re.iter()
                    .enumerate()
                    .map(|(k, &r)| Complex64::new(r, im.get(k).copied().unwrap_or(0.0)))
                    .collect(),
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbsorptionConfig {
    /// One amplitude per site; defaults to 1 for every site.
    #[serde(default)]
    pub dipoles: Option<Vec<f64>>,
    pub grid: FrequencyGrid,
    #[serde(default)]
    pub window: Window,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcfFitConfig {
    pub density: SpectralDensity,
    pub temperature_k: f64,
    pub q_count: usize,
    pub t_max_fs: f64,
    pub dt_fs: f64,
    /// Mode table used as the starting point.
    #[serde(default)]
    pub initial_guess: Option<PathBuf>,
    #[serde(default)]
    pub options: Option<FitOptions>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_ceiling")]
    pub dimension_ceiling: usize,
}

fn default_ceiling() -> usize {
    crate::oracle::DEFAULT_DENSE_CEILING
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { dimension_ceiling: default_ceiling() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub job: JobKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub network: Option<NetworkSpec>,
    #[serde(default)]
    pub numerics: Option<Numerics>,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub record: RecordOptions,
    #[serde(default)]
    pub absorption: Option<AbsorptionConfig>,
    #[serde(default)]
    pub bcf_fit: Option<BcfFitConfig>,
    #[serde(default)]
    pub oracle: Option<OracleConfig>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and parses; relative paths inside are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(fit) = cfg.bcf_fit.as_mut() {
            if let Some(p) = fit.initial_guess.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn network(&self) -> Result<&NetworkSpec> {
        self.network.as_ref().ok_or_else(|| Error::Validation(vec!["missing [network] block".into()]))
    }

    pub fn numerics(&self) -> Result<&Numerics> {
        self.numerics.as_ref().ok_or_else(|| Error::Validation(vec!["missing [numerics] block".into()]))
    }

    /// Every problem with the config, reported together.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let needs_network = !matches!(self.job, JobKind::BcfFit);
        if needs_network {
            match &self.network {
                None => errs.push("missing [network] block".to_string()),
                Some(net) => match net.validate() {
                    Ok(()) => {}
                    Err(Error::Validation(v)) => errs.extend(v),
                    Err(e) => errs.push(e.to_string()),
                },
            }
            match &self.numerics {
                None => errs.push("missing [numerics] block".to_string()),
                Some(n) => {
                    if !(n.dt_fs > 0.0 && n.dt_fs.is_finite()) {
                        errs.push(format!("numerics.dt_fs must be positive (got {})", n.dt_fs));
                    }
                    if !(n.t_final_fs > 0.0 && n.t_final_fs.is_finite()) {
                        errs.push(format!("numerics.t_final_fs must be positive (got {})", n.t_final_fs));
                    }
                    if n.chi == Some(0) {
                        errs.push("numerics.chi must be >= 1".to_string());
                    }
                    if !(n.identity_weight >= 0.0 && n.identity_weight.is_finite()) {
                        errs.push(format!("numerics.identity_weight must be finite and non-negative (got {})", n.identity_weight));
                    }
                    if !(n.tau >= 0.0) {
                        errs.push(format!("numerics.tau must be non-negative (got {})", n.tau));
                    }
                    if n.sample_stride == 0 {
                        errs.push("numerics.sample_stride must be >= 1".to_string());
                    }
                    if !(n.trace_guard > 0.0) {
                        errs.push(format!("numerics.trace_guard must be positive (got {})", n.trace_guard));
                    }
                }
            }
        }
        if let (Some(net), InitialConfig::Site { site }) = (&self.network, &self.initial) {
            if *site >= net.n_electronic() {
                errs.push(format!("initial.site {site} out of range"));
            }
        }
        if let Some(net) = &self.network {
            for &k in &self.record.modes {
                if k >= net.n_modes() {
                    errs.push(format!("record.modes index {k} out of range ({} modes)", net.n_modes()));
                }
            }
        }
        match self.job {
            JobKind::Absorption => {
                if let Some(net) = &self.network {
                    if !net.has_ground_state {
                        errs.push("absorption requires network.has_ground_state = true".to_string());
                    }
                    if let Some(Some(d)) = self.absorption.as_ref().map(|a| a.dipoles.as_ref()) {
                        if d.len() != net.n_sites {
                            errs.push(format!("absorption.dipoles has {} entries, expected {}", d.len(), net.n_sites));
                        }
                    }
                }
                match &self.absorption {
                    None => errs.push("missing [absorption] block".to_string()),
                    Some(a) => {
                        if a.grid.points < 2 || !(a.grid.stop_cm1 > a.grid.start_cm1) {
                            errs.push("absorption.grid needs points >= 2 and stop_cm1 > start_cm1".to_string());
                        }
                    }
                }
            }
            JobKind::BcfFit => match &self.bcf_fit {
                None => errs.push("missing [bcf_fit] block".to_string()),
                Some(f) => {
                    if let Err(e) = f.density.validate() {
                        errs.push(e.to_string());
                    }
                    if f.q_count == 0 {
                        errs.push("bcf_fit.q_count must be >= 1".to_string());
                    }
                    if !(f.dt_fs > 0.0) || !(f.t_max_fs > f.dt_fs) {
                        errs.push("bcf_fit needs dt_fs > 0 and t_max_fs > dt_fs".to_string());
                    }
                    if !(f.temperature_k >= 0.0) {
                        errs.push("bcf_fit.temperature_k must be non-negative".to_string());
                    }
                    if let Some(p) = &f.initial_guess {
                        if !p.exists() {
                            errs.push(format!("bcf_fit.initial_guess file {} does not exist", p.display()));
                        }
                    }
                }
            },
            JobKind::Dynamics | JobKind::OracleCompare => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}
