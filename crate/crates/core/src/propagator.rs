//! First-order Trotter step: exact local oscillator channels, then the
//! electronic mixing step with compression.

use crate::basis::{annihilation, OperatorBasis};
use crate::error::{Error, Result};
use crate::linalg::{adjoint, expm, single_threaded, spectral_norm, unitary_propagator};
use crate::model::{ModeSpec, NetworkSpec};
use crate::mpo::Mpo;
use crate::state::VibronicState;
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

type C = Complex64;

/// Which side of ρ the oscillator's displacement acts on for block (m, n).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sidedness {
    /// m and n are both the mode's site.
    Both,
    /// only m is.
    Left,
    /// only n is.
    Right,
    Neither,
}

impl Sidedness {
    pub fn of(m: usize, n: usize, site: usize) -> Self {
        match (m == site, n == site) {
            (true, true) => Self::Both,
            (true, false) => Self::Left,
            (false, true) => Self::Right,
            (false, false) => Self::Neither,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Generator of the single-mode dynamics in the operator basis,
/// G X = −i(H_L X − X H_R) + D X.
pub fn local_generator(mode: &ModeSpec, side: Sidedness, basis: &OperatorBasis) -> Array2<C> {
    let nb = mode.n_levels;
    let a = annihilation(nb);
    let ad = adjoint(&a);
    let num = ad.dot(&a);
    let aad = a.dot(&ad);
    let w = mode.omega();
    let g = mode.displacement();
    let x = &a + &ad;
    let h0 = num.mapv(|z| z * w);
    let displaced = &h0 + &x.mapv(|z| z * g);
    let (hl, hr) = match side {
        Sidedness::Both => (displaced.clone(), displaced),
        Sidedness::Left => (displaced, h0),
        Sidedness::Right => (h0.clone(), displaced),
        Sidedness::Neither => (h0.clone(), h0),
    };
    let nbar = mode.mean_occupation();
    let gamma = mode.gamma_per_fs;
    let up = 2.0 * gamma * nbar;
    let down = 2.0 * gamma * (nbar + 1.0);
    let mi = C::new(0.0, -1.0);
    basis.superoperator(|xk| {
        let mut out = (hl.dot(xk) - xk.dot(&hr)).mapv(|z| z * mi);
        if gamma > 0.0 {
            let gain = ad.dot(xk).dot(&a) - (aad.dot(xk) + xk.dot(&aad)).mapv(|z| z * 0.5);
            let loss = a.dot(xk).dot(&ad) - (num.dot(xk) + xk.dot(&num)).mapv(|z| z * 0.5);
            out = out + gain.mapv(|z| z * up) + loss.mapv(|z| z * down);
        }
        out
    })
}

/// Exact one-step maps exp(Δt G) for every mode species and sidedness.
#[derive(Clone, Debug)]
pub struct LocalChannelTable {
    pub dt_fs: f64,
    species: Vec<ModeSpec>,
    channels: Vec<[Array2<C>; 4]>,
    /// chain index → (species index, site)
    modes: Vec<(usize, usize)>,
    /// Upper bound on how much one local step can stretch the Frobenius norm
    /// of any block: the product over modes of the largest spectral norm
    /// among that mode's four channels. Above 1 because the dissipator is not
    /// unital.
    pub growth: f64,
}

impl LocalChannelTable {
    pub fn build(spec: &NetworkSpec, dt_fs: f64) -> Result<Self> {
        if !(dt_fs > 0.0) {
            return Err(Error::Domain(format!("time step must be positive, got {dt_fs}")));
        }
        single_threaded();
        let mut species: Vec<ModeSpec> = Vec::new();
        let mut channels = Vec::new();
        let mut modes = Vec::new();
        for slot in spec.mode_layout() {
            let k = match species.iter().position(|s| *s == slot.spec) {
                Some(k) => k,
                None => {
                    let basis = OperatorBasis::new(slot.spec.n_levels)?;
                    let make = |side| expm(&local_generator(&slot.spec, side, &basis).mapv(|z| z * dt_fs));
                    channels.push([
                        make(Sidedness::Both),
                        make(Sidedness::Left),
                        make(Sidedness::Right),
                        make(Sidedness::Neither),
                    ]);
                    species.push(slot.spec.clone());
                    species.len() - 1
                }
            };
            modes.push((k, slot.site));
        }
        let species_growth: Vec<f64> =
            channels.iter().map(|c| c.iter().map(spectral_norm).fold(1.0, f64::max)).collect();
        let growth = modes.iter().map(|&(k, _)| species_growth[k]).product();
        Ok(Self { dt_fs, species, channels, modes, growth })
    }

    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn channel(&self, mode_index: usize, side: Sidedness) -> &Array2<C> {
        &self.channels[self.modes[mode_index].0][side.index()]
    }

    pub fn site_of(&self, mode_index: usize) -> usize {
        self.modes[mode_index].1
    }

    /// Applies every local channel to one block.
    pub fn apply_to_block(&self, block: &mut Mpo, m: usize, n: usize) {
        for i in 0..self.modes.len() {
            let side = Sidedness::of(m, n, self.modes[i].1);
            block.apply_physical(i, self.channel(i, side));
        }
    }
}

/// Applies the local channels to every stored block. Bond dimensions do not change.
pub fn apply_local_step(state: &mut VibronicState, table: &LocalChannelTable) {
    let pairs = state.stored_pairs();
    state
        .stored_blocks_mut()
        .par_iter_mut()
        .zip(pairs.par_iter())
        .for_each(|(b, &(m, n))| table.apply_to_block(b, m, n));
}

/// U_e = exp(−iΔt H_e) and the discard threshold for small products.
#[derive(Clone, Debug)]
pub struct ElectronicStep {
    pub u: Array2<C>,
    pub tau: f64,
}

impl ElectronicStep {
    pub fn build(spec: &NetworkSpec, dt_fs: f64, tau: f64) -> Result<Self> {
        let h = spec.electronic_hamiltonian_angular()?;
        Ok(Self { u: unitary_propagator(&h, dt_fs), tau })
    }

    /// Whether U_e is diagonal, in which case no blocks mix.
    pub fn is_diagonal(&self) -> bool {
        let n = self.u.nrows();
        (0..n).all(|i| (0..n).all(|j| i == j || self.u[[i, j]] == C::new(0.0, 0.0)))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressionMode {
    /// Compress after every pairwise addition.
    #[default]
    Pairwise,
    /// Build the whole sum, compress once.
    SumAll,
}

/// Errors introduced by one electronic step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepError {
    /// E_t = Σ over compressions of ξ, off-diagonal blocks counted twice. ξ is
    /// 2Σε for plain truncation and the measured distance² for weighted.
    pub bound_increment: f64,
    /// δ_t, bound on the Frobenius distance added by this step.
    pub distance_increment: f64,
}

/// Compressor for one electronic step: plain Frobenius truncation when the
/// weights are all one or χ is unbounded, identity-weighted otherwise.
struct Truncator {
    chi: usize,
    weights: Option<Vec<f64>>,
}

impl Truncator {
    fn new(phys: &[usize], chi: usize, identity_weight: f64) -> Self {
        let weights = (identity_weight != 0.0 && chi != usize::MAX)
            .then(|| phys.iter().map(|&p| (p as f64).sqrt().powf(identity_weight)).collect());
        Self { chi, weights }
    }

    /// Compressed operator and its squared-distance ξ.
    fn compress(&self, o: &Mpo) -> (Mpo, f64) {
        match &self.weights {
            Some(w) => o.compress_weighted(self.chi, w),
            None => {
                let (c, rep) = o.compress(self.chi);
                (c, rep.bound())
            }
        }
    }
}

/// One output block Σ_{k,l} U[m,k] U*[n,l] O_{k,l}, plus the ξ of every compression.
fn mix_block(
    state: &VibronicState,
    estep: &ElectronicStep,
    m: usize,
    n: usize,
    trunc: &Truncator,
    mode: CompressionMode,
) -> Result<(Mpo, Vec<f64>)> {
    let d = state.n_electronic();
    let u = &estep.u;
    let mut terms: Vec<(C, usize, usize)> = Vec::new();
    for k in 0..d {
        for l in 0..d {
            let coef = u[[m, k]] * u[[n, l]].conj();
            if coef.norm() < estep.tau || coef == C::new(0.0, 0.0) {
                continue;
            }
            let src = if k <= l { &state.stored_blocks()[state.pair_index(k, l)] } else { &state.stored_blocks()[state.pair_index(l, k)] };
            if src.is_zero() {
                continue;
            }
            terms.push((coef, k, l));
        }
    }
    terms.sort_by(|a, b| b.0.norm().partial_cmp(&a.0.norm()).unwrap_or(std::cmp::Ordering::Equal));
    let mut xis = Vec::new();
    let mut iter = terms.into_iter();
    let Some((c0, k0, l0)) = iter.next() else {
        return Ok((Mpo::zeros(&state.stored_blocks()[0].phys_dims()), xis));
    };
    let mut acc = state.block(k0, l0).scaled(c0);
    match mode {
        CompressionMode::Pairwise => {
            for (c, k, l) in iter {
                let sum = Mpo::add(&acc, &state.block(k, l), C::new(1.0, 0.0), c)?;
                let (comp, xi) = trunc.compress(&sum);
                xis.push(xi);
                acc = comp;
            }
        }
        CompressionMode::SumAll => {
            let mut any = false;
            for (c, k, l) in iter {
                acc = Mpo::add(&acc, &state.block(k, l), C::new(1.0, 0.0), c)?;
                any = true;
            }
            if any {
                let (comp, xi) = trunc.compress(&acc);
                xis.push(xi);
                acc = comp;
            }
        }
    }
    Ok((acc, xis))
}

/// Mixes blocks through U_e. Output blocks are computed independently and
/// collected in a fixed order, so the result does not depend on thread count.
pub fn apply_electronic_step(
    state: &mut VibronicState,
    estep: &ElectronicStep,
    chi: usize,
    mode: CompressionMode,
    identity_weight: f64,
) -> Result<StepError> {
    let pairs = state.stored_pairs();
    let trunc = Truncator::new(&state.stored_blocks()[0].phys_dims(), chi, identity_weight);
    let results: Vec<Result<(Mpo, Vec<f64>)>> = {
        let st: &VibronicState = state;
        pairs.par_iter().map(|&(m, n)| mix_block(st, estep, m, n, &trunc, mode)).collect()
    };
    let mut blocks = Vec::with_capacity(pairs.len());
    let mut err = StepError::default();
    let mut dist2 = 0.0;
    for (r, &(m, n)) in results.into_iter().zip(&pairs) {
        let (b, xis) = r?;
        let mult = if m == n { 1.0 } else { 2.0 };
        err.bound_increment += mult * xis.iter().sum::<f64>();
        let lin: f64 = xis.iter().map(|x| x.sqrt()).sum();
        dist2 += mult * lin * lin;
        blocks.push(b);
    }
    err.distance_increment = dist2.sqrt();
    state.replace_blocks(blocks)?;
    Ok(err)
}

/// Knobs for a propagation run.
#[derive(Clone, Debug, PartialEq)]
pub struct StepConfig {
    pub dt_fs: f64,
    /// Maximum bond dimension; `usize::MAX` for no truncation.
    pub chi: usize,
    pub tau: f64,
    pub compression: CompressionMode,
    /// Exponent α: the identity coefficient of each mode is weighted by
    /// N_b^α during truncation. Zero gives plain Frobenius truncation.
    pub identity_weight: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { dt_fs: 0.5, chi: usize::MAX, tau: 1e-12, compression: CompressionMode::Pairwise, identity_weight: 1.0 }
    }
}

/// What one call to [`Propagator::step`] did.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    pub error: StepError,
    pub max_bond: usize,
}

pub struct Propagator {
    pub config: StepConfig,
    pub local: LocalChannelTable,
    pub electronic: ElectronicStep,
}

impl Propagator {
    pub fn new(spec: &NetworkSpec, config: StepConfig) -> Result<Self> {
        spec.validate()?;
        if config.chi == 0 {
            return Err(Error::Domain("chi must be >= 1".into()));
        }
        let local = LocalChannelTable::build(spec, config.dt_fs)?;
        let electronic = ElectronicStep::build(spec, config.dt_fs, config.tau)?;
        Ok(Self { config, local, electronic })
    }

    /// Local channels, then electronic mixing. Records the step's errors in
    /// the state's ledger.
    pub fn step(&self, state: &mut VibronicState) -> Result<StepReport> {
        apply_local_step(state, &self.local);
        let error = apply_electronic_step(state, &self.electronic, self.config.chi, self.config.compression, self.config.identity_weight)?;
        state.ledger.record(error.bound_increment, error.distance_increment, self.local.growth);
        state.steps += 1;
        state.time_fs = state.steps as f64 * self.config.dt_fs;
        Ok(StepReport { error, max_bond: state.max_bond() })
    }

    /// Steps until `t_final_fs`, calling `observe` on the initial state and
    /// after every step. Aborts when the trace drifts from its initial value
    /// by more than `trace_guard`.
    pub fn evolve<F>(&self, state: &mut VibronicState, t_final_fs: f64, trace_guard: f64, mut observe: F) -> Result<()>
    where
        F: FnMut(&VibronicState, Option<&StepReport>) -> Result<()>,
    {
        let n_steps = ((t_final_fs - state.time_fs) / self.config.dt_fs).round().max(0.0) as usize;
        let trace0 = state.trace();
        if state.steps == 0 {
            observe(state, None)?;
        }
        for _ in 0..n_steps {
            let rep = self.step(state)?;
            let tr = state.trace();
            let drift = (tr - trace0).norm();
            if !(drift <= trace_guard) {
                return Err(Error::TraceGuard { time_fs: state.time_fs, trace: tr.re, drift, guard: trace_guard });
            }
            observe(state, Some(&rep))?;
        }
        Ok(())
    }
}
