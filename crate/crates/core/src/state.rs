//! The vibronic density operator as a family of conditional MPOs.
//!
//! ρ = Σ_{m,n} |m⟩⟨n| ⊗ O_{m,n}. Only blocks with m ≤ n are stored; the
//! block (n, m) is the adjoint of (m, n).

use crate::basis::OperatorBasis;
use crate::error::{Error, Result};
use crate::linalg::{eigh, identity};
use crate::model::NetworkSpec;
use crate::mpo::Mpo;
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::borrow::Cow;

type C = Complex64;

/// Running record of compression errors.
///
/// `increments` holds the per-step bound E_t (sum of all 2Σε over the
/// compressions of one step, off-diagonal blocks counted twice); it bounds the
/// squared distance added in one step. `distance_increments` holds δ_t, a
/// bound on the Frobenius distance added in one step that stays valid when
/// several compressions hit the same block. `growth` holds κ_t, the factor by
/// which step t can stretch an error already present.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorLedger {
    pub increments: Vec<f64>,
    pub distance_increments: Vec<f64>,
    #[serde(default)]
    pub growth: Vec<f64>,
}

impl ErrorLedger {
    pub fn record(&mut self, increment: f64, distance: f64, growth: f64) {
        self.increments.push(increment);
        self.distance_increments.push(distance);
        self.growth.push(growth);
    }

    pub fn cumulative(&self) -> f64 {
        self.increments.iter().sum()
    }

    /// Bound on the Frobenius distance to the same Trotter scheme run without
    /// truncation: D_t = κ_t D_{t-1} + δ_t.
    pub fn distance_bound(&self) -> f64 {
        self.distance_increments
            .iter()
            .enumerate()
            .fold(0.0, |d, (k, &delta)| self.growth.get(k).copied().unwrap_or(1.0) * d + delta)
    }
}

/// How the electronic subsystem starts.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialElectronic {
    /// Excitation localized on one site (0-based).
    Site(usize),
    /// Pure state with the given amplitudes over sites (normalized on use).
    Superposition(Vec<C>),
    LowestExciton,
    HighestExciton,
    /// Explicit density matrix over the full electronic space.
    Matrix(Array2<C>),
}

impl InitialElectronic {
    pub fn density_matrix(&self, spec: &NetworkSpec) -> Result<Array2<C>> {
        let d = spec.n_electronic();
        let pure = |v: &[C]| {
            let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let mut rho = Array2::<C>::zeros((d, d));
            for (i, a) in v.iter().enumerate() {
                for (j, b) in v.iter().enumerate() {
                    rho[[i, j]] = a * b.conj() / (norm * norm);
                }
            }
            rho
        };
        match self {
            Self::Site(s) => {
                if *s >= spec.n_sites {
                    return Err(Error::Domain(format!("initial site {s} out of range (n_sites = {})", spec.n_sites)));
                }
                let mut rho = Array2::<C>::zeros((d, d));
                rho[[*s, *s]] = C::new(1.0, 0.0);
                Ok(rho)
            }
            Self::Superposition(amps) => {
                if amps.len() > d || amps.iter().all(|z| z.norm() == 0.0) {
                    return Err(Error::Domain("superposition needs at most n_electronic nonzero amplitudes".into()));
                }
                let mut v = amps.clone();
                v.resize(d, C::new(0.0, 0.0));
                Ok(pure(&v))
            }
            Self::LowestExciton | Self::HighestExciton => {
                let h = spec.electronic_hamiltonian()?;
                let n = spec.n_sites;
                let sub = h.slice(ndarray::s![0..n, 0..n]).to_owned();
                let (_, vecs) = eigh(&sub);
                let col = if matches!(self, Self::LowestExciton) { 0 } else { n - 1 };
                let mut v: Vec<C> = (0..n).map(|i| vecs[[i, col]]).collect();
                v.resize(d, C::new(0.0, 0.0));
                Ok(pure(&v))
            }
            Self::Matrix(m) => {
                if m.dim() != (d, d) {
                    return Err(Error::Shape(format!("initial electronic matrix must be {d}x{d}")));
                }
                Ok(m.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VibronicState {
    n_el: usize,
    n_levels: Vec<usize>,
    blocks: Vec<Mpo>,
    pub ledger: ErrorLedger,
    pub time_fs: f64,
    pub steps: usize,
}

impl VibronicState {
    /// Product state: every block is ρ_e[m,n] times the thermal product.
    pub fn init_product_state(spec: &NetworkSpec, init: &InitialElectronic) -> Result<Self> {
        spec.validate()?;
        let rho_e = init.density_matrix(spec)?;
        let layout = spec.mode_layout();
        let mut factors = Vec::with_capacity(layout.len());
        for slot in &layout {
            let b = OperatorBasis::new(slot.spec.n_levels)?;
            factors.push(b.thermal_coefficients(&slot.spec)?);
        }
        Self::from_factors(spec, &rho_e, factors)
    }

    /// Product state with explicit single-mode density matrices, in chain order.
    pub fn init_product_state_with(spec: &NetworkSpec, rho_e: &Array2<C>, mode_states: &[Array2<C>]) -> Result<Self> {
        spec.validate()?;
        let layout = spec.mode_layout();
        if mode_states.len() != layout.len() {
            return Err(Error::Shape(format!("expected {} mode states, got {}", layout.len(), mode_states.len())));
        }
        let mut factors = Vec::with_capacity(layout.len());
        for (slot, rho) in layout.iter().zip(mode_states) {
            factors.push(OperatorBasis::new(slot.spec.n_levels)?.expand(rho)?);
        }
        Self::from_factors(spec, rho_e, factors)
    }

    fn from_factors(spec: &NetworkSpec, rho_e: &Array2<C>, factors: Vec<Vec<C>>) -> Result<Self> {
        let n_el = spec.n_electronic();
        if rho_e.dim() != (n_el, n_el) {
            return Err(Error::Shape(format!("electronic matrix must be {n_el}x{n_el}")));
        }
        let n_levels = spec.mode_layout().iter().map(|s| s.spec.n_levels).collect();
        let base = Mpo::product(&factors);
        let mut blocks = Vec::with_capacity(n_el * (n_el + 1) / 2);
        for m in 0..n_el {
            for n in m..n_el {
                blocks.push(base.scaled(rho_e[[m, n]]));
            }
        }
        Ok(Self { n_el, n_levels, blocks, ledger: ErrorLedger::default(), time_fs: 0.0, steps: 0 })
    }

    pub fn n_electronic(&self) -> usize {
        self.n_el
    }

    pub fn n_modes(&self) -> usize {
        self.n_levels.len()
    }

    pub fn n_levels(&self) -> &[usize] {
        &self.n_levels
    }

    /// Ordered list of stored (m, n) pairs.
    pub fn stored_pairs(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::with_capacity(self.blocks.len());
        for m in 0..self.n_el {
            for n in m..self.n_el {
                v.push((m, n));
            }
        }
        v
    }

    pub fn stored_blocks(&self) -> &[Mpo] {
        &self.blocks
    }

    pub fn stored_blocks_mut(&mut self) -> &mut [Mpo] {
        &mut self.blocks
    }

    pub fn replace_blocks(&mut self, blocks: Vec<Mpo>) -> Result<()> {
        if blocks.len() != self.blocks.len() {
            return Err(Error::Shape("wrong number of blocks".into()));
        }
        self.blocks = blocks;
        Ok(())
    }

    /// Block (m, n), materializing the adjoint when m > n.
    pub fn block(&self, m: usize, n: usize) -> Cow<'_, Mpo> {
        if m <= n {
            Cow::Borrowed(&self.blocks[self.pair_index(m, n)])
        } else {
            Cow::Owned(self.blocks[self.pair_index(n, m)].adjoint())
        }
    }

    /// Position of stored block (m, n), m ≤ n, in the triangle.
    pub fn pair_index(&self, m: usize, n: usize) -> usize {
        debug_assert!(m <= n && n < self.n_el);
        m * self.n_el - m * m.saturating_sub(1) / 2 + (n - m)
    }

    /// Π_i √N_b,i, the factor turning identity coefficients into traces.
    pub fn trace_factor(&self) -> f64 {
        self.n_levels.iter().map(|&n| (n as f64).sqrt()).product()
    }

    /// Tr O_{m,n}.
    pub fn block_trace(&self, m: usize, n: usize) -> C {
        let c = self.block(m, n).identity_component();
        c * self.trace_factor()
    }

    pub fn trace(&self) -> C {
        (0..self.n_el).map(|n| self.block_trace(n, n)).sum()
    }

    pub fn scale(&mut self, c: C) {
        self.blocks.iter_mut().for_each(|b| b.scale(c));
    }

    pub fn max_bond(&self) -> usize {
        self.blocks.iter().map(|b| b.max_bond()).max().unwrap_or(1)
    }

    /// Dense ρ with the electronic index slowest, then oscillators in chain
    /// order. Only for small systems.
    pub fn to_dense(&self) -> Result<Array2<C>> {
        let vib: usize = self.n_levels.iter().product();
        let dim = self.n_el * vib;
        if dim > 4096 {
            return Err(Error::DimensionCeiling { dim, ceiling: 4096 });
        }
        let mut out = Array2::<C>::zeros((dim, dim));
        let bases: Vec<OperatorBasis> =
            self.n_levels.iter().map(|&n| OperatorBasis::new(n)).collect::<Result<_>>()?;
        for m in 0..self.n_el {
            for n in 0..self.n_el {
                let op = dense_operator(&self.block(m, n), &bases);
                out.slice_mut(ndarray::s![m * vib..(m + 1) * vib, n * vib..(n + 1) * vib]).assign(&op);
            }
        }
        Ok(out)
    }
}

/// Dense operator of an MPO whose site i uses basis `bases[i]`.
pub fn dense_operator(mpo: &Mpo, bases: &[OperatorBasis]) -> Array2<C> {
    let mut x = mpo.clone();
    for (i, b) in bases.iter().enumerate() {
        // column j holds vec(x_j) with entry a·N + b
        let nb = b.n_levels();
        let mut t = Array2::<C>::zeros((nb * nb, nb * nb));
        for (j, e) in b.elements().iter().enumerate() {
            for r in 0..nb {
                for c in 0..nb {
                    t[[r * nb + c, j]] = e[[r, c]];
                }
            }
        }
        x.apply_physical(i, &t);
    }
    let flat = x.to_dense();
    let dims: Vec<usize> = bases.iter().map(|b| b.n_levels()).collect();
    let vib: usize = dims.iter().product();
    let mut out = Array2::<C>::zeros((vib, vib));
    // flat index runs over (a1 b1)(a2 b2)…; regroup into (a1 a2 …),(b1 b2 …)
    for (k, v) in flat.iter().enumerate() {
        if *v == C::new(0.0, 0.0) {
            continue;
        }
        let mut rem = k;
        let (mut row, mut col) = (0usize, 0usize);
        let mut stride = 1usize;
        for &n in dims.iter().rev() {
            let pair = rem % (n * n);
            rem /= n * n;
            row += (pair / n) * stride;
            col += (pair % n) * stride;
            stride *= n;
        }
        out[[row, col]] = *v;
    }
    out
}

/// Identity on the electronic space, handy for tests and initial states.
pub fn electronic_identity(spec: &NetworkSpec) -> Array2<C> {
    identity(spec.n_electronic())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::thermal_state;
    use crate::linalg::max_abs_diff;
    use crate::model::ModeSpec;

    fn kron(a: &Array2<C>, b: &Array2<C>) -> Array2<C> {
        let (ar, ac) = a.dim();
        let (br, bc) = b.dim();
        Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| a[[i / br, j / bc]] * b[[i % br, j % bc]])
    }

    fn dimer() -> NetworkSpec {
        NetworkSpec::chain(2, 0.0, 100.0, vec![ModeSpec::new(500.0, 0.1, 0.01, 300.0, 3)])
    }

    #[test]
    fn pair_indices_cover_triangle() {
        let spec = NetworkSpec::chain(4, 0.0, 1.0, vec![ModeSpec::new(500.0, 0.1, 0.0, 0.0, 2)]);
        let st = VibronicState::init_product_state(&spec, &InitialElectronic::Site(0)).unwrap();
        let idx: Vec<usize> = st.stored_pairs().iter().map(|&(m, n)| st.pair_index(m, n)).collect();
        assert_eq!(idx, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn site_initialization() {
        let st = VibronicState::init_product_state(&dimer(), &InitialElectronic::Site(0)).unwrap();
        assert!((st.trace() - C::new(1.0, 0.0)).norm() < 1e-15);
        assert!(!st.block(0, 0).is_zero());
        assert!(st.block(0, 1).is_zero());
        assert!(st.block(1, 1).is_zero());
        assert_eq!(st.max_bond(), 1);
        let mut half = st.clone();
        half.scale(C::new(0.5, 0.0));
        assert!((half.trace() - C::new(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn superposition_has_four_blocks_and_dense_matches_kron() {
        let spec = dimer();
        let amps = vec![C::new(1.0, 0.0), C::new(1.0, 0.0)];
        let st = VibronicState::init_product_state(&spec, &InitialElectronic::Superposition(amps.clone())).unwrap();
        for (m, n) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!(!st.block(m, n).is_zero());
        }
        let rho_e = InitialElectronic::Superposition(amps).density_matrix(&spec).unwrap();
        let th = thermal_state(500.0, 300.0, 3).unwrap();
        let want = kron(&rho_e, &kron(&th, &th));
        assert!(max_abs_diff(&st.to_dense().unwrap(), &want) < 1e-12);
    }

    #[test]
    fn out_of_range_site_is_rejected() {
        assert!(VibronicState::init_product_state(&dimer(), &InitialElectronic::Site(2)).is_err());
    }

    #[test]
    fn excitons_are_pure() {
        let spec = NetworkSpec::chain(3, 0.0, 200.0, vec![ModeSpec::new(500.0, 0.1, 0.01, 300.0, 2)]);
        for init in [InitialElectronic::LowestExciton, InitialElectronic::HighestExciton] {
            let rho = init.density_matrix(&spec).unwrap();
            let purity: C = rho.dot(&rho).diag().sum();
            assert!((purity.re - 1.0).abs() < 1e-12);
        }
        // for J > 0 the lowest exciton is the antisymmetric-like combination
        let lo = InitialElectronic::LowestExciton.density_matrix(&spec).unwrap();
        let h = spec.electronic_hamiltonian().unwrap();
        let e: C = h.dot(&lo).diag().sum();
        assert!((e.re + 200.0 * 2f64.sqrt()).abs() < 1e-9);
    }
}
