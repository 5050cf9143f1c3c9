//! Dense reference solutions for small instances.
//!
//! [`DenseModel`] integrates the full master equation on the product space
//! (electronic index slowest, then oscillators in chain order with the first
//! slowest, the same ordering as [`VibronicState::to_dense`]). The analytic
//! functions give the independent-boson coherence of a monomer.
//!
//! [`VibronicState::to_dense`]: crate::state::VibronicState::to_dense

use crate::basis::{annihilation, thermal_state, OperatorBasis};
use crate::bcf::SpectralDensity;
use crate::error::{Error, Result};
use crate::linalg::{adjoint, expm};
use crate::model::{ModeSpec, NetworkSpec};
use crate::propagator::{local_generator, Sidedness};
use crate::quadrature::{integrate, QuadOptions};
use crate::units::{cm1_to_angular, BOLTZMANN_CM1_PER_K};
use ndarray::{Array1, Array2};
use num_complex::Complex64;

type C = Complex64;
const ZERO: C = C::new(0.0, 0.0);

pub const DEFAULT_DENSE_CEILING: usize = 4096;

struct DenseMode {
    stride: usize,
    levels: usize,
    up: f64,
    down: f64,
    /// √k of this mode at every full index.
    sqrt_k: Vec<f64>,
    /// √(k+1) below the top level, 0 at the top.
    sqrt_k1: Vec<f64>,
}

/// Master-equation generator on the full product space.
pub struct DenseModel {
    n_el: usize,
    vib: usize,
    dim: usize,
    /// Nonzero entries (column, value) of every row of H, in rad/fs.
    rows: Vec<Vec<(usize, C)>>,
    /// ½ Σ_i (up_i a a† + down_i a† a) on the diagonal.
    anti: Vec<f64>,
    modes: Vec<DenseMode>,
    norm_bound: f64,
    pub tolerance: f64,
}

impl DenseModel {
    pub fn new(spec: &NetworkSpec) -> Result<Self> {
        Self::with_ceiling(spec, DEFAULT_DENSE_CEILING)
    }

    pub fn with_ceiling(spec: &NetworkSpec, ceiling: usize) -> Result<Self> {
        spec.validate()?;
        let layout = spec.mode_layout();
        let n_el = spec.n_electronic();
        let vib: usize = layout.iter().map(|s| s.spec.n_levels).product();
        let dim = n_el * vib;
        if dim > ceiling {
            return Err(Error::DimensionCeiling { dim, ceiling });
        }
        let mut he = spec.electronic_hamiltonian_angular()?;
        let diag: Vec<f64> = (0..n_el).map(|k| he[[k, k]].re).collect();
        let lo = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // a common shift of all electronic levels leaves the commutator
        // unchanged and keeps the Taylor steps small
        let shift = 0.5 * (lo + hi);
        for k in 0..n_el {
            he[[k, k]] -= shift;
        }
        let mut strides = vec![1usize; layout.len()];
        for i in (0..layout.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * layout[i + 1].spec.n_levels;
        }
        let digit = |i: usize, idx: usize| (idx % vib) / strides[i] % layout[i].spec.n_levels;

        let mut rows = Vec::with_capacity(dim);
        let mut anti = vec![0.0; dim];
        for r in 0..dim {
            let e = r / vib;
            let v = r % vib;
            let mut entries: Vec<(usize, C)> = Vec::new();
            let mut diag_val = he[[e, e]].re;
            for (i, slot) in layout.iter().enumerate() {
                let k = digit(i, r) as f64;
                diag_val += slot.spec.omega() * k;
                let nbar = slot.spec.mean_occupation();
                let up = 2.0 * slot.spec.gamma_per_fs * nbar;
                let down = 2.0 * slot.spec.gamma_per_fs * (nbar + 1.0);
                let top = slot.spec.n_levels - 1;
                let aad = if (k as usize) < top { k + 1.0 } else { 0.0 };
                anti[r] += 0.5 * (up * aad + down * k);
            }
            entries.push((r, C::new(diag_val, 0.0)));
            for f in 0..n_el {
                if f != e && he[[e, f]] != ZERO {
                    entries.push((f * vib + v, he[[e, f]]));
                }
            }
            if e < spec.n_sites {
                for (i, slot) in layout.iter().enumerate() {
                    if slot.site != e {
                        continue;
                    }
                    let g = slot.spec.displacement();
                    let k = digit(i, r);
                    if k + 1 < slot.spec.n_levels {
                        entries.push((r + strides[i], C::new(g * ((k + 1) as f64).sqrt(), 0.0)));
                    }
                    if k > 0 {
                        entries.push((r - strides[i], C::new(g * (k as f64).sqrt(), 0.0)));
                    }
                }
            }
            rows.push(entries);
        }
        let modes: Vec<DenseMode> = layout
            .iter()
            .enumerate()
            .map(|(i, slot)| {
                let nbar = slot.spec.mean_occupation();
                let top = slot.spec.n_levels - 1;
                let ks: Vec<usize> = (0..dim).map(|idx| digit(i, idx)).collect();
                DenseMode {
                    stride: strides[i],
                    levels: slot.spec.n_levels,
                    up: 2.0 * slot.spec.gamma_per_fs * nbar,
                    down: 2.0 * slot.spec.gamma_per_fs * (nbar + 1.0),
                    sqrt_k: ks.iter().map(|&k| (k as f64).sqrt()).collect(),
                    sqrt_k1: ks.iter().map(|&k| if k < top { ((k + 1) as f64).sqrt() } else { 0.0 }).collect(),
                }
            })
            .collect();
        let h_row = rows.iter().map(|r| r.iter().map(|(_, h)| h.norm()).sum::<f64>()).fold(0.0, f64::max);
        let a_max = anti.iter().cloned().fold(0.0, f64::max);
        let jumps: f64 = modes.iter().map(|m| (m.up + m.down) * (m.levels - 1) as f64).sum();
        let norm_bound = 2.0 * h_row + 2.0 * a_max + jumps;
        Ok(Self { n_el, vib, dim, rows, anti, modes, norm_bound, tolerance: 1e-13 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_electronic(&self) -> usize {
        self.n_el
    }

    /// ρ ↦ −i[H, ρ] + Dρ on a row-major D×D buffer.
    pub fn apply(&self, rho: &[C], out: &mut [C]) {
        let d = self.dim;
        let mi = C::new(0.0, -1.0);
        for r in 0..d {
            let row = &mut out[r * d..(r + 1) * d];
            let src = &rho[r * d..(r + 1) * d];
            for (c, o) in row.iter_mut().enumerate() {
                let mut acc = ZERO;
                for &(x, h) in &self.rows[c] {
                    acc += src[x] * h.conj();
                }
                *o = -mi * acc - (self.anti[r] + self.anti[c]) * src[c];
            }
            for &(x, h) in &self.rows[r] {
                let f = mi * h;
                let other = &rho[x * d..(x + 1) * d];
                for (o, v) in row.iter_mut().zip(other) {
                    *o += f * v;
                }
            }
            for m in &self.modes {
                let s = m.stride;
                if m.up > 0.0 && m.sqrt_k[r] > 0.0 {
                    let f = m.up * m.sqrt_k[r];
                    let other = &rho[(r - s) * d..(r - s + 1) * d];
                    for c in s..d {
                        row[c] += f * m.sqrt_k[c] * other[c - s];
                    }
                }
                if m.down > 0.0 && m.sqrt_k1[r] > 0.0 {
                    let f = m.down * m.sqrt_k1[r];
                    let other = &rho[(r + s) * d..(r + s + 1) * d];
                    for c in 0..d - s {
                        row[c] += f * m.sqrt_k1[c] * other[c + s];
                    }
                }
            }
        }
    }

    /// exp(hL)ρ by a truncated Taylor series, stopping once two consecutive
    /// terms fall below `tolerance` relative to the partial sum.
    fn taylor_step(&self, rho: &mut [C], h: f64, work: &mut [C], term: &mut [C]) {
        term.copy_from_slice(rho);
        let mut small = 0;
        for k in 1..200 {
            self.apply(term, work);
            let f = h / k as f64;
            let mut tn = 0.0;
            for (t, w) in term.iter_mut().zip(work.iter()) {
                *t = w * f;
                tn += t.norm_sqr();
            }
            let mut sn = 0.0;
            for (y, t) in rho.iter_mut().zip(term.iter()) {
                *y += t;
                sn += y.norm_sqr();
            }
            if tn.sqrt() <= self.tolerance * sn.sqrt().max(1e-300) {
                small += 1;
                if small == 2 {
                    return;
                }
            } else {
                small = 0;
            }
        }
    }

    /// Integrates from `rho0` to `t_final_fs`, calling `observe(t, ρ)` at t = 0
    /// and every `sample_dt_fs`.
    pub fn evolve<F>(&self, rho0: &Array2<C>, t_final_fs: f64, sample_dt_fs: f64, mut observe: F) -> Result<Array2<C>>
    where
        F: FnMut(f64, &Array2<C>) -> Result<()>,
    {
        if rho0.dim() != (self.dim, self.dim) {
            return Err(Error::Shape(format!("dense state must be {0}x{0}", self.dim)));
        }
        if !(sample_dt_fs > 0.0) {
            return Err(Error::Domain("sample interval must be positive".into()));
        }
        let n_samples = (t_final_fs / sample_dt_fs).round() as usize;
        let sub = ((sample_dt_fs * self.norm_bound / 6.0).ceil() as usize).max(1);
        let h = sample_dt_fs / sub as f64;
        let mut rho: Vec<C> = rho0.iter().cloned().collect();
        let mut work = vec![ZERO; rho.len()];
        let mut term = vec![ZERO; rho.len()];
        let as_mat = |v: &[C]| Array2::from_shape_vec((self.dim, self.dim), v.to_vec()).expect("square");
        observe(0.0, &as_mat(&rho))?;
        for s in 1..=n_samples {
            for _ in 0..sub {
                self.taylor_step(&mut rho, h, &mut work, &mut term);
            }
            observe(s as f64 * sample_dt_fs, &as_mat(&rho))?;
        }
        Ok(as_mat(&rho))
    }

    /// Σ_v ρ[(m,v),(n,v)].
    pub fn reduced_electronic(&self, rho: &Array2<C>) -> Array2<C> {
        let v = self.vib;
        Array2::from_shape_fn((self.n_el, self.n_el), |(m, n)| (0..v).map(|k| rho[[m * v + k, n * v + k]]).sum())
    }

    pub fn populations(&self, rho: &Array2<C>) -> Vec<f64> {
        let re = self.reduced_electronic(rho);
        (0..self.n_el).map(|k| re[[k, k]].re).collect()
    }

    /// Partial trace onto oscillator `mode`.
    pub fn reduced_oscillator(&self, rho: &Array2<C>, mode: usize) -> Result<Array2<C>> {
        let m = self.modes.get(mode).ok_or_else(|| Error::Domain(format!("mode {mode} out of range")))?;
        let nb = m.levels;
        let s = m.stride;
        let mut out = Array2::<C>::zeros((nb, nb));
        for r in 0..self.dim {
            let k = (r % self.vib) / s % nb;
            let base = r - k * s;
            for l in 0..nb {
                out[[k, l]] += rho[[r, base + l * s]];
            }
        }
        Ok(out)
    }
}

/// Thermal product environment tensored with `rho_e`, in the dense ordering.
pub fn dense_product_state(spec: &NetworkSpec, rho_e: &Array2<C>) -> Result<Array2<C>> {
    let mut env = Array2::from_elem((1, 1), C::new(1.0, 0.0));
    for slot in spec.mode_layout() {
        let th = thermal_state(slot.spec.omega_cm1, slot.spec.temperature_k, slot.spec.n_levels)?;
        env = kron(&env, &th);
    }
    Ok(kron(rho_e, &env))
}

pub fn kron(a: &Array2<C>, b: &Array2<C>) -> Array2<C> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| a[[i / br, j / bc]] * b[[i % br, j % bc]])
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue(rho: &Array2<C>) -> f64 {
    let h = (rho + &adjoint(rho)).mapv(|z| z * 0.5);
    crate::linalg::eigh(&h).0.first().copied().unwrap_or(0.0)
}

/// Quantum-regression BCF ⟨X(t)X(0)⟩ of one free damped oscillator with
/// X = ω√s (a + a†), from the truncated single-mode generator.
pub fn regression_bcf(mode: &ModeSpec, times_fs: &[f64]) -> Result<Vec<C>> {
    let nb = mode.n_levels;
    let basis = OperatorBasis::new(nb)?;
    let free = ModeSpec { huang_rhys: 0.0, ..mode.clone() };
    let gen = local_generator(&free, Sidedness::Neither, &basis);
    let a = annihilation(nb);
    let x = (&a + &adjoint(&a)).mapv(|z| z * mode.displacement());
    let rho = thermal_state(mode.omega_cm1, mode.temperature_k, nb)?;
    let v0 = Array1::from(basis.expand(&x.dot(&rho))?);
    times_fs
        .iter()
        .map(|&t| {
            let vt = expm(&gen.mapv(|z| z * t)).dot(&v0);
            let op = basis.reconstruct(vt.as_slice().expect("contiguous"))?;
            Ok(x.dot(&op).diag().sum())
        })
        .collect()
}

/// g(t) = ∫₀^t ∫₀^{t₁} C(t₂) for Lindblad modes, in closed form.
pub fn lineshape_function_modes(modes: &[ModeSpec], t_fs: f64) -> C {
    let mut g = ZERO;
    for m in modes {
        let w = m.omega();
        let a = w * w * m.huang_rhys;
        let nbar = m.mean_occupation();
        for (c, kappa) in [(a * (nbar + 1.0), C::new(m.gamma_per_fs, w)), (a * nbar, C::new(m.gamma_per_fs, -w))] {
            if c == 0.0 {
                continue;
            }
            let x = kappa * t_fs;
            let val = if x.norm() < 1e-4 {
                // series of (e^{−x} − 1 + x)/x² times t²
                (0.5 - x / 6.0 + x * x / 24.0) * t_fs * t_fs
            } else {
                ((-x).exp() - 1.0 + x) / (kappa * kappa)
            };
            g += c * val;
        }
    }
    g
}

/// g(t) = ∫ J(ω)/ω² [coth(βω/2)(1 − cos ωt) + i(sin ωt − ωt)] dω by adaptive
/// quadrature (ω and J in cm⁻¹).
pub fn lineshape_function_density(sd: &SpectralDensity, temperature_k: f64, t_fs: f64) -> Result<C> {
    sd.validate()?;
    if t_fs == 0.0 {
        return Ok(ZERO);
    }
    let beta = if temperature_k > 0.0 { 1.0 / (BOLTZMANN_CM1_PER_K * temperature_k) } else { f64::INFINITY };
    let scale = sd.reorganization_energy()?.max(1e-300);
    let f = |w: f64| {
        let j = sd.evaluate(w).unwrap_or(0.0);
        if j == 0.0 {
            return ZERO;
        }
        let x = cm1_to_angular(w) * t_fs;
        let coth = if beta.is_finite() { 1.0 / (0.5 * beta * w).tanh() } else { 1.0 };
        let one_minus_cos = 2.0 * (0.5 * x).sin().powi(2);
        let sin_minus = if x.abs() < 1e-3 { -x.powi(3) / 6.0 + x.powi(5) / 120.0 } else { x.sin() - x };
        C::new(coth * one_minus_cos, sin_minus) * (j / (w * w))
    };
    let opts = QuadOptions { abs_tol: 1e-12 * scale, rel_tol: 1e-11, max_intervals: 50_000 };
    integrate(f, 0.0, sd.upper_limit(), &sd.breakpoints(), opts).map(|(v, _)| v)
}

/// Environment of a monomer for the analytic coherence.
#[derive(Clone, Debug)]
pub enum MonomerEnvironment {
    Modes(Vec<ModeSpec>),
    Density { density: SpectralDensity, temperature_k: f64 },
}

/// exp(−iΩt − g(t)) with Ω in cm⁻¹.
pub fn analytic_monomer_coherence(env: &MonomerEnvironment, omega1_cm1: f64, t_fs: f64) -> Result<C> {
    let g = match env {
        MonomerEnvironment::Modes(m) => lineshape_function_modes(m, t_fs),
        MonomerEnvironment::Density { density, temperature_k } => {
            lineshape_function_density(density, *temperature_k, t_fs)?
        }
    };
    Ok((C::new(0.0, -cm1_to_angular(omega1_cm1) * t_fs) - g).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bcf::lindblad_bcf;
    use crate::model::thermal_occupancy;
    use crate::state::{InitialElectronic, VibronicState};

    fn single(s: f64, gamma: f64, t: f64, nb: usize) -> NetworkSpec {
        NetworkSpec::chain(1, 0.0, 0.0, vec![ModeSpec::new(1000.0, s, gamma, t, nb)])
    }

    #[test]
    fn frozen_without_dynamics() {
        let spec = NetworkSpec::chain(2, 0.0, 0.0, vec![ModeSpec::new(1000.0, 0.0, 0.0, 0.0, 3)]);
        let model = DenseModel::new(&spec).unwrap();
        let st = VibronicState::init_product_state(&spec, &InitialElectronic::Site(0)).unwrap();
        let rho0 = st.to_dense().unwrap();
        let end = model.evolve(&rho0, 50.0, 10.0, |_, _| Ok(())).unwrap();
        assert!(crate::linalg::max_abs_diff(&end, &rho0) < 1e-13);
    }

    #[test]
    fn single_mode_relaxes_at_twice_gamma() {
        let gamma = 0.01;
        let spec = single(0.0, gamma, 300.0, 12);
        let model = DenseModel::new(&spec).unwrap();
        let mut rho0 = Array2::<C>::zeros((12, 12));
        rho0[[2, 2]] = C::new(1.0, 0.0);
        let nbar = thermal_occupancy(1000.0, 300.0).unwrap();
        model
            .evolve(&rho0, 100.0, 20.0, |t, rho| {
                let n: f64 = (0..12).map(|k| k as f64 * rho[[k, k]].re).sum();
                let want = nbar + (2.0 - nbar) * (-2.0 * gamma * t).exp();
                assert!((n - want).abs() < 1e-6, "t={t} n={n} want={want}");
                Ok(())
            })
            .unwrap();
    }

    #[test]
    fn dimer_trace_and_positivity() {
        let spec = NetworkSpec::chain(2, 12000.0, 300.0, vec![ModeSpec::new(1200.0, 0.2, 0.01, 300.0, 4)]);
        let model = DenseModel::new(&spec).unwrap();
        let rho0 = dense_product_state(&spec, &InitialElectronic::Site(0).density_matrix(&spec).unwrap()).unwrap();
        model
            .evolve(&rho0, 1000.0, 100.0, |_, rho| {
                let tr: C = rho.diag().sum();
                assert!((tr - 1.0).norm() < 1e-10);
                assert!(min_eigenvalue(rho) > -1e-9);
                Ok(())
            })
            .unwrap();
    }

    #[test]
    fn dense_product_state_matches_mpo() {
        let spec = NetworkSpec::chain(2, 0.0, 100.0, vec![ModeSpec::new(1200.0, 0.2, 0.01, 300.0, 3), ModeSpec::new(400.0, 0.1, 0.01, 300.0, 2)]);
        let rho_e = InitialElectronic::Superposition(vec![C::new(0.6, 0.0), C::new(0.0, 0.8)]).density_matrix(&spec).unwrap();
        let st = VibronicState::init_product_state(&spec, &InitialElectronic::Matrix(rho_e.clone())).unwrap();
        let a = st.to_dense().unwrap();
        let b = dense_product_state(&spec, &rho_e).unwrap();
        assert!(crate::linalg::max_abs_diff(&a, &b) < 1e-13);
    }

    #[test]
    fn dimension_ceiling() {
        let spec = NetworkSpec::chain(3, 0.0, 100.0, vec![ModeSpec::new(1000.0, 0.1, 0.01, 300.0, 20)]);
        assert!(matches!(DenseModel::new(&spec), Err(Error::DimensionCeiling { .. })));
    }

    #[test]
    fn regression_matches_closed_form() {
        let mode = ModeSpec::new(800.0, 0.1, 0.005, 300.0, 14);
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 15.0).collect();
        let reg = regression_bcf(&mode, &t).unwrap();
        for (c, &ti) in reg.iter().zip(&t) {
            let want = lindblad_bcf(std::slice::from_ref(&mode), ti);
            assert!((c - want).norm() < 1e-8 * want.norm().max(1e-3), "{c} {want}");
        }
    }

    #[test]
    fn lineshape_function_structure() {
        let modes = vec![ModeSpec::new(700.0, 0.1, 0.01, 300.0, 2)];
        assert_eq!(lineshape_function_modes(&modes, 0.0), ZERO);
        let h = 1e-3;
        let g1 = lineshape_function_modes(&modes, h);
        assert!(g1.norm() < 1e-3 * h);
        // second derivative at zero is C(0)
        let c0 = lindblad_bcf(&modes, 0.0);
        assert!((2.0 * g1 / (h * h) - c0).norm() < 1e-3 * c0.norm());
        let z = MonomerEnvironment::Modes(vec![]);
        let c = analytic_monomer_coherence(&z, 10000.0, 3.0).unwrap();
        assert!((c - C::new(0.0, -cm1_to_angular(10000.0) * 3.0).exp()).norm() < 1e-14);
    }

    #[test]
    fn density_and_mode_forms_agree_for_a_narrow_peak() {
        let gamma_cm1 = 0.05;
        let sd = SpectralDensity::Lorentzian { omega_cm1: 1000.0, gamma_cm1, huang_rhys: 0.1 };
        let mode = ModeSpec::new(1000.0, 0.1, gamma_cm1 * crate::units::WAVENUMBER_TO_ANGULAR, 0.0, 2);
        for &t in &[10.0, 50.0, 120.0] {
            let a = lineshape_function_density(&sd, 0.0, t).unwrap();
            let b = lineshape_function_modes(std::slice::from_ref(&mode), t);
            assert!((a - b).norm() < 5e-3 * b.norm().max(0.05), "t={t} {a} {b}");
        }
    }

    #[test]
    fn monomer_cross_oracle() {
        let modes = vec![ModeSpec::new(750.0, 0.08, 1.0 / 80.0, 300.0, 7)];
        let spec = NetworkSpec::chain(1, 2000.0, 0.0, modes.clone()).with_ground_state(true);
        let model = DenseModel::new(&spec).unwrap();
        let mut rho_e = Array2::<C>::zeros((2, 2));
        rho_e[[0, 1]] = C::new(1.0, 0.0);
        rho_e[[1, 0]] = C::new(1.0, 0.0);
        let rho0 = dense_product_state(&spec, &rho_e).unwrap();
        let env = MonomerEnvironment::Modes(modes);
        model
            .evolve(&rho0, 200.0, 20.0, |t, rho| {
                let c = model.reduced_electronic(rho)[[0, 1]];
                let want = analytic_monomer_coherence(&env, 2000.0, t).unwrap();
                assert!((c - want).norm() < 1e-6, "t={t} {c} {want}");
                Ok(())
            })
            .unwrap();
    }
}
