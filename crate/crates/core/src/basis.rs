//! Hilbert–Schmidt orthonormal operator basis for one truncated oscillator.
//!
//! Generalized Gell-Mann matrices, with the normalized identity first. All
//! elements are Hermitian, so a Hermitian operator has a real coefficient
//! vector and the adjoint of an operator has the conjugate coefficients.

use crate::error::{Error, Result};
use crate::model::ModeSpec;
use crate::units::BOLTZMANN_CM1_PER_K;
use ndarray::Array2;
use num_complex::Complex64;

type C = Complex64;

#[derive(Clone, Debug)]
pub struct OperatorBasis {
    n_levels: usize,
    elements: Vec<Array2<C>>,
}

impl OperatorBasis {
    pub fn new(n_levels: usize) -> Result<Self> {
        if n_levels < 2 {
            return Err(Error::Domain(format!("operator basis needs n_levels >= 2, got {n_levels}")));
        }
        let n = n_levels;
        let mut elements = Vec::with_capacity(n * n);
        let mut id = Array2::<C>::zeros((n, n));
        for k in 0..n {
            id[[k, k]] = C::new(1.0 / (n as f64).sqrt(), 0.0);
        }
        elements.push(id);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        for j in 0..n {
            for k in (j + 1)..n {
                let mut s = Array2::<C>::zeros((n, n));
                s[[j, k]] = C::new(h, 0.0);
                s[[k, j]] = C::new(h, 0.0);
                elements.push(s);
                let mut a = Array2::<C>::zeros((n, n));
                a[[j, k]] = C::new(0.0, -h);
                a[[k, j]] = C::new(0.0, h);
                elements.push(a);
            }
        }
        for l in 1..n {
            let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
            let mut d = Array2::<C>::zeros((n, n));
            for j in 0..l {
                d[[j, j]] = C::new(norm, 0.0);
            }
            d[[l, l]] = C::new(-(l as f64) * norm, 0.0);
            elements.push(d);
        }
        Ok(Self { n_levels, elements })
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    /// Number of basis elements, N_b².
    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Array2<C>] {
        &self.elements
    }

    /// c_i = Tr(x_i† op).
    pub fn expand(&self, op: &Array2<C>) -> Result<Vec<C>> {
        let n = self.n_levels;
        if op.dim() != (n, n) {
            return Err(Error::Shape(format!("expected {n}x{n} operator, got {:?}", op.dim())));
        }
        Ok(self.elements.iter().map(|x| hs_inner(x, op)).collect())
    }

    pub fn reconstruct(&self, coeffs: &[C]) -> Result<Array2<C>> {
        if coeffs.len() != self.dim() {
            return Err(Error::Shape(format!("expected {} coefficients, got {}", self.dim(), coeffs.len())));
        }
        let n = self.n_levels;
        let mut out = Array2::<C>::zeros((n, n));
        for (c, x) in coeffs.iter().zip(&self.elements) {
            if *c != C::new(0.0, 0.0) {
                out.scaled_add(*c, x);
            }
        }
        Ok(out)
    }

    /// Matrix of a linear map on operators: G[j,k] = Tr(x_j† f(x_k)).
    pub fn superoperator(&self, f: impl Fn(&Array2<C>) -> Array2<C>) -> Array2<C> {
        let d = self.dim();
        let mut g = Array2::<C>::zeros((d, d));
        for (k, xk) in self.elements.iter().enumerate() {
            let y = f(xk);
            for (j, xj) in self.elements.iter().enumerate() {
                g[[j, k]] = hs_inner(xj, &y);
            }
        }
        g
    }

    /// Coefficients of the truncated Gibbs state of `mode`, renormalized over
    /// the kept levels.
    pub fn thermal_coefficients(&self, mode: &ModeSpec) -> Result<Vec<C>> {
        if mode.n_levels != self.n_levels {
            return Err(Error::Shape(format!(
                "mode has {} levels, basis has {}",
                mode.n_levels, self.n_levels
            )));
        }
        self.expand(&thermal_state(mode.omega_cm1, mode.temperature_k, self.n_levels)?)
    }
}

/// Tr(a† b).
pub fn hs_inner(a: &Array2<C>, b: &Array2<C>) -> C {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Truncated annihilation operator with ⟨k−1|a|k⟩ = √k.
pub fn annihilation(n_levels: usize) -> Array2<C> {
    let mut a = Array2::<C>::zeros((n_levels, n_levels));
    for k in 1..n_levels {
        a[[k - 1, k]] = C::new((k as f64).sqrt(), 0.0);
    }
    a
}

pub fn number_operator(n_levels: usize) -> Array2<C> {
    let mut n = Array2::<C>::zeros((n_levels, n_levels));
    for k in 0..n_levels {
        n[[k, k]] = C::new(k as f64, 0.0);
    }
    n
}

/// Gibbs populations p_k ∝ exp(−βωk) over the first `n_levels` Fock states.
pub fn thermal_populations(omega_cm1: f64, temperature_k: f64, n_levels: usize) -> Result<Vec<f64>> {
    if !(omega_cm1 > 0.0) {
        return Err(Error::Domain(format!("thermal state needs omega > 0, got {omega_cm1}")));
    }
    if !(temperature_k >= 0.0) {
        return Err(Error::Domain(format!("thermal state needs T >= 0, got {temperature_k}")));
    }
    let mut p = vec![0.0; n_levels];
    if temperature_k == 0.0 {
        p[0] = 1.0;
        return Ok(p);
    }
    let x = omega_cm1 / (BOLTZMANN_CM1_PER_K * temperature_k);
    for (k, pk) in p.iter_mut().enumerate() {
        *pk = (-x * k as f64).exp();
    }
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    Ok(p)
}

pub fn thermal_state(omega_cm1: f64, temperature_k: f64, n_levels: usize) -> Result<Array2<C>> {
    let p = thermal_populations(omega_cm1, temperature_k, n_levels)?;
    Ok(Array2::from_diag(&ndarray::Array1::from_iter(p.into_iter().map(|v| C::new(v, 0.0)))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gram_matrix_is_identity() {
        for nb in 2..=16 {
            let b = OperatorBasis::new(nb).unwrap();
            assert_eq!(b.dim(), nb * nb);
            for (i, xi) in b.elements().iter().enumerate() {
                for (j, xj) in b.elements().iter().enumerate() {
                    let g = hs_inner(xi, xj);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g - C::new(want, 0.0)).norm() < 1e-12, "nb={nb} ({i},{j}) {g}");
                }
            }
        }
    }

    #[test]
    fn traceless_and_hermitian_beyond_identity() {
        let b = OperatorBasis::new(5).unwrap();
        for (i, x) in b.elements().iter().enumerate() {
            let herm = x.t().mapv(|z| z.conj());
            assert!(herm.iter().zip(x.iter()).all(|(a, c)| (a - c).norm() < 1e-15));
            if i > 0 {
                let tr: C = x.diag().sum();
                assert!(tr.norm() < 1e-14);
            }
        }
    }

    #[test]
    fn qubit_case() {
        let b = OperatorBasis::new(2).unwrap();
        assert_eq!(b.dim(), 4);
        assert!((b.elements()[0][[0, 0]].re - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn identity_and_unit_vectors() {
        let nb = 4;
        let b = OperatorBasis::new(nb).unwrap();
        let c = b.expand(&Array2::eye(nb).mapv(|v: f64| C::new(v, 0.0))).unwrap();
        assert!((c[0].re - 2.0).abs() < 1e-14);
        assert!(c[1..].iter().all(|z| z.norm() < 1e-14));
        for k in 0..b.dim() {
            let e = b.expand(&b.elements()[k]).unwrap();
            for (i, z) in e.iter().enumerate() {
                let want = if i == k { 1.0 } else { 0.0 };
                assert!((z - C::new(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = OperatorBasis::new(5).unwrap();
        let op = Array2::from_shape_fn((5, 5), |_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let back = b.reconstruct(&b.expand(&op).unwrap()).unwrap();
        let err = (&back - &op).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn thermal_weights() {
        let p = thermal_populations(1500.0, 300.0, 8).unwrap();
        assert!((p[0] - 0.99925).abs() < 1e-5, "{}", p[0]);
        let ratio = p[1] / p[0];
        for k in 1..7 {
            assert!((p[k + 1] / p[k] - ratio).abs() < 1e-12 * ratio.max(1e-300) + 1e-300);
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);

        let cold = thermal_populations(1500.0, 0.0, 4).unwrap();
        assert_eq!(cold, vec![1.0, 0.0, 0.0, 0.0]);
        let hot = thermal_populations(1.0, 1e12, 4).unwrap();
        assert!(hot.iter().all(|v| (v - 0.25).abs() < 1e-10));
    }

    #[test]
    fn thermal_coefficients_have_trace_one() {
        let b = OperatorBasis::new(6).unwrap();
        let m = ModeSpec::new(500.0, 0.1, 0.01, 300.0, 6);
        let c = b.thermal_coefficients(&m).unwrap();
        assert!((c[0].re * 6f64.sqrt() - 1.0).abs() < 1e-14);
        assert!(c.iter().all(|z| z.im.abs() < 1e-15));
    }
}
