//! Small dense linear algebra helpers on top of faer.

use faer::complex_native::c64;
use faer::prelude::SpSolver;
use faer::{Mat, MatRef, Side};
use ndarray::Array2;
use num_complex::Complex64;

type C = Complex64;

/// Pins faer to sequential kernels so results do not depend on how many
/// threads happen to be available.
pub fn single_threaded() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Parallelism::None));
}

#[inline]
pub fn to_c64(z: C) -> c64 {
    c64::new(z.re, z.im)
}

#[inline]
pub fn from_c64(z: c64) -> C {
    C::new(z.re, z.im)
}

pub fn to_faer(a: &Array2<C>) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| to_c64(a[[i, j]]))
}

pub fn from_faer(m: MatRef<'_, c64>) -> Array2<C> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| from_c64(m.read(i, j)))
}

pub fn identity(n: usize) -> Array2<C> {
    Array2::from_shape_fn((n, n), |(i, j)| if i == j { C::new(1.0, 0.0) } else { C::new(0.0, 0.0) })
}

pub fn adjoint(a: &Array2<C>) -> Array2<C> {
    a.t().mapv(|z| z.conj())
}

/// Largest singular value.
pub fn spectral_norm(a: &Array2<C>) -> f64 {
    let svd = to_faer(a).thin_svd();
    let s = svd.s_diagonal();
    (0..s.nrows()).map(|k| s.read(k).re).fold(0.0, f64::max)
}

fn one_norm(a: &Mat<c64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| from_c64(a.read(i, j)).norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn expm(a: &Array2<C>) -> Array2<C> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return Array2::zeros((0, 0));
    }
    let mut m = to_faer(a);
    let norm = one_norm(&m);
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    if s > 0 {
        let f = c64::new(0.5f64.powi(s), 0.0);
        m = Mat::from_fn(n, n, |i, j| m.read(i, j) * f);
    }
    let id = Mat::<c64>::identity(n, n);
    let a2 = &m * &m;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let lin = |c: [f64; 4], x6: &Mat<c64>, x4: &Mat<c64>, x2: &Mat<c64>, x0: &Mat<c64>| {
        Mat::from_fn(n, n, |i, j| {
            x6.read(i, j) * c64::new(c[0], 0.0)
                + x4.read(i, j) * c64::new(c[1], 0.0)
                + x2.read(i, j) * c64::new(c[2], 0.0)
                + x0.read(i, j) * c64::new(c[3], 0.0)
        })
    };
    let zero = Mat::<c64>::zeros(n, n);
    let u_inner = &a6 * &lin([B[13], B[11], B[9], 0.0], &a6, &a4, &a2, &zero);
    let u_rest = lin([B[7], B[5], B[3], B[1]], &a6, &a4, &a2, &id);
    let u = &m * &(&u_inner + &u_rest);
    let v_inner = &a6 * &lin([B[12], B[10], B[8], 0.0], &a6, &a4, &a2, &zero);
    let v_rest = lin([B[6], B[4], B[2], B[0]], &a6, &a4, &a2, &id);
    let v = &v_inner + &v_rest;
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.partial_piv_lu().solve(&p);
    for _ in 0..s {
        r = &r * &r;
    }
    from_faer(r.as_ref())
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
pub fn eigh(a: &Array2<C>) -> (Vec<f64>, Array2<C>) {
    let m = to_faer(a);
    let e = m.selfadjoint_eigendecomposition(Side::Lower);
    let s = e.s().column_vector();
    let vals = (0..s.nrows()).map(|i| s.read(i).re).collect();
    (vals, from_faer(e.u()))
}

/// exp(−i t H) for Hermitian H.
pub fn unitary_propagator(h: &Array2<C>, t: f64) -> Array2<C> {
    let (vals, vecs) = eigh(h);
    let n = vals.len();
    let mut out = Array2::<C>::zeros((n, n));
    for k in 0..n {
        let ph = C::new(0.0, -t * vals[k]).exp();
        for i in 0..n {
            let vi = vecs[[i, k]] * ph;
            for j in 0..n {
                out[[i, j]] += vi * vecs[[j, k]].conj();
            }
        }
    }
    out
}

/// Largest absolute entry of a − b.
pub fn max_abs_diff(a: &Array2<C>, b: &Array2<C>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
