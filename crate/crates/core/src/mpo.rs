//! Matrix product operators over oscillator-basis coefficients.
//!
//! A chain of M rank-3 tensors A_i[l, j, r]; the coefficient of
//! x_{j1} ⊗ … ⊗ x_{jM} is the matrix product A_1[j1] ⋯ A_M[jM]. Because the
//! operator basis is orthonormal, Frobenius norms and inner products of the
//! operators equal those of the coefficient tensors.

use crate::error::{Error, Result};
use crate::linalg::{from_c64, to_c64};
use faer::complex_native::c64;
use faer::Mat;
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

/// Relative floor below which singular values are always dropped.
pub const NOISE_FLOOR: f64 = 1e-14;

/// Row-major tensor of shape (dl, p, dr).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteTensor {
    pub dl: usize,
    pub p: usize,
    pub dr: usize,
    pub data: Vec<C>,
}

impl SiteTensor {
    pub fn zeros(dl: usize, p: usize, dr: usize) -> Self {
        Self { dl, p, dr, data: vec![ZERO; dl * p * dr] }
    }

    #[inline]
    pub fn idx(&self, l: usize, j: usize, r: usize) -> usize {
        (l * self.p + j) * self.dr + r
    }

    #[inline]
    pub fn get(&self, l: usize, j: usize, r: usize) -> C {
        self.data[self.idx(l, j, r)]
    }

    /// View as a (dl·p) × dr matrix.
    fn left_grouped(&self) -> Mat<c64> {
        let cols = self.dr;
        Mat::from_fn(self.dl * self.p, cols, |i, j| to_c64(self.data[i * cols + j]))
    }

    /// View as a dl × (p·dr) matrix.
    fn right_grouped(&self) -> Mat<c64> {
        let cols = self.p * self.dr;
        Mat::from_fn(self.dl, cols, |i, j| to_c64(self.data[i * cols + j]))
    }

    fn from_mat(m: &Mat<c64>, dl: usize, p: usize, dr: usize) -> Self {
        debug_assert_eq!(m.nrows() * m.ncols(), dl * p * dr);
        let cols = m.ncols();
        let mut data = Vec::with_capacity(dl * p * dr);
        for i in 0..m.nrows() {
            for j in 0..cols {
                data.push(from_c64(m.read(i, j)));
            }
        }
        Self { dl, p, dr, data }
    }
}

/// Truncation record of one compression: discarded weight Σσ² per bond.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompressionReport {
    pub per_bond_truncation: Vec<f64>,
}

impl CompressionReport {
    /// Upper bound on the squared Frobenius distance, 2Σε.
    pub fn bound(&self) -> f64 {
        2.0 * self.per_bond_truncation.iter().sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mpo {
    pub sites: Vec<SiteTensor>,
}

impl Mpo {
    /// Bond-dimension-one operator from per-site coefficient vectors.
    pub fn product(factors: &[Vec<C>]) -> Self {
        let sites = factors
            .iter()
            .map(|f| SiteTensor { dl: 1, p: f.len(), dr: 1, data: f.clone() })
            .collect();
        Self { sites }
    }

    pub fn zeros(phys: &[usize]) -> Self {
        Self { sites: phys.iter().map(|&p| SiteTensor::zeros(1, p, 1)).collect() }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn phys_dims(&self) -> Vec<usize> {
        self.sites.iter().map(|s| s.p).collect()
    }

    /// Interior bond dimensions d_2 … d_M.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites.iter().skip(1).map(|s| s.dl).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    /// True when every stored entry is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.sites.iter().any(|s| s.data.iter().all(|z| *z == ZERO))
    }

    pub fn scale(&mut self, c: C) {
        if let Some(first) = self.sites.first_mut() {
            first.data.iter_mut().for_each(|z| *z *= c);
        }
    }

    pub fn scaled(&self, c: C) -> Self {
        let mut out = self.clone();
        out.scale(c);
        out
    }

    /// Operator adjoint. Every basis element is Hermitian, so this conjugates
    /// the coefficients.
    pub fn adjoint(&self) -> Self {
        let sites = self
            .sites
            .iter()
            .map(|s| SiteTensor { data: s.data.iter().map(|z| z.conj()).collect(), ..s.clone() })
            .collect();
        Self { sites }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.phys_dims() != other.phys_dims() {
            return Err(Error::Shape(format!(
                "MPO physical dims differ: {:?} vs {:?}",
                self.phys_dims(),
                other.phys_dims()
            )));
        }
        Ok(())
    }

    /// Direct sum representing ca·a + cb·b. Interior bonds add.
    pub fn add(a: &Self, b: &Self, ca: C, cb: C) -> Result<Self> {
        a.check_compatible(b)?;
        let m = a.len();
        if m == 0 {
            return Ok(a.clone());
        }
        if m == 1 {
            let (sa, sb) = (&a.sites[0], &b.sites[0]);
            let data = sa.data.iter().zip(&sb.data).map(|(x, y)| ca * x + cb * y).collect();
            return Ok(Self { sites: vec![SiteTensor { dl: 1, p: sa.p, dr: 1, data }] });
        }
        let mut sites = Vec::with_capacity(m);
        for i in 0..m {
            let (sa, sb) = (&a.sites[i], &b.sites[i]);
            let p = sa.p;
            let first = i == 0;
            let last = i == m - 1;
            let dl = if first { 1 } else { sa.dl + sb.dl };
            let dr = if last { 1 } else { sa.dr + sb.dr };
            let mut t = SiteTensor::zeros(dl, p, dr);
            let (fa, fb) = if first { (ca, cb) } else { (C::new(1.0, 0.0), C::new(1.0, 0.0)) };
            let (ro_b, co_b) = (if first { 0 } else { sa.dl }, if last { 0 } else { sa.dr });
            for l in 0..sa.dl {
                for j in 0..p {
                    for r in 0..sa.dr {
                        let k = t.idx(l, j, r);
                        t.data[k] = fa * sa.get(l, j, r);
                    }
                }
            }
            for l in 0..sb.dl {
                for j in 0..p {
                    for r in 0..sb.dr {
                        let k = t.idx(l + ro_b, j, r + co_b);
                        t.data[k] += fb * sb.get(l, j, r);
                    }
                }
            }
            sites.push(t);
        }
        Ok(Self { sites })
    }

    /// A_i[l, j, r] ← Σ_k w[j, k] A_i[l, k, r].
    pub fn apply_physical(&mut self, i: usize, w: &Array2<C>) {
        let s = &mut self.sites[i];
        let p = s.p;
        debug_assert_eq!(w.dim(), (p, p));
        let mut col = vec![ZERO; p];
        for l in 0..s.dl {
            for r in 0..s.dr {
                for (k, c) in col.iter_mut().enumerate() {
                    *c = s.data[(l * p + k) * s.dr + r];
                }
                for j in 0..p {
                    let mut acc = ZERO;
                    for k in 0..p {
                        acc += w[[j, k]] * col[k];
                    }
                    s.data[(l * p + j) * s.dr + r] = acc;
                }
            }
        }
    }

    /// QR sweep left to right, then truncating SVD sweep right to left.
    /// Keeps at most `chi` singular values per bond, never more than those
    /// above `NOISE_FLOOR`·σ_max, and always at least one.
    pub fn compress(&self, chi: usize) -> (Self, CompressionReport) {
        crate::linalg::single_threaded();
        let chi = chi.max(1);
        let m = self.len();
        let mut sites = self.sites.clone();
        let mut report = CompressionReport { per_bond_truncation: vec![0.0; m.saturating_sub(1)] };
        if m < 2 {
            return (Self { sites }, report);
        }
        for i in 0..m - 1 {
            let (dl, p) = (sites[i].dl, sites[i].p);
            let a = sites[i].left_grouped();
            let qr = a.qr();
            let q = qr.compute_thin_q();
            let r = qr.compute_thin_r();
            let k = q.ncols();
            sites[i] = SiteTensor::from_mat(&q, dl, p, k);
            let next = &sites[i + 1];
            let (np, ndr) = (next.p, next.dr);
            let prod = &r * &next.right_grouped();
            sites[i + 1] = SiteTensor::from_mat(&prod, k, np, ndr);
        }
        for i in (1..m).rev() {
            let (dl, p, dr) = (sites[i].dl, sites[i].p, sites[i].dr);
            let a = sites[i].right_grouped();
            let svd = a.thin_svd();
            let s_col = svd.s_diagonal();
            let sv: Vec<f64> = (0..s_col.nrows()).map(|k| s_col.read(k).re).collect();
            let mut order: Vec<usize> = (0..sv.len()).collect();
            order.sort_by(|&x, &y| sv[y].partial_cmp(&sv[x]).unwrap_or(std::cmp::Ordering::Equal));
            let smax = order.first().map(|&k| sv[k]).unwrap_or(0.0);
            let mut keep = order
                .iter()
                .take(chi)
                .take_while(|&&k| sv[k] > NOISE_FLOOR * smax)
                .count()
                .max(1);
            keep = keep.min(order.len());
            let kept = &order[..keep];
            report.per_bond_truncation[i - 1] = order[keep..].iter().map(|&k| sv[k] * sv[k]).sum();

            let u = svd.u();
            let v = svd.v();
            // new site i = V^H restricted to kept rows
            let vh = Mat::from_fn(keep, p * dr, |a_, b_| v.read(b_, kept[a_]).conj());
            sites[i] = SiteTensor::from_mat(&vh, keep, p, dr);
            let us = Mat::from_fn(dl, keep, |a_, b_| u.read(a_, kept[b_]) * c64::new(sv[kept[b_]], 0.0));
            let prev = &sites[i - 1];
            let (pdl, pp) = (prev.dl, prev.p);
            let prod = &prev.left_grouped() * &us;
            sites[i - 1] = SiteTensor::from_mat(&prod, pdl, pp, keep);
        }
        (Self { sites }, report)
    }

    fn scale_identity_slices(&mut self, w: &[f64]) {
        for (s, &wi) in self.sites.iter_mut().zip(w) {
            for l in 0..s.dl {
                for r in 0..s.dr {
                    let k = s.idx(l, 0, r);
                    s.data[k] *= wi;
                }
            }
        }
    }

    /// Truncation in a rescaled gauge where the identity coefficient of site
    /// i carries weight `w[i]` ≥ 1. Errors in reduced operators, the trace
    /// among them, then cost more than errors in high-order correlations.
    /// The discarded weights refer to the rescaled coefficients, so the
    /// returned value is the Frobenius distance², measured directly.
    pub fn compress_weighted(&self, chi: usize, w: &[f64]) -> (Self, f64) {
        let mut scaled = self.clone();
        scaled.scale_identity_slices(w);
        let (mut out, _) = scaled.compress(chi);
        let inv: Vec<f64> = w.iter().map(|x| 1.0 / x).collect();
        out.scale_identity_slices(&inv);
        let diff = Self::add(self, &out, C::new(1.0, 0.0), C::new(-1.0, 0.0)).expect("same shape");
        let d = diff.canonical_norm();
        (out, d * d)
    }

    /// Frobenius norm from a QR sweep. Unlike the transfer-matrix inner
    /// product, its rounding error scales with the norm itself rather than
    /// its square, which matters for differences of nearly equal operators.
    pub fn canonical_norm(&self) -> f64 {
        crate::linalg::single_threaded();
        let m = self.len();
        if m == 0 {
            return 0.0;
        }
        let mut carry: Option<Mat<c64>> = None;
        for (i, site) in self.sites.iter().enumerate() {
            let t = match &carry {
                Some(r) => {
                    let prod = r * &site.right_grouped();
                    SiteTensor::from_mat(&prod, r.nrows(), site.p, site.dr)
                }
                None => site.clone(),
            };
            if i + 1 == m {
                return t.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            }
            let qr = t.left_grouped().qr();
            carry = Some(qr.compute_thin_r());
        }
        unreachable!()
    }

    /// Tr(x† y) via left-to-right transfer matrices.
    pub fn inner(x: &Self, y: &Self) -> Result<C> {
        x.check_compatible(y)?;
        let mut e = vec![C::new(1.0, 0.0)];
        let (mut ex, mut ey) = (1usize, 1usize);
        for (sx, sy) in x.sites.iter().zip(&y.sites) {
            debug_assert_eq!((sx.dl, sy.dl), (ex, ey));
            let p = sx.p;
            // t[l, j, r'] = Σ_l' e[l, l'] y[l', j, r']
            let mut t = vec![ZERO; ex * p * sy.dr];
            for l in 0..ex {
                for lp in 0..ey {
                    let c = e[l * ey + lp];
                    if c == ZERO {
                        continue;
                    }
                    let src = &sy.data[lp * p * sy.dr..(lp + 1) * p * sy.dr];
                    let dst = &mut t[l * p * sy.dr..(l + 1) * p * sy.dr];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += c * s;
                    }
                }
            }
            let mut next = vec![ZERO; sx.dr * sy.dr];
            for lj in 0..ex * p {
                for r in 0..sx.dr {
                    let xc = sx.data[lj * sx.dr + r].conj();
                    if xc == ZERO {
                        continue;
                    }
                    let row = &t[lj * sy.dr..(lj + 1) * sy.dr];
                    let dst = &mut next[r * sy.dr..(r + 1) * sy.dr];
                    for (d, s) in dst.iter_mut().zip(row) {
                        *d += xc * s;
                    }
                }
            }
            e = next;
            ex = sx.dr;
            ey = sy.dr;
        }
        Ok(e.into_iter().sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        Self::inner(self, self).map(|z| z.re.max(0.0).sqrt()).unwrap_or(0.0)
    }

    /// Product of the index-0 (identity-coefficient) slices along the chain.
    pub fn identity_component(&self) -> C {
        let mut v = vec![C::new(1.0, 0.0)];
        for s in &self.sites {
            let mut next = vec![ZERO; s.dr];
            for (l, vl) in v.iter().enumerate() {
                for (r, n) in next.iter_mut().enumerate() {
                    *n += vl * s.get(l, 0, r);
                }
            }
            v = next;
        }
        v.into_iter().sum()
    }

    /// Coefficient vector of site `k` with every other site contracted on its
    /// index-0 slice.
    pub fn open_site_component(&self, k: usize) -> Vec<C> {
        let mut left = vec![C::new(1.0, 0.0)];
        for s in &self.sites[..k] {
            let mut next = vec![ZERO; s.dr];
            for (l, vl) in left.iter().enumerate() {
                for (r, n) in next.iter_mut().enumerate() {
                    *n += vl * s.get(l, 0, r);
                }
            }
            left = next;
        }
        let mut right = vec![C::new(1.0, 0.0)];
        for s in self.sites[k + 1..].iter().rev() {
            let mut next = vec![ZERO; s.dl];
            for (l, n) in next.iter_mut().enumerate() {
                for (r, vr) in right.iter().enumerate() {
                    *n += s.get(l, 0, r) * vr;
                }
            }
            right = next;
        }
        let s = &self.sites[k];
        (0..s.p)
            .map(|j| {
                let mut acc = ZERO;
                for l in 0..s.dl {
                    for r in 0..s.dr {
                        acc += left[l] * s.get(l, j, r) * right[r];
                    }
                }
                acc
            })
            .collect()
    }

    /// Full coefficient tensor, first site slowest. Small chains only.
    pub fn to_dense(&self) -> Vec<C> {
        let mut cur: Vec<C> = vec![C::new(1.0, 0.0)];
        let mut rows = 1usize;
        let mut bond = 1usize;
        for s in &self.sites {
            let mut next = vec![ZERO; rows * s.p * s.dr];
            for a in 0..rows {
                for l in 0..bond {
                    let c = cur[a * bond + l];
                    if c == ZERO {
                        continue;
                    }
                    for j in 0..s.p {
                        for r in 0..s.dr {
                            next[(a * s.p + j) * s.dr + r] += c * s.get(l, j, r);
                        }
                    }
                }
            }
            rows *= s.p;
            bond = s.dr;
            cur = next;
        }
        cur
    }
}
