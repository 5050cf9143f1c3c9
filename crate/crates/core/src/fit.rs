//! Least-squares fit of Lindblad-mode parameters to a sampled BCF.
//!
//! Projected Levenberg–Marquardt with an analytic Jacobian. Each mode is
//! parametrized internally by (ω [rad/fs], γ [fs⁻¹], s, n̄); temperatures are
//! recovered from n̄ at the end.

use crate::bcf::lindblad_bcf;
use crate::error::{Error, Result};
use crate::model::{thermal_occupancy, ModeSpec};
use crate::units::{angular_to_cm1, cm1_to_angular, BOLTZMANN_CM1_PER_K};
use faer::prelude::SpSolver;
use faer::Mat;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

type C = Complex64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitBounds {
    pub omega_cm1: (f64, f64),
    pub gamma_per_fs: (f64, f64),
    pub huang_rhys: (f64, f64),
    pub temperature_k: (f64, f64),
}

impl Default for FitBounds {
    fn default() -> Self {
        Self {
            omega_cm1: (10.0, 4000.0),
            gamma_per_fs: (1e-5, 1.0),
            huang_rhys: (0.0, 10.0),
            temperature_k: (0.0, 1000.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub seed: u64,
    /// Random restarts used when no initial guess is given.
    pub restarts: usize,
    /// Relative residual above which the fit is flagged.
    pub residual_ceiling: f64,
    pub bounds: FitBounds,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 2000, seed: 0, restarts: 4, residual_ceiling: 1e-2, bounds: FitBounds::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeFit {
    /// Fitted modes; `n_levels` is a placeholder of 2.
    pub modes: Vec<ModeSpec>,
    /// Σ_t |C_fit − C_target|² in rad⁴/fs⁴.
    pub residual: f64,
    /// `residual` over Σ_t |C_target|².
    pub relative_residual: f64,
    pub iterations: usize,
    /// Residual after every accepted step (non-increasing).
    pub history: Vec<f64>,
    pub above_ceiling: bool,
}

#[derive(Clone, Copy, Debug)]
struct P {
    w: f64,
    g: f64,
    s: f64,
    n: f64,
}

fn nbar_cap(w: f64, t_max: f64) -> f64 {
    if t_max <= 0.0 {
        0.0
    } else {
        thermal_occupancy(angular_to_cm1(w), t_max).unwrap_or(0.0)
    }
}

fn temperature_of(w_cm1: f64, nbar: f64) -> f64 {
    if nbar <= 0.0 {
        0.0
    } else {
        w_cm1 / (BOLTZMANN_CM1_PER_K * (1.0 + 1.0 / nbar).ln())
    }
}

fn project(p: &mut [P], b: &FitBounds) {
    let (wl, wh) = (cm1_to_angular(b.omega_cm1.0), cm1_to_angular(b.omega_cm1.1));
    for m in p.iter_mut() {
        m.w = m.w.clamp(wl, wh);
        m.g = m.g.clamp(b.gamma_per_fs.0, b.gamma_per_fs.1);
        m.s = m.s.clamp(b.huang_rhys.0, b.huang_rhys.1);
        let lo = nbar_cap(m.w, b.temperature_k.0);
        let hi = nbar_cap(m.w, b.temperature_k.1);
        m.n = m.n.clamp(lo, hi.max(lo));
    }
}

fn model(p: &[P], t: f64) -> C {
    p.iter()
        .map(|m| {
            let em = C::new(-m.g * t, -m.w * t).exp();
            let ep = C::new(-m.g * t, m.w * t).exp();
            m.w * m.w * m.s * ((m.n + 1.0) * em + m.n * ep)
        })
        .sum()
}

fn cost(p: &[P], times: &[f64], target: &[C]) -> f64 {
    times.iter().zip(target).map(|(&t, y)| (model(p, t) - y).norm_sqr()).sum()
}

/// Residual vector (re, im interleaved) and Jacobian, row-major 2K × 4Q.
fn residual_and_jacobian(p: &[P], times: &[f64], target: &[C]) -> (Vec<f64>, Mat<f64>) {
    let k = times.len();
    let np = 4 * p.len();
    let mut r = vec![0.0; 2 * k];
    let mut jac = Mat::<f64>::zeros(2 * k, np);
    for (i, (&t, y)) in times.iter().zip(target).enumerate() {
        let mut sum = C::new(0.0, 0.0);
        for (q, m) in p.iter().enumerate() {
            let em = C::new(-m.g * t, -m.w * t).exp();
            let ep = C::new(-m.g * t, m.w * t).exp();
            let a = m.w * m.w * m.s;
            let mix = (m.n + 1.0) * em + m.n * ep;
            sum += a * mix;
            let d_w = 2.0 * m.w * m.s * mix + a * ((m.n + 1.0) * C::new(0.0, -t) * em + m.n * C::new(0.0, t) * ep);
            let d_g = a * mix * (-t);
            let d_s = m.w * m.w * mix;
            let d_n = a * (em + ep);
            for (c, d) in [d_w, d_g, d_s, d_n].into_iter().enumerate() {
                jac.write(2 * i, 4 * q + c, d.re);
                jac.write(2 * i + 1, 4 * q + c, d.im);
            }
        }
        let diff = sum - y;
        r[2 * i] = diff.re;
        r[2 * i + 1] = diff.im;
    }
    (r, jac)
}

fn levenberg_marquardt(mut p: Vec<P>, times: &[f64], target: &[C], opts: &FitOptions) -> (Vec<P>, f64, usize, Vec<f64>) {
    project(&mut p, &opts.bounds);
    let np = 4 * p.len();
    let mut c = cost(&p, times, target);
    let mut history = vec![c];
    let mut lambda = 1e-3;
    let mut iters = 0;
    let mut stalls = 0;
    while iters < opts.max_iterations {
        iters += 1;
        let (r, jac) = residual_and_jacobian(&p, times, target);
        let jt = jac.transpose();
        let a = jt * &jac;
        let rv = Mat::<f64>::from_fn(r.len(), 1, |i, _| r[i]);
        let g = jt * &rv;
        let mut improved = false;
        while lambda < 1e16 {
            let m = Mat::<f64>::from_fn(np, np, |i, j| {
                if i == j {
                    a.read(i, i) * (1.0 + lambda) + 1e-300
                } else {
                    a.read(i, j)
                }
            });
            let delta = m.partial_piv_lu().solve(&g);
            let mut trial = p.clone();
            for (q, t) in trial.iter_mut().enumerate() {
                t.w -= delta.read(4 * q, 0);
                t.g -= delta.read(4 * q + 1, 0);
                t.s -= delta.read(4 * q + 2, 0);
                t.n -= delta.read(4 * q + 3, 0);
            }
            project(&mut trial, &opts.bounds);
            let ct = cost(&trial, times, target);
            if ct.is_finite() && ct < c {
                let rel = (c - ct) / c.max(1e-300);
                p = trial;
                c = ct;
                history.push(c);
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                stalls = if rel < 1e-12 { stalls + 1 } else { 0 };
                break;
            }
            lambda *= 4.0;
        }
        if !improved || stalls >= 5 || c == 0.0 {
            break;
        }
    }
    (p, c, iters, history)
}

fn to_params(modes: &[ModeSpec]) -> Vec<P> {
    modes
        .iter()
        .map(|m| P { w: m.omega(), g: m.gamma_per_fs, s: m.huang_rhys, n: m.mean_occupation() })
        .collect()
}

fn seeded_guess(q_count: usize, target: &[C], rng: &mut ChaCha8Rng, b: &FitBounds) -> Vec<P> {
    let (lo, hi) = (b.omega_cm1.0.max(50.0), b.omega_cm1.1.min(2500.0));
    let c0 = target.first().map(|z| z.re.abs()).unwrap_or(1.0).max(1e-12);
    (0..q_count)
        .map(|q| {
            let frac = (q as f64 + rng.gen_range(0.2..0.8)) / q_count as f64;
            let w_cm1 = lo + (hi - lo) * frac;
            let w = cm1_to_angular(w_cm1);
            let n = thermal_occupancy(w_cm1, 300.0).unwrap_or(0.0);
            let s = c0 / (q_count as f64 * w * w * (2.0 * n + 1.0));
            P { w, g: 1.0 / rng.gen_range(50.0..300.0), s, n }
        })
        .collect()
}

/// Fits `q_count` modes to `target` sampled at `times` (fs). Deterministic for
/// a fixed seed and initial guess.
pub fn fit_modes(times: &[f64], target: &[C], q_count: usize, init: Option<&[ModeSpec]>, opts: &FitOptions) -> Result<ModeFit> {
    if times.len() != target.len() || times.is_empty() {
        return Err(Error::Shape("fit needs equally long, non-empty time and target arrays".into()));
    }
    if q_count == 0 {
        return Err(Error::Domain("q_count must be >= 1".into()));
    }
    let starts: Vec<Vec<P>> = match init {
        Some(m) => {
            if m.len() != q_count {
                return Err(Error::Shape(format!("initial guess has {} modes, q_count = {q_count}", m.len())));
            }
            vec![to_params(m)]
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            (0..opts.restarts.max(1)).map(|_| seeded_guess(q_count, target, &mut rng, &opts.bounds)).collect()
        }
    };
    let mut best: Option<(Vec<P>, f64, usize, Vec<f64>)> = None;
    for s in starts {
        let out = levenberg_marquardt(s, times, target, opts);
        if best.as_ref().map_or(true, |b| out.1 < b.1) {
            best = Some(out);
        }
    }
    let (p, residual, iterations, history) = best.expect("at least one start");
    let energy: f64 = target.iter().map(|z| z.norm_sqr()).sum();
    let relative = residual / energy.max(1e-300);
    let modes = p
        .iter()
        .map(|m| {
            let w_cm1 = angular_to_cm1(m.w);
            let t = temperature_of(w_cm1, m.n).clamp(opts.bounds.temperature_k.0, opts.bounds.temperature_k.1);
            ModeSpec::new(w_cm1, m.s, m.g, t, 2)
        })
        .collect();
    Ok(ModeFit { modes, residual, relative_residual: relative, iterations, history, above_ceiling: relative > opts.residual_ceiling })
}

/// Σ_t |lindblad_bcf(modes, t) − target(t)|² / Σ_t |target(t)|².
pub fn relative_misfit(modes: &[ModeSpec], times: &[f64], target: &[C]) -> f64 {
    let num: f64 = times.iter().zip(target).map(|(&t, y)| (lindblad_bcf(modes, t) - y).norm_sqr()).sum();
    let den: f64 = target.iter().map(|z| z.norm_sqr()).sum();
    num / den
}
