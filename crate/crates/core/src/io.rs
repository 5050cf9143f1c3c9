//! Fixed-schema CSV outputs.

use crate::error::Result;
use crate::model::NetworkSpec;
use crate::observables::{Lineshape, Sample};
use num_complex::Complex64;
use std::path::Path;

/// Round-trip exact, locale independent.
pub fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?)
}

/// Column names for the electronic populations: site_1 … site_N, then ground.
pub fn population_labels(spec: &NetworkSpec) -> Vec<String> {
    let mut v: Vec<String> = (1..=spec.n_sites).map(|k| format!("site_{k}")).collect();
    if spec.has_ground_state {
        v.push("ground".into());
    }
    v
}

/// `time_fs, site_1, …`; with `provenance`, a leading column naming the source
/// of every row.
pub fn write_populations(path: &Path, labels: &[String], rows: &[(&str, &Sample)], with_provenance: bool) -> Result<()> {
    let mut w = writer(path)?;
    let mut head: Vec<String> = Vec::new();
    if with_provenance {
        head.push("provenance".into());
    }
    head.push("time_fs".into());
    head.extend(labels.iter().cloned());
    w.write_record(&head)?;
    for (prov, s) in rows {
        let mut rec: Vec<String> = Vec::with_capacity(head.len());
        if with_provenance {
            rec.push((*prov).to_string());
        }
        rec.push(fmt(s.time_fs));
        rec.extend(s.populations.iter().map(|&p| fmt(p)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_coherence(path: &Path, times: &[f64], values: &[Complex64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["time_fs", "coherence_re", "coherence_im"])?;
    for (t, c) in times.iter().zip(values) {
        w.write_record([fmt(*t), fmt(c.re), fmt(c.im)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_spectrum(path: &Path, l: &Lineshape) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["omega_cm1", "wavelength_nm", "intensity"])?;
    for k in 0..l.omega_cm1.len() {
        w.write_record([fmt(l.omega_cm1[k]), fmt(l.wavelength_nm[k]), fmt(l.intensity[k])])?;
    }
    w.flush()?;
    Ok(())
}

/// `step, time_fs, error_bound_increment, cumulative_bound, distance_bound,
/// max_bond_dim`. The increment covers the steps since the previous row.
pub fn write_diagnostics(path: &Path, samples: &[Sample], dt_fs: f64) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["step", "time_fs", "error_bound_increment", "cumulative_bound", "distance_bound", "max_bond_dim"])?;
    for s in samples {
        let step = (s.time_fs / dt_fs).round() as u64;
        w.write_record([
            step.to_string(),
            fmt(s.time_fs),
            fmt(s.error_bound_increment),
            fmt(s.cumulative_bound),
            fmt(s.distance_bound),
            s.max_bond.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `time_fs, n_<k>, mandel_<k>, …` for the recorded oscillators. Missing
/// Mandel values are empty fields.
pub fn write_modes(path: &Path, modes: &[usize], samples: &[Sample]) -> Result<()> {
    let mut w = writer(path)?;
    let mut head = vec!["time_fs".to_string()];
    for k in modes {
        head.push(format!("n_{k}"));
        head.push(format!("mandel_{k}"));
    }
    w.write_record(&head)?;
    for s in samples {
        let mut rec = vec![fmt(s.time_fs)];
        for (n, m) in s.mode_occupation.iter().zip(&s.mandel) {
            rec.push(fmt(*n));
            rec.push(m.map(fmt).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `time_fs, re_<m>_<n>, im_<m>_<n>, …` over the upper triangle m ≤ n
/// (1-based labels). Rows without a recorded matrix are skipped.
pub fn write_electronic_density(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut w = writer(path)?;
    let d = samples.iter().find_map(|s| s.electronic_density.as_ref()).map(|r| r.nrows()).unwrap_or(0);
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|m| (m..d).map(move |n| (m, n))).collect();
    let mut head = vec!["time_fs".to_string()];
    for (m, n) in &pairs {
        head.push(format!("re_{}_{}", m + 1, n + 1));
        head.push(format!("im_{}_{}", m + 1, n + 1));
    }
    w.write_record(&head)?;
    for s in samples {
        if let Some(rho) = &s.electronic_density {
            let mut rec = vec![fmt(s.time_fs)];
            for &(m, n) in &pairs {
                rec.push(fmt(rho[[m, n]].re));
                rec.push(fmt(rho[[m, n]].im));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_bcf(path: &Path, times: &[f64], target: &[Complex64], fitted: &[Complex64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["time_fs", "target_re", "target_im", "fit_re", "fit_im"])?;
    for k in 0..times.len() {
        w.write_record([fmt(times[k]), fmt(target[k].re), fmt(target[k].im), fmt(fitted[k].re), fmt(fitted[k].im)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV of numbers with a header into (header, rows).
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let head = r.headers()?.iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(rec.iter().map(|f| f.trim().parse::<f64>().unwrap_or(f64::NAN)).collect());
    }
    Ok((head, rows))
}
