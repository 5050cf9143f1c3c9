//! Executes a [`RunConfig`] and writes its artifacts.

use crate::bcf::{lindblad_bcf, parse_mode_table, ModeRow, TargetBcf};
use crate::checkpoint::{self, Checkpoint};
use crate::config::{JobKind, RunConfig};
use crate::error::{Error, Result};
use crate::fit::{fit_modes, FitOptions};
use crate::io;
use crate::model::NetworkSpec;
use crate::observables::{absorption_initial_state, lineshape, RecordOptions, Recorder, Sample};
use crate::oracle::DenseModel;
use crate::propagator::Propagator;
use crate::state::VibronicState;
use crate::units::{BOLTZMANN_CM1_PER_K, SPEED_OF_LIGHT_CM_PER_FS};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const OUTPUT_ENV: &str = "VIBRONIC_OUTPUT";

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub workers: Option<usize>,
    pub checkpoint: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub manifest: Value,
}

/// Output directory: `--output`, then the environment variable, then the
/// config, then `./output`.
pub fn resolve_output(flag: Option<&Path>, config: &RunConfig) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(v) = std::env::var_os(OUTPUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(v);
    }
    config.output.clone().unwrap_or_else(|| PathBuf::from("output"))
}

/// SHA-256 over the config with the output location and final time removed,
/// so a checkpoint can be resumed into another directory or extended.
pub fn config_digest(config: &RunConfig) -> String {
    let mut c = config.clone();
    c.output = None;
    if let Some(n) = c.numerics.as_mut() {
        n.t_final_fs = 0.0;
        n.checkpoint_every = 0;
    }
    checkpoint::sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
}

pub fn run(opts: &RunOptions) -> Result<RunSummary> {
    let config = RunConfig::load(&opts.config)?;
    run_config(&config, opts)
}

pub fn run_config(config: &RunConfig, opts: &RunOptions) -> Result<RunSummary> {
    config.validate()?;
    let out = resolve_output(opts.output.as_deref(), config);
    std::fs::create_dir_all(&out)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = opts.workers {
        if k == 0 {
            return Err(Error::Validation(vec!["--workers must be >= 1".into()]));
        }
        builder = builder.num_threads(k);
    }
    let pool = builder.build().map_err(|e| Error::Config(e.to_string()))?;
    let workers = pool.current_num_threads();
    let started = Instant::now();
    let mut ctx = JobContext { config, opts, out: &out, files: Vec::new(), summary: json!({}), step_wall_ms: Vec::new() };
    let result = pool.install(|| match config.job {
        JobKind::Dynamics => ctx.dynamics(),
        JobKind::Absorption => ctx.absorption(),
        JobKind::BcfFit => ctx.bcf_fit(),
        JobKind::OracleCompare => ctx.oracle_compare(),
    });
    let total_ms = started.elapsed().as_secs_f64() * 1e3;
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "job": config.job,
        "status": match &result { Ok(()) => "ok".to_string(), Err(e) => e.to_string() },
        "config": config,
        "config_digest": config_digest(config),
        "constants": {
            "speed_of_light_cm_per_fs": SPEED_OF_LIGHT_CM_PER_FS,
            "boltzmann_cm1_per_k": BOLTZMANN_CM1_PER_K,
            "dissipator_rate_convention": "2 gamma",
        },
        "workers": workers,
        "resumed_from": opts.resume.as_ref().map(|p| p.display().to_string()),
        "outputs": ctx.files,
        "summary": ctx.summary,
        "wall_ms": { "total": total_ms, "per_step": ctx.step_wall_ms },
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(out.join("manifest.json"), text)?;
    let files = ctx.files.clone();
    result.map(|_| RunSummary { output_dir: out, files, manifest })
}

struct JobContext<'a> {
    config: &'a RunConfig,
    opts: &'a RunOptions,
    out: &'a Path,
    files: Vec<String>,
    summary: Value,
    step_wall_ms: Vec<f64>,
}

/// State of a step loop that checkpoints can capture.
struct LoopState<'s> {
    state: VibronicState,
    recorder: Recorder<'s>,
    pending: f64,
}

impl<'a> JobContext<'a> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.out.join(name)
    }

    fn start<'s>(&self, spec: &'s NetworkSpec, fresh: VibronicState, record: RecordOptions) -> Result<LoopState<'s>> {
        let n = self.config.numerics()?;
        let mut recorder = Recorder::new(spec, record, n.sample_stride);
        if let Some(p) = &self.opts.resume {
            let ck = checkpoint::load(p)?;
            if ck.job != self.config.job || ck.config_digest != config_digest(self.config) {
                return Err(Error::Checkpoint(format!("{} was written for a different config", p.display())));
            }
            recorder.trajectory = ck.trajectory;
            return Ok(LoopState { state: ck.state, recorder, pending: ck.pending_increment });
        }
        recorder.observe(&fresh, 0.0)?;
        Ok(LoopState { state: fresh, recorder, pending: 0.0 })
    }

    fn save(&self, ls: &LoopState<'_>) -> Result<()> {
        if let Some(p) = &self.opts.checkpoint {
            let ck = Checkpoint {
                job: self.config.job,
                config_digest: config_digest(self.config),
                state: ls.state.clone(),
                trajectory: ls.recorder.trajectory.clone(),
                pending_increment: ls.pending,
            };
            checkpoint::save(p, &ck)?;
        }
        Ok(())
    }

    /// Steps to t_final with sampling, trace guard and checkpoints. A
    /// trace-guard abort is returned after the loop state is handed back so
    /// partial outputs can still be written.
    fn integrate(&mut self, spec: &NetworkSpec, ls: &mut LoopState<'_>) -> Result<()> {
        let n = self.config.numerics()?.clone();
        let prop = Propagator::new(spec, n.step_config())?;
        let total = (n.t_final_fs / n.dt_fs).round() as usize;
        let trace0 = ls.recorder.trajectory.samples.first().map(|s| s.trace).unwrap_or_else(|| ls.state.trace());
        while ls.state.steps < total {
            let t = Instant::now();
            let rep = prop.step(&mut ls.state)?;
            self.step_wall_ms.push(t.elapsed().as_secs_f64() * 1e3);
            ls.pending += rep.error.bound_increment;
            let tr = ls.state.trace();
            let drift = (tr - trace0).norm();
            if ls.state.steps % ls.recorder.stride == 0 || ls.state.steps == total || !(drift <= n.trace_guard) {
                let s = ls.recorder.sample(&ls.state, ls.pending)?;
                ls.recorder.trajectory.samples.push(s);
                ls.pending = 0.0;
            }
            if !(drift <= n.trace_guard) {
                self.save(ls)?;
                return Err(Error::TraceGuard { time_fs: ls.state.time_fs, trace: tr.re, drift, guard: n.trace_guard });
            }
            if n.checkpoint_every > 0 && ls.state.steps % n.checkpoint_every == 0 {
                self.save(ls)?;
            }
        }
        self.save(ls)
    }

    fn write_common(&mut self, spec: &NetworkSpec, samples: &[Sample]) -> Result<()> {
        let n = self.config.numerics()?.clone();
        let p = self.path("diagnostics.csv");
        io::write_diagnostics(&p, samples, n.dt_fs)?;
        if !self.config.record.modes.is_empty() {
            let p = self.path("modes.csv");
            io::write_modes(&p, &self.config.record.modes, samples)?;
        }
        if self.config.record.electronic_density {
            let p = self.path("electronic_density.csv");
            io::write_electronic_density(&p, samples)?;
        }
        let last = samples.last();
        self.summary["final_time_fs"] = json!(last.map(|s| s.time_fs));
        self.summary["cumulative_bound"] = json!(last.map(|s| s.cumulative_bound));
        self.summary["distance_bound"] = json!(last.map(|s| s.distance_bound));
        self.summary["max_bond_dim"] = json!(samples.iter().map(|s| s.max_bond).max());
        self.summary["n_electronic"] = json!(spec.n_electronic());
        Ok(())
    }

    fn dynamics(&mut self) -> Result<()> {
        let spec = self.config.network()?.clone();
        let fresh = VibronicState::init_product_state(&spec, &self.config.initial.to_initial())?;
        let mut ls = self.start(&spec, fresh, self.config.record.clone())?;
        let res = self.integrate(&spec, &mut ls);
        let samples = ls.recorder.trajectory.samples.clone();
        let labels = io::population_labels(&spec);
        let rows: Vec<(&str, &Sample)> = samples.iter().map(|s| ("mpo", s)).collect();
        let p = self.path("populations.csv");
        io::write_populations(&p, &labels, &rows, false)?;
        if self.config.record.dipoles.is_some() {
            let p = self.path("coherence.csv");
            io::write_coherence(&p, &ls.recorder.trajectory.times(), &ls.recorder.trajectory.coherence())?;
        }
        self.write_common(&spec, &samples)?;
        res
    }

    fn absorption(&mut self) -> Result<()> {
        let spec = self.config.network()?.clone();
        let abs = self.config.absorption.clone().ok_or_else(|| Error::Validation(vec!["missing [absorption] block".into()]))?;
        let dipoles = abs.dipoles.clone().unwrap_or_else(|| vec![1.0; spec.n_sites]);
        let fresh = absorption_initial_state(&spec, &dipoles)?;
        let record = RecordOptions { dipoles: Some(dipoles), ..self.config.record.clone() };
        let mut ls = self.start(&spec, fresh, record)?;
        let res = self.integrate(&spec, &mut ls);
        let samples = ls.recorder.trajectory.samples.clone();
        let times = ls.recorder.trajectory.times();
        let coh = ls.recorder.trajectory.coherence();
        let p = self.path("coherence.csv");
        io::write_coherence(&p, &times, &coh)?;
        self.write_common(&spec, &samples)?;
        res?;
        let dt = times.get(1).map(|t| t - times[0]).unwrap_or(self.config.numerics()?.dt_fs);
        let ls_out = lineshape(&coh, dt, &abs.grid, abs.window)?;
        let p = self.path("spectrum.csv");
        io::write_spectrum(&p, &ls_out)?;
        self.summary["peak_cm1"] = json!(ls_out.peak_cm1());
        self.summary["sideband_ratio"] = json!(ls_out.sideband_ratio());
        Ok(())
    }

    fn bcf_fit(&mut self) -> Result<()> {
        let f = self.config.bcf_fit.clone().ok_or_else(|| Error::Validation(vec!["missing [bcf_fit] block".into()]))?;
        let target = TargetBcf::new(f.density.clone(), f.temperature_k)?;
        let n = (f.t_max_fs / f.dt_fs).round() as usize;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * f.dt_fs).collect();
        let values: Vec<_> = times.iter().map(|&t| target.at(t)).collect::<Result<_>>()?;
        let init = match &f.initial_guess {
            Some(p) => {
                let rows = parse_mode_table(std::fs::File::open(p)?)?;
                Some(rows.iter().map(|r| r.to_mode(2)).collect::<Vec<_>>())
            }
            None => None,
        };
        let mut options = f.options.clone().unwrap_or_default();
        if f.options.is_none() {
            options = FitOptions { seed: self.config.seed, ..options };
        }
        let fit = fit_modes(&times, &values, f.q_count, init.as_deref(), &options)?;
        let fitted: Vec<_> = times.iter().map(|&t| lindblad_bcf(&fit.modes, t)).collect();
        let p = self.path("bcf.csv");
        io::write_bcf(&p, &times, &values, &fitted)?;
        let rows: Vec<ModeRow> = fit.modes.iter().enumerate().map(|(q, m)| ModeRow::from_mode(q + 1, m)).collect();
        let p = self.path("fitted_modes.csv");
        crate::bcf::write_mode_table(&p, &rows)?;
        self.summary = json!({
            "residual": fit.residual,
            "relative_residual": fit.relative_residual,
            "iterations": fit.iterations,
            "above_ceiling": fit.above_ceiling,
        });
        Ok(())
    }

    fn oracle_compare(&mut self) -> Result<()> {
        let spec = self.config.network()?.clone();
        let n = self.config.numerics()?.clone();
        let ceiling = self.config.oracle.clone().unwrap_or_default().dimension_ceiling;
        let model = DenseModel::with_ceiling(&spec, ceiling)?;
        let init = self.config.initial.to_initial();
        let fresh = VibronicState::init_product_state(&spec, &init)?;
        let rho0 = fresh.to_dense()?;
        let mut ls = self.start(&spec, fresh, self.config.record.clone())?;
        self.integrate(&spec, &mut ls)?;
        let samples = ls.recorder.trajectory.samples.clone();
        let sample_dt = n.dt_fs * n.sample_stride as f64;
        let mut dense: Vec<Sample> = Vec::new();
        model.evolve(&rho0, n.t_final_fs, sample_dt, |t, rho| {
            dense.push(Sample { time_fs: t, populations: model.populations(rho), ..Default::default() });
            Ok(())
        })?;
        let mut max_dev: f64 = 0.0;
        for (a, b) in samples.iter().zip(&dense) {
            for (x, y) in a.populations.iter().zip(&b.populations) {
                max_dev = max_dev.max((x - y).abs());
            }
        }
        let labels = io::population_labels(&spec);
        let mut rows: Vec<(&str, &Sample)> = samples.iter().map(|s| ("mpo", s)).collect();
        rows.extend(dense.iter().map(|s| ("oracle", s)));
        let p = self.path("populations.csv");
        io::write_populations(&p, &labels, &rows, true)?;
        self.write_common(&spec, &samples)?;
        self.summary["max_population_deviation"] = json!(max_dev);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flag_beats_environment_beats_config() {
        let mut cfg = RunConfig::from_toml("job = \"bcf_fit\"").unwrap();
        cfg.output = Some(PathBuf::from("from_config"));
        assert_eq!(resolve_output(Some(Path::new("flag")), &cfg), PathBuf::from("flag"));
        assert_eq!(resolve_output(None, &cfg), std::env::var_os(OUTPUT_ENV).map(PathBuf::from).unwrap_or("from_config".into()));
    }

    #[test]
    fn digest_ignores_output_and_final_time() {
        let text = r#"
job = "dynamics"
output = "a"
[numerics]
dt_fs = 0.5
t_final_fs = 10.0
"#;
        let a = RunConfig::from_toml(text).unwrap();
        let mut b = a.clone();
        b.output = Some("b".into());
        b.numerics.as_mut().unwrap().t_final_fs = 20.0;
        assert_eq!(config_digest(&a), config_digest(&b));
        b.numerics.as_mut().unwrap().dt_fs = 0.25;
        assert_ne!(config_digest(&a), config_digest(&b));
    }
}
