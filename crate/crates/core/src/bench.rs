//! Variant throughput benchmark.
//!
//! Every variant runs the same workload: a batch of environments driven by
//! keyed uniform random actions. Each repetition builds the batch (timed as
//! setup), runs untimed warm-up steps, then times `n_steps` batch steps.
//! Reported figures are medians over repetitions.

use std::fmt::Write as _;
use std::time::Instant;

use crate::env::config::EnvConfig;
use crate::env::policy::{Policy, RandomPolicy};
use crate::env::BatchEnv;
use crate::error::EnvError;
use crate::model::{MechanismModel, VariantSpec};

pub const CSV_HEADER: &str = "variant,time_per_step_us,steps_per_sec,setup_s,overhead_pct";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub n_envs: usize,
    pub n_steps: usize,
    pub repeats: usize,
    pub warmup_steps: usize,
    pub action_amplitude: f64,
    pub env: EnvConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { n_envs: 1024, n_steps: 400, repeats: 5, warmup_steps: 50, action_amplitude: 0.1, env: EnvConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub variant: String,
    /// Median wall time per environment step (µs).
    pub time_per_step_us: f64,
    pub steps_per_sec: f64,
    pub setup_s: f64,
    /// Relative to the simplified variant; NaN when it was not measured.
    pub overhead_pct: f64,
    /// Per-repetition `time_per_step_us`.
    pub samples_us: Vec<f64>,
    /// Checksum of every simulator state after the run.
    pub checksum: u64,
    pub error: Option<String>,
}

impl BenchRow {
    fn failed(variant: &str, err: String) -> Self {
        Self {
            variant: variant.into(),
            time_per_step_us: f64::NAN,
            steps_per_sec: f64::NAN,
            setup_s: f64::NAN,
            overhead_pct: f64::NAN,
            samples_us: Vec::new(),
            checksum: 0,
            error: Some(err),
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub n_envs: usize,
    pub n_steps: usize,
    pub repeats: usize,
    pub rows: Vec<BenchRow>,
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Run {
    step_us: f64,
    setup_s: f64,
    checksum: u64,
}

fn run_once(model: &MechanismModel, variant: VariantSpec, cfg: &BenchConfig) -> Result<Run, EnvError> {
    let t0 = Instant::now();
    let mut batch = BatchEnv::new(model, variant, &cfg.env, cfg.n_envs)?;
    let setup_s = t0.elapsed().as_secs_f64();
    let mut policy = RandomPolicy { seed: cfg.env.seed, amplitude: cfg.action_amplitude, n_actions: batch.num_actions() };
    let indices = batch.indices().to_vec();
    let mut actions = vec![0.0; batch.len() * batch.num_actions()];
    let obs_len = batch.obs_len();
    for s in 0..cfg.warmup_steps {
        policy.act(s as u64, &indices, batch.observations(), obs_len, &mut actions);
        batch.step(&actions)?;
    }
    let mut elapsed = 0.0;
    for s in 0..cfg.n_steps {
        policy.act((cfg.warmup_steps + s) as u64, &indices, batch.observations(), obs_len, &mut actions);
        let t = Instant::now();
        batch.step(&actions)?;
        elapsed += t.elapsed().as_secs_f64();
    }
    Ok(Run { step_us: elapsed * 1e6 / (cfg.n_envs * cfg.n_steps) as f64, setup_s, checksum: batch.checksum() })
}

/// Benchmark each variant in turn. A variant the model cannot run yields an
/// error row; the others are unaffected.
pub fn run_bench(model: &MechanismModel, variants: &[VariantSpec], cfg: &BenchConfig) -> Result<BenchReport, EnvError> {
    if cfg.n_envs == 0 || cfg.n_steps == 0 || cfg.repeats == 0 {
        return Err(EnvError::Config("n_envs, n_steps and repeats must be >= 1".into()));
    }
    let mut rows = Vec::with_capacity(variants.len());
    for &v in variants {
        let name = v.name();
        if let Err(e) = model.check_variant(&v) {
            rows.push(BenchRow::failed(&name, e.to_string()));
            continue;
        }
        let mut samples = Vec::with_capacity(cfg.repeats);
        let mut setups = Vec::with_capacity(cfg.repeats);
        let mut checksum = None;
        let mut error = None;
        for rep in 0..cfg.repeats {
            match run_once(model, v, cfg) {
                Ok(run) => {
                    log::debug!("{name} repeat {rep}: {:.3} us/step", run.step_us);
                    samples.push(run.step_us);
                    setups.push(run.setup_s);
                    match checksum {
                        None => checksum = Some(run.checksum),
                        Some(c) if c != run.checksum => {
                            error = Some(format!("state checksum changed between repeats ({c:016x} vs {:016x})", run.checksum));
                            break;
                        }
                        _ => {}
                    }
                }
                Err(e) => {
                    error = Some(e.to_string());
                    break;
                }
            }
        }
        if let Some(e) = error {
            rows.push(BenchRow::failed(&name, e));
            continue;
        }
        let t = median(&samples);
        rows.push(BenchRow {
            variant: name,
            time_per_step_us: t,
            steps_per_sec: 1e6 / t,
            setup_s: median(&setups),
            overhead_pct: f64::NAN,
            samples_us: samples,
            checksum: checksum.unwrap_or(0),
            error: None,
        });
    }
    let baseline = VariantSpec::simplified().name();
    let base = rows.iter().find(|r| r.variant == baseline && r.ok()).map(|r| r.time_per_step_us);
    if let Some(b) = base {
        for r in rows.iter_mut().filter(|r| r.ok()) {
            r.overhead_pct = if r.variant == baseline { 0.0 } else { (r.time_per_step_us / b - 1.0) * 100.0 };
        }
    }
    Ok(BenchReport { n_envs: cfg.n_envs, n_steps: cfg.n_steps, repeats: cfg.repeats, rows })
}

fn field(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

impl BenchReport {
    pub fn row(&self, variant: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(|r| !r.ok())
    }

    /// Failed variants have empty numeric fields.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.variant,
                field(r.time_per_step_us),
                field(r.steps_per_sec),
                field(r.setup_s),
                field(r.overhead_pct)
            );
        }
        s
    }

    /// Variants as columns: absolute figures for the simplified baseline,
    /// relative change for the others.
    pub fn table(&self) -> String {
        let base = self.row(&VariantSpec::simplified().name()).filter(|r| r.ok());
        let w = 14;
        let mut s = format!("{:<12}", "");
        for r in &self.rows {
            let _ = write!(s, "{:>w$}", r.variant);
        }
        s.push('\n');
        let rel = |x: f64, b: f64| format!("{:+.1}%", (x / b - 1.0) * 100.0);
        let lines: [(&str, fn(&BenchRow) -> f64, fn(f64) -> String); 3] = [
            ("Time/step", |r| r.time_per_step_us, |x| format!("{x:.3} [us]")),
            ("Steps/sec", |r| r.steps_per_sec, |x| format!("{x:.0}")),
            ("Setup time", |r| r.setup_s, |x| format!("{x:.3} [s]")),
        ];
        for (label, get, abs) in lines {
            let _ = write!(s, "{label:<12}");
            for r in &self.rows {
                let cell = match (r.ok(), base) {
                    (false, _) => "error".to_string(),
                    (true, Some(b)) if b.variant == r.variant => abs(get(r)),
                    (true, Some(b)) => rel(get(r), get(b)),
                    (true, None) => abs(get(r)),
                };
                let _ = write!(s, "{cell:>w$}");
            }
            s.push('\n');
        }
        for r in self.rows.iter().filter(|r| !r.ok()) {
            let _ = writeln!(s, "{}: {}", r.variant, r.error.as_deref().unwrap_or(""));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
