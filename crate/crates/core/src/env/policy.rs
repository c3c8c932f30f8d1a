//! Batch-synchronous action sources.

use std::path::Path;

use super::rng::{channel, KeyedRng};
use crate::error::EnvError;
use crate::model::{Mechanism, MechanismModel};

/// Called once per batch step with every environment's stacked observation.
///
/// `obs` is `env_indices.len()` rows of `obs_len`; `actions` is the same
/// number of rows of actuator offsets (rad) to fill.
pub trait Policy: Send {
    fn act(&mut self, step: u64, env_indices: &[u64], obs: &[f64], obs_len: usize, actions: &mut [f64]);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn act(&mut self, _: u64, _: &[u64], _: &[f64], _: usize, actions: &mut [f64]) {
        actions.iter_mut().for_each(|a| *a = 0.0);
    }
}

/// `a_k(t) = gain_k · amplitude · sin(2π f t)`, the same for every environment.
#[derive(Debug, Clone)]
pub struct SinePolicy {
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub dt: f64,
    pub gains: Vec<f64>,
}

impl SinePolicy {
    pub fn new(gains: Vec<f64>, amplitude: f64, frequency_hz: f64, dt: f64) -> Self {
        Self { amplitude, frequency_hz, dt, gains }
    }

    /// Drive the first input of every five-bar leg, all legs in phase.
    pub fn stepping(model: &MechanismModel, amplitude: f64, frequency_hz: f64, dt: f64) -> Self {
        let mut gains = vec![0.0; model.num_actuators()];
        for m in &model.mechanisms {
            if let Mechanism::FiveBar { joints, .. } = m {
                if let Some(k) = model.actuators.iter().position(|a| a.joint == joints[0]) {
                    gains[k] = 1.0;
                }
            }
        }
        Self::new(gains, amplitude, frequency_hz, dt)
    }
}

impl Policy for SinePolicy {
    fn act(&mut self, step: u64, env_indices: &[u64], _: &[f64], _: usize, actions: &mut [f64]) {
        let s = self.amplitude * (std::f64::consts::TAU * self.frequency_hz * step as f64 * self.dt).sin();
        let n = self.gains.len();
        for row in actions.chunks_mut(n).take(env_indices.len()) {
            for (a, g) in row.iter_mut().zip(&self.gains) {
                *a = g * s;
            }
        }
    }
}

/// Independent uniform actions per environment and step, keyed like every other draw.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    pub seed: u64,
    pub amplitude: f64,
    pub n_actions: usize,
}

impl Policy for RandomPolicy {
    fn act(&mut self, step: u64, env_indices: &[u64], _: &[f64], _: usize, actions: &mut [f64]) {
        for (row, &e) in actions.chunks_mut(self.n_actions).zip(env_indices) {
            let mut rng = KeyedRng::new(self.seed, e, step, channel::POLICY);
            for a in row.iter_mut() {
                *a = rng.uniform(-self.amplitude, self.amplitude);
            }
        }
    }
}

/// Replays rows of a CSV file, one row per step; the last row is held.
#[derive(Debug, Clone)]
pub struct FilePolicy {
    rows: Vec<Vec<f64>>,
}

impl FilePolicy {
    /// Comma-separated numbers, one row of `n_actions` per line. A first line
    /// that does not parse is treated as a header; `#` lines are skipped.
    pub fn load(path: impl AsRef<Path>, n_actions: usize) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, n_actions)
    }

    pub fn parse(text: &str, n_actions: usize) -> Result<Self, EnvError> {
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            match parsed {
                Ok(row) if row.len() == n_actions && row.iter().all(|v| v.is_finite()) => rows.push(row),
                Ok(row) if row.len() != n_actions => {
                    return Err(EnvError::Config(format!(
                        "action file line {}: {} values, expected {n_actions}",
                        i + 1,
                        row.len()
                    )))
                }
                Err(_) if rows.is_empty() && i == 0 => continue,
                _ => return Err(EnvError::Config(format!("action file line {}: not a row of finite numbers", i + 1))),
            }
        }
        if rows.is_empty() {
            return Err(EnvError::Config("action file has no rows".into()));
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl Policy for FilePolicy {
    fn act(&mut self, step: u64, _: &[u64], _: &[f64], _: usize, actions: &mut [f64]) {
        let row = &self.rows[(step as usize).min(self.rows.len() - 1)];
        for chunk in actions.chunks_mut(row.len()) {
            chunk.copy_from_slice(row);
        }
    }
}
