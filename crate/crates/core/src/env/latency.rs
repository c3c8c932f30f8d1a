//! Per-episode observation and action delays.

use std::collections::VecDeque;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::rng::KeyedRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyConfig {
    pub enabled: bool,
    /// Standard deviation of the zero-mean observation delay (s).
    pub obs_std_s: f64,
    /// Action delay is uniform on `{0, …, action_max_steps}`.
    pub action_max_steps: usize,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self { enabled: true, obs_std_s: 0.01, action_max_steps: 2 }
    }
}

impl LatencyConfig {
    /// Gaussian draw, clamped at zero and rounded to whole steps of `step_s`.
    pub fn sample_obs_delay(&self, rng: &mut KeyedRng, step_s: f64) -> usize {
        if !self.enabled || self.obs_std_s <= 0.0 {
            return 0;
        }
        let d: f64 = Normal::new(0.0, self.obs_std_s).expect("std checked positive").sample(rng);
        (d.max(0.0) / step_s).round() as usize
    }

    pub fn sample_action_delay(&self, rng: &mut KeyedRng) -> usize {
        if !self.enabled {
            return 0;
        }
        rng.below(self.action_max_steps as u64 + 1) as usize
    }
}

/// Fixed delay of `delay` steps; until enough history exists it emits `fill`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLine {
    delay: usize,
    fill: Vec<f64>,
    queue: VecDeque<Vec<f64>>,
}

impl DelayLine {
    pub fn new(delay: usize, fill: Vec<f64>) -> Self {
        Self { delay, fill, queue: VecDeque::with_capacity(delay + 1) }
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    pub fn reset(&mut self, delay: usize, fill: &[f64]) {
        self.delay = delay;
        self.fill.clear();
        self.fill.extend_from_slice(fill);
        self.queue.clear();
    }

    /// Push the sample for step `t` and write the one for step `t − delay`.
    pub fn push(&mut self, x: &[f64], out: &mut [f64]) {
        if self.delay == 0 {
            out.copy_from_slice(x);
            return;
        }
        let mut slot = if self.queue.len() > self.delay {
            self.queue.pop_front().expect("non-empty")
        } else {
            Vec::with_capacity(x.len())
        };
        slot.clear();
        slot.extend_from_slice(x);
        self.queue.push_back(slot);
        if self.queue.len() > self.delay {
            out.copy_from_slice(&self.queue[0]);
        } else {
            out.copy_from_slice(&self.fill);
        }
    }
}

/// Delay a whole stream by `delay` steps, holding `fill` at the start.
pub fn latency_apply(stream: &[Vec<f64>], delay: usize, fill: &[f64]) -> Vec<Vec<f64>> {
    let mut line = DelayLine::new(delay, fill.to_vec());
    stream
        .iter()
        .map(|x| {
            let mut out = vec![0.0; x.len()];
            line.push(x, &mut out);
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Vec<Vec<f64>> {
        (0..n).map(|i| vec![i as f64, -(i as f64)]).collect()
    }

    #[test]
    fn zero_delay_is_identity() {
        let s = ramp(10);
        assert_eq!(latency_apply(&s, 0, &[0.0, 0.0]), s);
    }

    #[test]
    fn delayed_stream_shifts_exactly() {
        let s = ramp(20);
        for d in 1..=3 {
            let out = latency_apply(&s, d, &[0.0, 0.0]);
            for t in 0..20 {
                if t < d {
                    assert_eq!(out[t], vec![0.0, 0.0]);
                } else {
                    assert_eq!(out[t], s[t - d]);
                }
            }
        }
    }

    #[test]
    fn obs_delay_is_whole_nonnegative_steps() {
        let cfg = LatencyConfig::default();
        let mut counts = [0usize; 4];
        for ep in 0..5000 {
            let d = cfg.sample_obs_delay(&mut KeyedRng::new(3, 0, ep, 9), 0.02);
            counts[d.min(3)] += 1;
        }
        // P(d = 0) = P(x < 10 ms) ≈ 0.841, P(d = 1) ≈ 0.157
        assert!((counts[0] as f64 / 5000.0 - 0.841).abs() < 0.03, "{counts:?}");
        assert!(counts[3] == 0);
    }

    #[test]
    fn disabled_latency_is_zero() {
        let cfg = LatencyConfig { enabled: false, ..Default::default() };
        let mut r = KeyedRng::new(0, 0, 0, 0);
        assert_eq!(cfg.sample_action_delay(&mut r), 0);
        assert_eq!(cfg.sample_obs_delay(&mut r, 0.02), 0);
    }
}
