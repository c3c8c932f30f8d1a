//! Per-step observation, sensor noise, and the stacked history.
//!
//! Layout of one step, for `n` actuators:
//!
//! | index          | content                         |
//! |----------------|---------------------------------|
//! | 0              | yaw rate (rad/s)                |
//! | 1..4           | projected gravity               |
//! | 4..7           | command `(c_x, c_y, c_ωψ)`      |
//! | 7..7+n         | actuator positions − nominal    |
//! | 7+n..7+2n      | previous action                 |

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::rng::KeyedRng;

pub const YAW_RATE: usize = 0;
pub const GRAVITY: usize = 1;
pub const COMMAND: usize = 4;
pub const JOINTS: usize = 7;

pub fn obs_width(n_actuators: usize) -> usize {
    JOINTS + 2 * n_actuators
}

/// World gravity direction `(0, 0, −1)` expressed in the body frame, where
/// `rotation` maps body to world: `Rᵀ·(0, 0, −1)`. With this convention a
/// +90° pitch about y (body x turned to point down) gives `(1, 0, 0)`.
pub fn projected_gravity(rotation: &Matrix3<f64>) -> Vector3<f64> {
    rotation.transpose() * Vector3::new(0.0, 0.0, -1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// Uniform on `[−amplitude, amplitude]`.
    #[default]
    Uniform,
    /// Normal with standard deviation `amplitude / 2`, clipped to `±amplitude`.
    ClippedGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub amplitude: f64,
    #[serde(default)]
    pub distribution: NoiseDistribution,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { amplitude: 0.03, distribution: NoiseDistribution::Uniform }
    }
}

impl NoiseConfig {
    pub fn sample(&self, rng: &mut KeyedRng) -> f64 {
        let a = self.amplitude;
        if a == 0.0 {
            return 0.0;
        }
        match self.distribution {
            NoiseDistribution::Uniform => rng.uniform(-a, a),
            NoiseDistribution::ClippedGaussian => {
                use rand_distr::{Distribution, StandardNormal};
                let z: f64 = StandardNormal.sample(rng);
                (0.5 * a * z).clamp(-a, a)
            }
        }
    }
}

/// Inputs of one observation step.
#[derive(Debug, Clone, Copy)]
pub struct ObsInput<'a> {
    pub yaw_rate: f64,
    pub gravity: [f64; 3],
    pub command: [f64; 3],
    pub joint_offsets: &'a [f64],
    pub prev_action: &'a [f64],
}

/// Write the clean observation `o_t` into `out`.
pub fn observation_vector(input: &ObsInput, out: &mut [f64]) {
    let n = input.joint_offsets.len();
    debug_assert_eq!(out.len(), obs_width(n));
    out[YAW_RATE] = input.yaw_rate;
    out[GRAVITY..GRAVITY + 3].copy_from_slice(&input.gravity);
    out[COMMAND..COMMAND + 3].copy_from_slice(&input.command);
    out[JOINTS..JOINTS + n].copy_from_slice(input.joint_offsets);
    out[JOINTS + n..JOINTS + 2 * n].copy_from_slice(input.prev_action);
}

/// Noise on the IMU channels (yaw rate, gravity) and joint offsets only.
pub fn add_observation_noise(o: &mut [f64], n_actuators: usize, noise: &NoiseConfig, rng: &mut KeyedRng) {
    for v in o[YAW_RATE..COMMAND].iter_mut() {
        *v += noise.sample(rng);
    }
    for v in o[JOINTS..JOINTS + n_actuators].iter_mut() {
        *v += noise.sample(rng);
    }
}

/// Ring buffer of the last `H` observations, flattened newest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationWindow {
    history: usize,
    width: usize,
    data: Vec<f64>,
    newest: usize,
    filled: bool,
}

impl ObservationWindow {
    pub fn new(history: usize, width: usize) -> Self {
        assert!(history >= 1, "history depth must be at least 1");
        Self { history, width, data: vec![0.0; history * width], newest: 0, filled: false }
    }

    pub fn history(&self) -> usize {
        self.history
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn flat_len(&self) -> usize {
        self.history * self.width
    }

    pub fn clear(&mut self) {
        self.filled = false;
        self.newest = 0;
    }

    /// The first push after a clear fills every slot.
    pub fn push(&mut self, o: &[f64]) {
        assert_eq!(o.len(), self.width);
        if !self.filled {
            for slot in self.data.chunks_mut(self.width) {
                slot.copy_from_slice(o);
            }
            self.newest = 0;
            self.filled = true;
            return;
        }
        self.newest = (self.newest + 1) % self.history;
        let w = self.width;
        self.data[self.newest * w..(self.newest + 1) * w].copy_from_slice(o);
    }

    /// `[o_t, o_{t−1}, …, o_{t−H+1}]`.
    pub fn flatten_into(&self, out: &mut [f64]) {
        let w = self.width;
        for k in 0..self.history {
            let slot = (self.newest + self.history - k) % self.history;
            out[k * w..(k + 1) * w].copy_from_slice(&self.data[slot * w..(slot + 1) * w]);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.flat_len()];
        self.flatten_into(&mut out);
        out
    }
}

/// Build `o_t`, add sensor noise, push it, and write the stacked vector.
pub fn assemble_observation(
    input: &ObsInput,
    noise: &NoiseConfig,
    rng: &mut KeyedRng,
    window: &mut ObservationWindow,
    out: &mut [f64],
) {
    let mut o = vec![0.0; window.width()];
    observation_vector(input, &mut o);
    add_observation_noise(&mut o, input.joint_offsets.len(), noise, rng);
    window.push(&o);
    window.flatten_into(out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    #[test]
    fn gravity_identity_and_quarter_pitch() {
        assert_eq!(projected_gravity(&Matrix3::identity()), Vector3::new(0.0, 0.0, -1.0));
        let pitch = Rotation3::from_euler_angles(0.0, std::f64::consts::FRAC_PI_2, 0.0);
        let g = projected_gravity(pitch.matrix());
        // body x axis points straight down after +90° about y
        assert!((g - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn window_newest_first_and_warm_up() {
        let mut w = ObservationWindow::new(3, 2);
        w.push(&[1.0, 1.0]);
        assert_eq!(w.flatten(), vec![1.0; 6]);
        w.push(&[2.0, 2.0]);
        assert_eq!(w.flatten(), vec![2.0, 2.0, 1.0, 1.0, 1.0, 1.0]);
        w.push(&[3.0, 3.0]);
        w.push(&[4.0, 4.0]);
        assert_eq!(w.flatten(), vec![4.0, 4.0, 3.0, 3.0, 2.0, 2.0]);
        w.clear();
        w.push(&[5.0, 5.0]);
        assert_eq!(w.flatten(), vec![5.0; 6]);
    }

    #[test]
    fn zero_noise_leaves_vector_clean() {
        let joints = [0.0; 4];
        let act = [0.0; 4];
        let input = ObsInput { yaw_rate: 0.0, gravity: [0.0, 0.0, -1.0], command: [0.0; 3], joint_offsets: &joints, prev_action: &act };
        let noise = NoiseConfig { amplitude: 0.0, ..Default::default() };
        let mut w = ObservationWindow::new(3, obs_width(4));
        let mut out = vec![0.0; w.flat_len()];
        assemble_observation(&input, &noise, &mut KeyedRng::new(0, 0, 0, 0), &mut w, &mut out);
        let mut clean = vec![0.0; obs_width(4)];
        observation_vector(&input, &mut clean);
        for k in 0..3 {
            assert_eq!(&out[k * clean.len()..(k + 1) * clean.len()], clean.as_slice());
        }
    }
}
