//! Environment configuration and curriculum stages.
//!
//! An [`EnvConfig`] holds the final-stage parameter set. [`curriculum_stage`]
//! derives the configuration of an earlier stage by switching channels off:
//! disabled kicks have interval 0, disabled ranges collapse to `[0, 0]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::latency::LatencyConfig;
use super::obs::NoiseConfig;
use super::reward::{RewardWeights, NUM_TERMS};
use crate::error::EnvError;

pub const ENV_FORMAT_VERSION: u32 = 1;
pub const WEIGHTS_VERSION: &str = "tuned-1";

/// `[min, max]`.
pub type Range = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Randomization {
    /// Multiplier on every inertia and load torque.
    pub mass_scale: Range,
    /// Added to each actuator's Kp; the result is clamped to at least 1.
    pub kp_offset: Range,
    pub com_offset_m: Range,
    pub imu_tilt_rad: Range,
    /// Drawn and recorded; the base model has no lever arm it could act on.
    pub imu_displacement_m: Range,
    pub foot_offset_x_m: Range,
    pub foot_offset_yz_m: Range,
    /// Terrain height per foot, recorded but not used for contact.
    pub terrain_height_m: Range,
}

impl Default for Randomization {
    fn default() -> Self {
        Self {
            mass_scale: [0.8, 1.2],
            kp_offset: [-20.0, 20.0],
            com_offset_m: [-0.015, 0.015],
            imu_tilt_rad: [-0.06, 0.06],
            imu_displacement_m: [-0.006, 0.006],
            foot_offset_x_m: [-0.006, 0.006],
            foot_offset_yz_m: [-0.003, 0.003],
            terrain_height_m: [0.0, 0.02],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbances {
    /// Steps between kicks; 0 disables.
    pub kick_interval: u64,
    pub kick_velocity: Range,
    pub small_kick_interval: u64,
    pub small_kick_velocity: Range,
}

impl Default for Disturbances {
    fn default() -> Self {
        Self { kick_interval: 50, kick_velocity: [0.2, 0.45], small_kick_interval: 10, small_kick_velocity: [0.05, 0.1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandRanges {
    pub vx: Range,
    pub vy: Range,
    pub yaw_rate: Range,
    /// Steps between command resamples.
    pub resample_interval: u64,
}

impl Default for CommandRanges {
    fn default() -> Self {
        Self { vx: [-0.3, 0.3], vy: [-0.2, 0.2], yaw_rate: [-0.5, 0.5], resample_interval: 250 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    /// Lowpass cutoff on action offsets; `None` disables the lowpass.
    pub action_cutoff_hz: Option<f64>,
    pub action_deadband_rad: f64,
    pub obs_cutoff_hz: Option<f64>,
    pub obs_deadband: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { action_cutoff_hz: Some(8.0), action_deadband_rad: 0.002, obs_cutoff_hz: None, obs_deadband: 0.0 }
    }
}

/// Lumped base model standing in for the floating torso.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseParams {
    /// Linear velocity decay rate (1/s).
    pub velocity_decay: f64,
    /// Tilt oscillator natural frequency (rad/s) and damping ratio.
    pub tilt_frequency: f64,
    pub tilt_damping_ratio: f64,
    pub yaw_decay: f64,
    /// COM height used to turn a COM offset into a lean angle (m).
    pub com_height_m: f64,
    /// Tilt rate per unit of kick velocity (rad/s per m/s).
    pub kick_tilt_gain: f64,
    /// Lean per radian of mean hip roll/pitch offset.
    pub hip_tilt_gain: f64,
}

impl Default for BaseParams {
    fn default() -> Self {
        Self {
            velocity_decay: 2.0,
            tilt_frequency: 6.0,
            tilt_damping_ratio: 0.3,
            yaw_decay: 4.0,
            com_height_m: 0.4,
            kick_tilt_gain: 2.0,
            hip_tilt_gain: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub format_version: u32,
    /// Label of the reward weight set; weights and σ values are tuning choices.
    pub weights_version: String,
    pub seed: u64,
    pub stage: u8,
    pub control_dt_s: f64,
    pub substeps: usize,
    pub history: usize,
    pub max_episode_steps: u64,
    pub termination_tilt_rad: f64,
    pub contact_threshold_m: f64,
    pub action_clip_rad: f64,
    pub randomization: Randomization,
    pub disturbances: Disturbances,
    pub commands: CommandRanges,
    pub obs_noise: NoiseConfig,
    pub latency: LatencyConfig,
    pub filters: FilterConfig,
    pub base: BaseParams,
    pub rewards: RewardWeights,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            format_version: ENV_FORMAT_VERSION,
            weights_version: WEIGHTS_VERSION.into(),
            seed: 0,
            stage: 4,
            control_dt_s: 0.02,
            substeps: 20,
            history: 3,
            max_episode_steps: 1000,
            termination_tilt_rad: 0.8,
            contact_threshold_m: 0.005,
            action_clip_rad: 1.0,
            randomization: Randomization::default(),
            disturbances: Disturbances::default(),
            commands: CommandRanges::default(),
            obs_noise: NoiseConfig::default(),
            latency: LatencyConfig::default(),
            filters: FilterConfig::default(),
            base: BaseParams::default(),
            rewards: RewardWeights::default(),
        }
    }
}

/// Randomization and disturbance channels that can be switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Channel {
    Mass,
    KpOffset,
    ComOffset,
    ImuTilt,
    ImuDisplacement,
    ObsNoise,
    Latency,
    Kicks,
    SmallKicks,
    Terrain,
    FootContactOffset,
    Commands,
}

fn ordered(path: &str, r: Range) -> Result<(), EnvError> {
    if r[0].is_finite() && r[1].is_finite() && r[0] <= r[1] {
        Ok(())
    } else {
        Err(EnvError::Config(format!("{path}: need finite min <= max, got [{}, {}]", r[0], r[1])))
    }
}

fn nonzero(r: Range) -> bool {
    r[0] != 0.0 || r[1] != 0.0
}

impl EnvConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self, EnvError> {
        let cfg: EnvConfig = serde_json::from_str(text).map_err(|e| EnvError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.format_version != ENV_FORMAT_VERSION {
            return Err(EnvError::Config(format!(
                "unsupported format_version {} (expected {ENV_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if !(1..=4).contains(&self.stage) {
            return Err(EnvError::Config(format!("stage must be 1..=4, got {}", self.stage)));
        }
        if !(self.control_dt_s > 0.0 && self.control_dt_s.is_finite()) || self.substeps == 0 {
            return Err(EnvError::Config("control_dt_s must be > 0 and substeps >= 1".into()));
        }
        if self.history == 0 || self.max_episode_steps == 0 {
            return Err(EnvError::Config("history and max_episode_steps must be >= 1".into()));
        }
        if !(self.termination_tilt_rad > 0.0) || !(self.action_clip_rad > 0.0) || !(self.contact_threshold_m >= 0.0) {
            return Err(EnvError::Config(
                "termination_tilt_rad and action_clip_rad must be > 0, contact_threshold_m >= 0".into(),
            ));
        }
        let r = &self.randomization;
        ordered("randomization.mass_scale", r.mass_scale)?;
        if r.mass_scale[0] <= 0.0 {
            return Err(EnvError::Config("randomization.mass_scale must stay positive".into()));
        }
        ordered("randomization.kp_offset", r.kp_offset)?;
        ordered("randomization.com_offset_m", r.com_offset_m)?;
        ordered("randomization.imu_tilt_rad", r.imu_tilt_rad)?;
        ordered("randomization.imu_displacement_m", r.imu_displacement_m)?;
        ordered("randomization.foot_offset_x_m", r.foot_offset_x_m)?;
        ordered("randomization.foot_offset_yz_m", r.foot_offset_yz_m)?;
        ordered("randomization.terrain_height_m", r.terrain_height_m)?;
        ordered("disturbances.kick_velocity", self.disturbances.kick_velocity)?;
        ordered("disturbances.small_kick_velocity", self.disturbances.small_kick_velocity)?;
        ordered("commands.vx", self.commands.vx)?;
        ordered("commands.vy", self.commands.vy)?;
        ordered("commands.yaw_rate", self.commands.yaw_rate)?;
        if !(self.obs_noise.amplitude >= 0.0 && self.obs_noise.amplitude.is_finite()) {
            return Err(EnvError::Config("obs_noise.amplitude must be >= 0".into()));
        }
        if !(self.latency.obs_std_s >= 0.0 && self.latency.obs_std_s.is_finite()) {
            return Err(EnvError::Config("latency.obs_std_s must be >= 0".into()));
        }
        let b = &self.base;
        for (name, v) in [
            ("base.velocity_decay", b.velocity_decay),
            ("base.tilt_frequency", b.tilt_frequency),
            ("base.tilt_damping_ratio", b.tilt_damping_ratio),
            ("base.yaw_decay", b.yaw_decay),
            ("base.com_height_m", b.com_height_m),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(EnvError::Config(format!("{name} must be finite and >= 0")));
            }
        }
        if b.com_height_m == 0.0 {
            return Err(EnvError::Config("base.com_height_m must be > 0".into()));
        }
        self.rewards.validate().map_err(EnvError::Config)?;
        Ok(())
    }

    pub fn sample_hz(&self) -> f64 {
        1.0 / self.control_dt_s
    }

    pub fn substep_dt(&self) -> f64 {
        self.control_dt_s / self.substeps as f64
    }

    /// Channels that can produce a non-trivial draw under this configuration.
    pub fn active_channels(&self) -> Vec<Channel> {
        let r = &self.randomization;
        let d = &self.disturbances;
        let c = &self.commands;
        let mut out = Vec::new();
        let mut add = |on: bool, ch: Channel| {
            if on {
                out.push(ch)
            }
        };
        add(r.mass_scale[0] != r.mass_scale[1] || r.mass_scale[0] != 1.0, Channel::Mass);
        add(nonzero(r.kp_offset), Channel::KpOffset);
        add(nonzero(r.com_offset_m), Channel::ComOffset);
        add(nonzero(r.imu_tilt_rad), Channel::ImuTilt);
        add(nonzero(r.imu_displacement_m), Channel::ImuDisplacement);
        add(self.obs_noise.amplitude > 0.0, Channel::ObsNoise);
        add(self.latency.enabled, Channel::Latency);
        add(d.kick_interval > 0 && nonzero(d.kick_velocity), Channel::Kicks);
        add(d.small_kick_interval > 0 && nonzero(d.small_kick_velocity), Channel::SmallKicks);
        add(nonzero(r.terrain_height_m), Channel::Terrain);
        add(nonzero(r.foot_offset_x_m) || nonzero(r.foot_offset_yz_m), Channel::FootContactOffset);
        add(nonzero(c.vx) || nonzero(c.vy) || nonzero(c.yaw_rate), Channel::Commands);
        out
    }

    /// Reward terms summed at this stage, in term order.
    pub fn reward_mask(&self) -> [bool; NUM_TERMS] {
        // tracking_lin, tracking_ang, ang_vel_xy, orientation, torques, action_rate,
        // air_time, foot_slip, phase, stand_still, termination
        match self.stage {
            1 | 2 => [false, false, true, true, true, true, false, false, false, true, true],
            3 => [false, false, true, true, true, true, false, true, false, true, true],
            _ => [true; NUM_TERMS],
        }
    }
}

/// Configuration of curriculum stage `stage`, derived from a final-stage `config`.
///
/// Stage 1 keeps the domain randomization, sensor noise and latency; stage 2
/// adds kicks; stage 3 adds terrain and foot-contact offsets; stage 4 adds
/// velocity commands and the full reward set.
pub fn curriculum_stage(config: &EnvConfig, stage: u8) -> Result<EnvConfig, EnvError> {
    if !(1..=4).contains(&stage) {
        return Err(EnvError::Config(format!("unknown curriculum stage {stage}; expected 1..=4")));
    }
    let mut c = config.clone();
    c.stage = stage;
    if stage < 2 {
        c.disturbances.kick_interval = 0;
        c.disturbances.small_kick_interval = 0;
    }
    if stage < 3 {
        c.randomization.terrain_height_m = [0.0, 0.0];
        c.randomization.foot_offset_x_m = [0.0, 0.0];
        c.randomization.foot_offset_yz_m = [0.0, 0.0];
    }
    if stage < 4 {
        c.commands.vx = [0.0, 0.0];
        c.commands.vy = [0.0, 0.0];
        c.commands.yaw_rate = [0.0, 0.0];
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_validates_and_round_trips() {
        let c = EnvConfig::default();
        c.validate().unwrap();
        assert_eq!(EnvConfig::from_json_str(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn stage_channels_are_monotone() {
        let base = EnvConfig::default();
        let mut prev: Vec<Channel> = Vec::new();
        for s in 1..=4 {
            let ch = curriculum_stage(&base, s).unwrap().active_channels();
            assert!(prev.iter().all(|c| ch.contains(c)), "stage {s} dropped a channel");
            prev = ch;
        }
        assert_eq!(prev, curriculum_stage(&base, 4).unwrap().active_channels());
        assert_eq!(prev.len(), 12);
    }

    #[test]
    fn stage_one_is_quiet() {
        let c = curriculum_stage(&EnvConfig::default(), 1).unwrap();
        assert_eq!(c.disturbances.kick_interval, 0);
        assert_eq!(c.disturbances.small_kick_interval, 0);
        assert_eq!(c.commands.vx, [0.0, 0.0]);
        assert_eq!(c.randomization.terrain_height_m, [0.0, 0.0]);
        assert!(c.active_channels().contains(&Channel::Mass));
    }

    #[test]
    fn rejects_bad_stage_and_ranges() {
        assert!(curriculum_stage(&EnvConfig::default(), 0).is_err());
        assert!(curriculum_stage(&EnvConfig::default(), 5).is_err());
        let mut c = EnvConfig::default();
        c.randomization.kp_offset = [5.0, -5.0];
        assert!(c.validate().is_err());
        let mut c = EnvConfig::default();
        c.rewards.sigma_phase = 0.0;
        assert!(c.validate().is_err());
    }
}
