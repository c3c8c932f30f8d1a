//! Locomotion reward terms.
//!
//! Penalty terms are returned with their sign (≤ 0); the stand-still term is
//! the positive L1 distance and takes its sign from its weight.

use serde::{Deserialize, Serialize};

pub const NUM_TERMS: usize = 11;

pub const TERM_NAMES: [&str; NUM_TERMS] = [
    "tracking_lin_vel",
    "tracking_ang_vel",
    "ang_vel_xy",
    "orientation",
    "torques",
    "action_rate",
    "feet_air_time",
    "foot_slip",
    "feet_phase",
    "stand_still",
    "termination",
];

/// One value per term, in [`TERM_NAMES`] order.
pub type TermVector = [f64; NUM_TERMS];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub tracking_lin_vel: f64,
    pub tracking_ang_vel: f64,
    pub ang_vel_xy: f64,
    pub orientation: f64,
    pub torques: f64,
    pub action_rate: f64,
    pub feet_air_time: f64,
    pub foot_slip: f64,
    pub feet_phase: f64,
    pub stand_still: f64,
    pub termination: f64,
    pub sigma_lin_vel: f64,
    pub sigma_ang_vel: f64,
    /// Feet phase σ (m).
    pub sigma_phase: f64,
    /// Air time threshold `t_thresh` (s).
    pub air_time_threshold_s: f64,
    /// Command norm threshold ε.
    pub command_epsilon: f64,
    pub gait_frequency_hz: f64,
    /// Peak of the swing height reference `r_z` (m).
    pub swing_height_m: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            tracking_lin_vel: 1.0,
            tracking_ang_vel: 0.5,
            ang_vel_xy: 0.05,
            orientation: 1.0,
            torques: 1e-3,
            action_rate: 0.01,
            feet_air_time: 1.0,
            foot_slip: 0.1,
            feet_phase: 1.0,
            stand_still: -1.0,
            termination: 1.0,
            sigma_lin_vel: 0.25,
            sigma_ang_vel: 0.25,
            sigma_phase: 0.02,
            air_time_threshold_s: 0.2,
            command_epsilon: 0.05,
            gait_frequency_hz: 1.9,
            swing_height_m: 0.04,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<(), String> {
        let w = self.as_vector();
        if w.iter().any(|x| !x.is_finite()) {
            return Err("reward weights must be finite".into());
        }
        for (name, s) in [("sigma_lin_vel", self.sigma_lin_vel), ("sigma_ang_vel", self.sigma_ang_vel), ("sigma_phase", self.sigma_phase)] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(format!("{name} must be > 0"));
            }
        }
        if !(self.gait_frequency_hz > 0.0) || !(self.command_epsilon >= 0.0) || !(self.air_time_threshold_s >= 0.0) {
            return Err("gait frequency must be > 0; epsilon and air time threshold >= 0".into());
        }
        Ok(())
    }

    pub fn as_vector(&self) -> TermVector {
        [
            self.tracking_lin_vel,
            self.tracking_ang_vel,
            self.ang_vel_xy,
            self.orientation,
            self.torques,
            self.action_rate,
            self.feet_air_time,
            self.foot_slip,
            self.feet_phase,
            self.stand_still,
            self.termination,
        ]
    }

    /// Swing height reference for foot `foot` of `n_feet` at time `t`: a
    /// half-sine lift per gait cycle, feet spread evenly in phase.
    pub fn swing_reference(&self, t: f64, foot: usize, n_feet: usize) -> f64 {
        let phase = std::f64::consts::TAU * (self.gait_frequency_hz * t + foot as f64 / n_feet.max(1) as f64);
        self.swing_height_m * phase.sin().max(0.0)
    }
}

/// Per-foot quantities.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FootState {
    /// Foot height above its ground reference (m).
    pub z: f64,
    /// Swing height reference `r_z` (m).
    pub z_ref: f64,
    pub velocity: [f64; 3],
    pub angular_velocity: [f64; 3],
    /// Duration of the flight phase that just ended (s).
    pub air_time: f64,
    /// Contact indicator used by the air-time and slip terms.
    pub contact: bool,
    /// True on the step the foot touches down.
    pub first_contact: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct RewardInput<'a> {
    /// `(c_x, c_y, c_ωψ)`.
    pub command: [f64; 3],
    /// Base linear velocity in the body frame.
    pub lin_vel: [f64; 3],
    /// Base angular velocity in the body frame.
    pub ang_vel: [f64; 3],
    pub projected_gravity: [f64; 3],
    pub torques: &'a [f64],
    pub action: &'a [f64],
    pub prev_action: &'a [f64],
    pub joint_pos: &'a [f64],
    pub joint_default: &'a [f64],
    pub feet: &'a [FootState],
    pub done: bool,
    /// Elapsed episode time and its limit (s).
    pub t: f64,
    pub t_max: f64,
}

/// Unweighted terms.
pub fn reward_terms(s: &RewardInput, w: &RewardWeights) -> TermVector {
    let cmd_norm = s.command.iter().map(|c| c * c).sum::<f64>().sqrt();
    let moving = cmd_norm > w.command_epsilon;

    let dvx = s.command[0] - s.lin_vel[0];
    let dvy = s.command[1] - s.lin_vel[1];
    let tracking_lin = (-(dvx * dvx + dvy * dvy) / (2.0 * w.sigma_lin_vel * w.sigma_lin_vel)).exp();
    let dw = s.command[2] - s.ang_vel[2];
    let tracking_ang = (-(dw * dw) / (2.0 * w.sigma_ang_vel * w.sigma_ang_vel)).exp();
    let ang_vel_xy = -(s.ang_vel[0] * s.ang_vel[0] + s.ang_vel[1] * s.ang_vel[1]);
    let g = s.projected_gravity;
    let orientation = -(g[0] * g[0] + g[1] * g[1]);

    let l2 = s.torques.iter().map(|t| t * t).sum::<f64>().sqrt();
    let l1 = s.torques.iter().map(|t| t.abs()).sum::<f64>();
    let torques = -(l2 + l1);
    let action_rate = -s.action.iter().zip(s.prev_action).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();

    let mut air = 0.0;
    let mut slip = 0.0;
    let mut phase_err = 0.0;
    for f in s.feet {
        if f.first_contact {
            air += f.air_time - w.air_time_threshold_s;
        }
        if f.contact {
            let v = f.velocity.iter().map(|x| x * x).sum::<f64>().sqrt();
            let om = f.angular_velocity.iter().map(|x| x * x).sum::<f64>().sqrt();
            slip -= v + om;
        }
        phase_err += (f.z - f.z_ref) * (f.z - f.z_ref);
    }
    let feet_air_time = if moving { air } else { 0.0 };
    let feet_phase = if moving { (-phase_err / (2.0 * w.sigma_phase * w.sigma_phase)).exp() } else { 0.0 };

    let stand_still = if cmd_norm < w.command_epsilon {
        s.joint_pos.iter().zip(s.joint_default).map(|(q, d)| (q - d).abs()).sum::<f64>()
    } else {
        0.0
    };
    let termination = if s.done && s.t < s.t_max { -1.0 } else { 0.0 };

    [
        tracking_lin,
        tracking_ang,
        ang_vel_xy,
        orientation,
        torques,
        action_rate,
        feet_air_time,
        slip,
        feet_phase,
        stand_still,
        termination,
    ]
}

/// Weighted sum over the terms enabled in `mask`, plus the weighted breakdown.
pub fn reward(s: &RewardInput, w: &RewardWeights, mask: &[bool; NUM_TERMS]) -> (f64, TermVector) {
    let raw = reward_terms(s, w);
    let weights = w.as_vector();
    let mut weighted = [0.0; NUM_TERMS];
    let mut total = 0.0;
    for i in 0..NUM_TERMS {
        if mask[i] {
            weighted[i] = weights[i] * raw[i];
            total += weighted[i];
        }
    }
    (total, weighted)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still<'a>(torques: &'a [f64], a: &'a [f64], q: &'a [f64], feet: &'a [FootState]) -> RewardInput<'a> {
        RewardInput {
            command: [0.0; 3],
            lin_vel: [0.0; 3],
            ang_vel: [0.0; 3],
            projected_gravity: [0.0, 0.0, -1.0],
            torques,
            action: a,
            prev_action: a,
            joint_pos: q,
            joint_default: q,
            feet,
            done: false,
            t: 0.0,
            t_max: 20.0,
        }
    }

    #[test]
    fn perfect_tracking_is_one() {
        let z = [0.0; 4];
        let mut s = still(&z, &z, &z, &[]);
        s.command = [0.3, -0.1, 0.4];
        s.lin_vel = [0.3, -0.1, 0.0];
        s.ang_vel = [0.0, 0.0, 0.4];
        let r = reward_terms(&s, &RewardWeights::default());
        assert_eq!(r[0], 1.0);
        assert_eq!(r[1], 1.0);
    }

    #[test]
    fn idle_penalties_vanish() {
        let z = [0.0; 4];
        let r = reward_terms(&still(&z, &z, &z, &[]), &RewardWeights::default());
        assert_eq!(r[4], 0.0);
        assert_eq!(r[5], 0.0);
        assert_eq!(r[9], 0.0);
        assert_eq!(r[10], 0.0);
    }

    #[test]
    fn termination_only_before_time_limit() {
        let z = [0.0; 2];
        let mut s = still(&z, &z, &z, &[]);
        s.done = true;
        s.t = 3.0;
        assert_eq!(reward_terms(&s, &RewardWeights::default())[10], -1.0);
        s.t = 20.0;
        assert_eq!(reward_terms(&s, &RewardWeights::default())[10], 0.0);
    }

    #[test]
    fn mask_zeroes_terms() {
        let t = [1.0, -2.0];
        let z = [0.0; 2];
        let s = still(&t, &z, &z, &[]);
        let mut mask = [true; NUM_TERMS];
        mask[4] = false;
        let (total, parts) = reward(&s, &RewardWeights::default(), &mask);
        assert_eq!(parts[4], 0.0);
        assert!((total - parts.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn swing_reference_is_half_sine() {
        let w = RewardWeights::default();
        let quarter = 0.25 / w.gait_frequency_hz;
        assert!((w.swing_reference(quarter, 0, 2) - w.swing_height_m).abs() < 1e-12);
        assert_eq!(w.swing_reference(quarter, 1, 2), 0.0);
    }
}
