//! Lumped torso: planar velocity with decay, a damped tilt oscillator, and kicks.

use nalgebra::{Matrix3, Rotation3, Vector3};

use super::config::BaseParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KickKind {
    Small,
    Large,
}

impl KickKind {
    pub fn code(self) -> u8 {
        match self {
            KickKind::Small => 1,
            KickKind::Large => 2,
        }
    }
}

/// Velocity impulse applied at the start of a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kick {
    pub kind: KickKind,
    /// World-frame linear velocity just before and just after the impulse.
    pub before: [f64; 3],
    pub after: [f64; 3],
}

impl Kick {
    pub fn magnitude(&self) -> f64 {
        (0..3).map(|i| (self.after[i] - self.before[i]).powi(2)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BaseState {
    /// World-frame linear velocity (m/s).
    pub lin_vel: [f64; 3],
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub roll_rate: f64,
    pub pitch_rate: f64,
    pub yaw_rate: f64,
}

impl BaseState {
    /// Body to world, yaw-pitch-roll order.
    pub fn rotation(&self) -> Matrix3<f64> {
        *Rotation3::from_euler_angles(self.roll, self.pitch, self.yaw).matrix()
    }

    /// Angle between the body z axis and the world vertical.
    pub fn tilt(&self) -> f64 {
        (self.roll.cos() * self.pitch.cos()).clamp(-1.0, 1.0).acos()
    }

    /// Linear velocity in the body frame.
    pub fn local_lin_vel(&self) -> [f64; 3] {
        let v = self.rotation().transpose() * Vector3::from(self.lin_vel);
        [v.x, v.y, v.z]
    }

    pub fn ang_vel(&self) -> [f64; 3] {
        [self.roll_rate, self.pitch_rate, self.yaw_rate]
    }

    /// Add a horizontal velocity impulse of `speed` along heading `angle`.
    pub fn kick(&mut self, kind: KickKind, speed: f64, angle: f64, p: &BaseParams) -> Kick {
        let before = self.lin_vel;
        let (s, c) = angle.sin_cos();
        self.lin_vel[0] += speed * c;
        self.lin_vel[1] += speed * s;
        // a push along body x pitches the torso forward, along body y rolls it
        let (sy, cy) = self.yaw.sin_cos();
        let dx = cy * speed * c + sy * speed * s;
        let dy = -sy * speed * c + cy * speed * s;
        self.pitch_rate += p.kick_tilt_gain * dx;
        self.roll_rate -= p.kick_tilt_gain * dy;
        Kick { kind, before, after: self.lin_vel }
    }

    /// Advance `n` substeps of `dt` toward the lean `(roll_eq, pitch_eq)`.
    pub fn advance(&mut self, p: &BaseParams, roll_eq: f64, pitch_eq: f64, dt: f64, n: usize) {
        let w2 = p.tilt_frequency * p.tilt_frequency;
        let c = 2.0 * p.tilt_damping_ratio * p.tilt_frequency;
        for _ in 0..n {
            self.roll_rate += dt * (-w2 * (self.roll - roll_eq) - c * self.roll_rate);
            self.pitch_rate += dt * (-w2 * (self.pitch - pitch_eq) - c * self.pitch_rate);
            self.yaw_rate -= dt * p.yaw_decay * self.yaw_rate;
            self.roll += dt * self.roll_rate;
            self.pitch += dt * self.pitch_rate;
            self.yaw += dt * self.yaw_rate;
            for v in self.lin_vel.iter_mut() {
                *v -= dt * p.velocity_decay * *v;
            }
        }
    }
}
