//! Cable-driven differential pulley of the hip.
//!
//! Maps the two drive pulleys `(q_L, q_R)` onto hip `(roll, pitch)`:
//!
//! ```text
//! [roll ]      1      [ρ_L   ρ_R] [q_L]
//! [pitch] = ------- · [ρ_L  −ρ_R] [q_R]
//!           ρ_L+ρ_R
//! ```
//!
//! The matrix is configuration independent, so the same map is used for
//! velocities and for angle offsets from the home configuration. Torques go
//! the other way through the transpose.

use nalgebra::{Matrix2, Vector2};

use crate::error::KinematicsError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DifferentialParams {
    rho_left: f64,
    rho_right: f64,
}

impl DifferentialParams {
    pub fn new(rho_left: f64, rho_right: f64) -> Result<Self, KinematicsError> {
        if !(rho_left > 0.0 && rho_left.is_finite() && rho_right > 0.0 && rho_right.is_finite()) {
            return Err(KinematicsError::InvalidArgument(format!(
                "gear ratios must be positive and finite (got {rho_left}, {rho_right})"
            )));
        }
        Ok(Self { rho_left, rho_right })
    }

    pub fn rho_left(&self) -> f64 {
        self.rho_left
    }

    pub fn rho_right(&self) -> f64 {
        self.rho_right
    }

    /// Actuator rates to output rates.
    pub fn velocity_matrix(&self) -> Matrix2<f64> {
        let (a, b) = (self.rho_left, self.rho_right);
        let s = a + b;
        Matrix2::new(a / s, b / s, a / s, -b / s)
    }

    /// Closed-form inverse of [`Self::velocity_matrix`].
    pub fn inverse_velocity_matrix(&self) -> Matrix2<f64> {
        let (a, b) = (self.rho_left, self.rho_right);
        let s = a + b;
        Matrix2::new(s / (2.0 * a), s / (2.0 * a), s / (2.0 * b), -s / (2.0 * b))
    }

    /// `(q̇_L, q̇_R) -> (roll rate, pitch rate)`.
    pub fn forward_velocity(&self, qdot_actuator: Vector2<f64>) -> Vector2<f64> {
        self.velocity_matrix() * qdot_actuator
    }

    pub fn inverse_velocity(&self, qdot_output: Vector2<f64>) -> Vector2<f64> {
        self.inverse_velocity_matrix() * qdot_output
    }

    /// Output torques to the actuator torques that produce them (`Jᵀ τ`).
    pub fn torque_map(&self, tau_output: Vector2<f64>) -> Vector2<f64> {
        self.velocity_matrix().transpose() * tau_output
    }

    /// Actuator torques to output torques (inverse of [`Self::torque_map`]).
    pub fn inverse_torque_map(&self, tau_actuator: Vector2<f64>) -> Vector2<f64> {
        self.inverse_velocity_matrix().transpose() * tau_actuator
    }

    /// Angle offsets from home; identical to the velocity map.
    pub fn forward_position(&self, q_actuator: Vector2<f64>) -> Vector2<f64> {
        self.forward_velocity(q_actuator)
    }

    pub fn inverse_position(&self, q_output: Vector2<f64>) -> Vector2<f64> {
        self.inverse_velocity(q_output)
    }
}

pub fn diff_forward_vel(p: &DifferentialParams, qdot_actuator: Vector2<f64>) -> Vector2<f64> {
    p.forward_velocity(qdot_actuator)
}

pub fn diff_inverse_vel(p: &DifferentialParams, qdot_output: Vector2<f64>) -> Vector2<f64> {
    p.inverse_velocity(qdot_output)
}

pub fn diff_torque_map(p: &DifferentialParams, tau_output: Vector2<f64>) -> Vector2<f64> {
    p.torque_map(tau_output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> DifferentialParams {
        DifferentialParams::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn symmetric_drive_is_pure_roll() {
        let w = 0.7;
        let out = unit().forward_velocity(Vector2::new(w, w));
        assert_eq!(out, Vector2::new(w, 0.0));
        let out = unit().forward_velocity(Vector2::new(w, -w));
        assert_eq!(out, Vector2::new(0.0, w));
    }

    #[test]
    fn unequal_ratios_hand_evaluated() {
        let p = DifferentialParams::new(2.0, 3.0).unwrap();
        let out = p.forward_velocity(Vector2::new(1.0, 1.0));
        assert!((out - Vector2::new(1.0, -0.2)).norm() < 1e-15);
        let back = p.inverse_velocity(Vector2::new(1.0, -0.2));
        assert!((back - Vector2::new(1.0, 1.0)).norm() < 1e-14);
        let tau = p.torque_map(Vector2::new(0.0, 1.0));
        assert!((tau - Vector2::new(0.4, -0.6)).norm() < 1e-15);
    }

    #[test]
    fn symmetric_torque_split() {
        assert_eq!(unit().torque_map(Vector2::new(1.0, 0.0)), Vector2::new(0.5, 0.5));
        assert_eq!(unit().inverse_velocity(Vector2::new(0.3, 0.0)), Vector2::new(0.3, 0.3));
    }

    #[test]
    fn equal_ratio_matrix_squares_to_half_identity() {
        let m = DifferentialParams::new(4.0, 4.0).unwrap().velocity_matrix();
        assert_eq!(m * m, Matrix2::identity() * 0.5);
    }

    #[test]
    fn rejects_non_positive_ratios() {
        assert!(DifferentialParams::new(0.0, 1.0).is_err());
        assert!(DifferentialParams::new(1.0, -2.0).is_err());
        assert!(DifferentialParams::new(f64::NAN, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_and_power_balance(
            rl in 0.1f64..10.0, rr in 0.1f64..10.0,
            a in -5.0f64..5.0, b in -5.0f64..5.0,
            ta in -5.0f64..5.0, tb in -5.0f64..5.0,
        ) {
            let p = DifferentialParams::new(rl, rr).unwrap();
            let qdot = Vector2::new(a, b);
            let back = p.inverse_velocity(p.forward_velocity(qdot));
            prop_assert!((back - qdot).amax() <= 1e-12 * (1.0 + qdot.amax()));
            let tau_out = Vector2::new(ta, tb);
            let p_act = p.torque_map(tau_out).dot(&qdot);
            let p_out = tau_out.dot(&p.forward_velocity(qdot));
            prop_assert!((p_act - p_out).abs() <= 1e-12 * (1.0 + p_out.abs()));
            let tau_back = p.inverse_torque_map(p.torque_map(tau_out));
            prop_assert!((tau_back - tau_out).amax() <= 1e-12 * (1.0 + tau_out.amax()));
        }
    }
}
