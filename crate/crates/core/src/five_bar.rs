//! Five-bar leg linkage.
//!
//! Two serial chains share the endpoint: chain A→B→C uses the actuated angle
//! `theta1` and the passive `theta2`; chain F→E→D uses the actuated `theta4`
//! and the passive `theta3`. All four angles are absolute, measured in the
//! plane of the respective base frame. The loop is closed when the lifted
//! endpoints `C` and `D` coincide.

use nalgebra::{Matrix2, Matrix2x4, Matrix3, Matrix3x2, Vector2, Vector3};

use crate::error::KinematicsError;
use crate::geometry::{lift_to_3d, polar, polar_deriv, wrap_angle, PlanarPoint, Transform3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Converged once the closure residual norm is at or below this (m).
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 50 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiveBarParams {
    l1: f64,
    l2: f64,
    l3: f64,
    l4: f64,
    l0: f64,
    base_a: Transform3,
    base_f: Transform3,
    // frame F expressed in frame A, cached for the planar residual
    f_in_a: Transform3,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FiveBarConfig {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
}

impl FiveBarConfig {
    pub fn new(theta1: f64, theta2: f64, theta3: f64, theta4: f64) -> Self {
        Self { theta1, theta2, theta3, theta4 }
    }

    pub fn passive(&self) -> (f64, f64) {
        (self.theta2, self.theta3)
    }
}

impl FiveBarParams {
    /// Link lengths `l1..l4`, base separation `l0`, and the poses of the two
    /// base points. `l0` must match the distance between the base origins.
    pub fn new(
        lengths: [f64; 4],
        l0: f64,
        base_a: Transform3,
        base_f: Transform3,
    ) -> Result<Self, KinematicsError> {
        for (i, l) in lengths.iter().enumerate() {
            if !(*l > 0.0 && l.is_finite()) {
                return Err(KinematicsError::InvalidArgument(format!(
                    "link length l{} must be positive, got {l}",
                    i + 1
                )));
            }
        }
        if !(l0 >= 0.0 && l0.is_finite()) {
            return Err(KinematicsError::InvalidArgument(format!("base separation l0 must be >= 0, got {l0}")));
        }
        for (name, t) in [("base_a", &base_a), ("base_f", &base_f)] {
            if t.orthonormality_error() > 1e-10 {
                return Err(KinematicsError::InvalidArgument(format!("{name} rotation is not orthonormal")));
            }
        }
        let sep = (base_f.translation - base_a.translation).norm();
        if (sep - l0).abs() > 1e-9 {
            return Err(KinematicsError::InvalidArgument(format!(
                "l0 = {l0} does not match base separation {sep}"
            )));
        }
        let f_in_a = base_a.inverse().compose(&base_f);
        Ok(Self { l1: lengths[0], l2: lengths[1], l3: lengths[2], l4: lengths[3], l0, base_a, base_f, f_in_a })
    }

    /// Both base frames in the xy-plane, A at the origin and F at `(l0, 0, 0)`.
    pub fn planar(lengths: [f64; 4], l0: f64) -> Result<Self, KinematicsError> {
        Self::new(
            lengths,
            l0,
            Transform3::identity(),
            Transform3::from_translation(Vector3::new(l0, 0.0, 0.0)),
        )
    }

    pub fn lengths(&self) -> [f64; 4] {
        [self.l1, self.l2, self.l3, self.l4]
    }

    pub fn l0(&self) -> f64 {
        self.l0
    }

    pub fn base_a(&self) -> &Transform3 {
        &self.base_a
    }

    pub fn base_f(&self) -> &Transform3 {
        &self.base_f
    }

    /// True when both chains move in one plane.
    pub fn is_planar(&self) -> bool {
        let r = &self.f_in_a.rotation;
        (r[(2, 2)].abs() - 1.0).abs() < 1e-12 && self.f_in_a.translation.z.abs() < 1e-12
    }

    pub fn chain_endpoint_c(&self, theta1: f64, theta2: f64) -> Vector3<f64> {
        let p = polar(theta1, self.l1) + polar(theta2, self.l2);
        lift_to_3d(&self.base_a, PlanarPoint::from(p))
    }

    pub fn chain_endpoint_d(&self, theta4: f64, theta3: f64) -> Vector3<f64> {
        let p = polar(theta4, self.l4) + polar(theta3, self.l3);
        lift_to_3d(&self.base_f, PlanarPoint::from(p))
    }

    /// `p̃_C − p̃_D` in the base frame.
    pub fn closure_residual(&self, c: &FiveBarConfig) -> Vector3<f64> {
        self.chain_endpoint_c(c.theta1, c.theta2) - self.chain_endpoint_d(c.theta4, c.theta3)
    }

    /// d(residual)/d(theta2, theta3).
    pub fn passive_jacobian(&self, c: &FiveBarConfig) -> Matrix3x2<f64> {
        let dc = lift_dir(&self.base_a.rotation, polar_deriv(c.theta2, self.l2));
        let dd = lift_dir(&self.base_f.rotation, polar_deriv(c.theta3, self.l3));
        Matrix3x2::from_columns(&[dc, -dd])
    }

    /// d(residual)/d(theta1, theta4).
    pub fn actuated_jacobian(&self, c: &FiveBarConfig) -> Matrix3x2<f64> {
        let dc = lift_dir(&self.base_a.rotation, polar_deriv(c.theta1, self.l1));
        let dd = lift_dir(&self.base_f.rotation, polar_deriv(c.theta4, self.l4));
        Matrix3x2::from_columns(&[dc, -dd])
    }

    /// Closure residual expressed in the plane of frame A. For planar
    /// linkages this carries all of the residual.
    pub fn planar_residual(&self, c: &FiveBarConfig) -> Vector2<f64> {
        let pc = polar(c.theta1, self.l1) + polar(c.theta2, self.l2);
        let pd = polar(c.theta4, self.l4) + polar(c.theta3, self.l3);
        let pd_a = self.f_in_a.apply_point(&Vector3::new(pd.x, pd.y, 0.0));
        Vector2::new(pc.x - pd_a.x, pc.y - pd_a.y)
    }

    /// Jacobian of [`Self::planar_residual`] with columns (theta1, theta2, theta3, theta4).
    pub fn planar_jacobian(&self, c: &FiveBarConfig) -> Matrix2x4<f64> {
        let r = &self.f_in_a.rotation;
        let rot_xy = |v: Vector2<f64>| Vector2::new(r[(0, 0)] * v.x + r[(0, 1)] * v.y, r[(1, 0)] * v.x + r[(1, 1)] * v.y);
        let d1 = polar_deriv(c.theta1, self.l1);
        let d2 = polar_deriv(c.theta2, self.l2);
        let d3 = -rot_xy(polar_deriv(c.theta3, self.l3));
        let d4 = -rot_xy(polar_deriv(c.theta4, self.l4));
        Matrix2x4::from_columns(&[d1, d2, d3, d4])
    }

    /// [`Self::planar_residual`] and [`Self::planar_jacobian`] from one set of sines and cosines.
    #[inline]
    pub fn planar_eval(&self, c: &FiveBarConfig) -> (Vector2<f64>, Matrix2x4<f64>) {
        let (s1, c1) = c.theta1.sin_cos();
        let (s2, c2) = c.theta2.sin_cos();
        let (s3, c3) = c.theta3.sin_cos();
        let (s4, c4) = c.theta4.sin_cos();
        let r = &self.f_in_a.rotation;
        let t = &self.f_in_a.translation;
        let (r00, r01, r10, r11) = (r[(0, 0)], r[(0, 1)], r[(1, 0)], r[(1, 1)]);
        let (dx, dy) = (self.l4 * c4 + self.l3 * c3, self.l4 * s4 + self.l3 * s3);
        let res = Vector2::new(
            self.l1 * c1 + self.l2 * c2 - (r00 * dx + r01 * dy + t.x),
            self.l1 * s1 + self.l2 * s2 - (r10 * dx + r11 * dy + t.y),
        );
        let (d3x, d3y) = (-self.l3 * s3, self.l3 * c3);
        let (d4x, d4y) = (-self.l4 * s4, self.l4 * c4);
        let jac = Matrix2x4::new(
            -self.l1 * s1,
            -self.l2 * s2,
            -(r00 * d3x + r01 * d3y),
            -(r00 * d4x + r01 * d4y),
            self.l1 * c1,
            self.l2 * c2,
            -(r10 * d3x + r11 * d3y),
            -(r10 * d4x + r11 * d4y),
        );
        (res, jac)
    }

    /// `sqrt(det(JpᵀJp))` of the passive closure Jacobian; for planar
    /// linkages this is `|det|` of the 2×2 planar block, `l2·l3·|sin(θ3−θ2)|`.
    pub fn singularity_metric(&self, c: &FiveBarConfig) -> f64 {
        let jp = self.passive_jacobian(c);
        (jp.transpose() * jp).determinant().max(0.0).sqrt()
    }

    /// Threshold below which [`Self::singularity_metric`] is flagged.
    pub fn singularity_threshold(&self) -> f64 {
        1e-6 * self.l2 * self.l3
    }

    pub fn is_near_singular(&self, c: &FiveBarConfig) -> bool {
        self.singularity_metric(c) < self.singularity_threshold()
    }

    /// Ratio of singular values of the passive closure Jacobian.
    pub fn passive_condition_number(&self, c: &FiveBarConfig) -> f64 {
        let jp = self.passive_jacobian(c);
        let eig = (jp.transpose() * jp).symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            (hi / lo).sqrt()
        }
    }

    pub fn solve_passive(&self, theta1: f64, theta4: f64, guess: (f64, f64)) -> Result<FiveBarConfig, KinematicsError> {
        self.solve_passive_with(theta1, theta4, guess, &SolverOptions::default())
    }

    /// Damped Gauss-Newton on the closure residual over `(theta2, theta3)`.
    /// Converges to the assembly branch whose basin contains `guess`.
    pub fn solve_passive_with(
        &self,
        theta1: f64,
        theta4: f64,
        guess: (f64, f64),
        opts: &SolverOptions,
    ) -> Result<FiveBarConfig, KinematicsError> {
        // B and E must be within reach of the passive pair
        let b = self.base_a.apply_point(&lift_planar(polar(theta1, self.l1)));
        let e = self.base_f.apply_point(&lift_planar(polar(theta4, self.l4)));
        let gap = (b - e).norm();
        let reach = self.l2 + self.l3;
        let min_reach = (self.l2 - self.l3).abs();
        if gap > reach * (1.0 + 1e-12) || gap < min_reach * (1.0 - 1e-12) {
            return Err(KinematicsError::NoConvergence {
                iterations: 0,
                residual: (gap - reach).max(min_reach - gap),
            });
        }

        let mut cfg = FiveBarConfig::new(theta1, guess.0, guess.1, theta4);
        let mut r = self.closure_residual(&cfg);
        let mut norm = r.norm();
        let singular_eps = (self.l2 * self.l3).powi(2) * 1e-20;
        for iter in 0..opts.max_iterations {
            if norm <= opts.tolerance {
                return Ok(near_guess(self.polish(cfg, r, norm), guess));
            }
            let jp = self.passive_jacobian(&cfg);
            let jtj: Matrix2<f64> = jp.transpose() * jp;
            let det = jtj.determinant();
            if det.abs() <= singular_eps {
                return Err(KinematicsError::SingularJacobian { metric: det.abs().sqrt() });
            }
            let rhs = -(jp.transpose() * r);
            let delta = Matrix2::new(jtj[(1, 1)], -jtj[(0, 1)], -jtj[(1, 0)], jtj[(0, 0)]) * rhs / det;
            let mut step = 1.0;
            loop {
                let trial = FiveBarConfig::new(theta1, cfg.theta2 + step * delta.x, cfg.theta3 + step * delta.y, theta4);
                let tr = self.closure_residual(&trial);
                let tn = tr.norm();
                if tn < norm || step < 1e-6 {
                    cfg = trial;
                    r = tr;
                    norm = tn;
                    break;
                }
                step *= 0.5;
            }
            log::trace!("five-bar iter {iter}: residual {norm:.3e}");
        }
        if norm <= opts.tolerance {
            Ok(near_guess(self.polish(cfg, r, norm), guess))
        } else {
            Err(KinematicsError::NoConvergence { iterations: opts.max_iterations, residual: norm })
        }
    }

    /// One extra Gauss-Newton step, kept only if it lowers the residual.
    fn polish(&self, cfg: FiveBarConfig, r: Vector3<f64>, norm: f64) -> FiveBarConfig {
        let jp = self.passive_jacobian(&cfg);
        let Some(inv) = (jp.transpose() * jp).try_inverse() else {
            return cfg;
        };
        let delta = -(inv * (jp.transpose() * r));
        let trial = FiveBarConfig::new(cfg.theta1, cfg.theta2 + delta.x, cfg.theta3 + delta.y, cfg.theta4);
        if self.closure_residual(&trial).norm() < norm {
            trial
        } else {
            cfg
        }
    }

    /// d(C)/d(theta1, theta4) with the passive angles following the closure.
    pub fn endpoint_jacobian(&self, c: &FiveBarConfig) -> Result<Matrix3x2<f64>, KinematicsError> {
        let metric = self.singularity_metric(c);
        if metric < self.singularity_threshold() {
            return Err(KinematicsError::SingularJacobian { metric });
        }
        let jp = self.passive_jacobian(c);
        let ja = self.actuated_jacobian(c);
        let jtj = jp.transpose() * jp;
        let inv = jtj.try_inverse().ok_or(KinematicsError::SingularJacobian { metric })?;
        // implicit function theorem: dθp/dθa = −(JpᵀJp)⁻¹ Jpᵀ Ja
        let dpassive = -(inv * jp.transpose() * ja);
        let dc_dt1 = lift_dir(&self.base_a.rotation, polar_deriv(c.theta1, self.l1));
        let dc_dt2 = lift_dir(&self.base_a.rotation, polar_deriv(c.theta2, self.l2));
        let mut jac = Matrix3x2::zeros();
        jac.set_column(0, &(dc_dt1 + dc_dt2 * dpassive[(0, 0)]));
        jac.set_column(1, &(dc_dt2 * dpassive[(0, 1)]));
        Ok(jac)
    }
}

fn lift_planar(v: Vector2<f64>) -> Vector3<f64> {
    Vector3::new(v.x, v.y, 0.0)
}

fn lift_dir(rot: &Matrix3<f64>, v: Vector2<f64>) -> Vector3<f64> {
    rot * lift_planar(v)
}


/// Pick the 2π copy of each passive angle closest to the guess.
fn near_guess(mut c: FiveBarConfig, guess: (f64, f64)) -> FiveBarConfig {
    c.theta2 = guess.0 + wrap_angle(c.theta2 - guess.0);
    c.theta3 = guess.1 + wrap_angle(c.theta3 - guess.1);
    c
}
