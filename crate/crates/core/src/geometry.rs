//! Planar and spatial math shared by the mechanism models.
//!
//! Angles are radians and lengths meters everywhere in the crate.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Matrix4, Rotation3, Vector2, Vector3, Vector4};

use crate::error::GeometryError;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-6;

/// Planar rotation by `angle`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rot2 {
    pub angle: f64,
}

impl Rot2 {
    pub fn new(angle: f64) -> Self {
        Self { angle }
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        let (s, c) = self.angle.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    pub fn apply(&self, v: Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.angle.sin_cos();
        Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }

    pub fn compose(&self, other: &Rot2) -> Rot2 {
        Rot2::new(self.angle + other.angle)
    }

    pub fn inverse(&self) -> Rot2 {
        Rot2::new(-self.angle)
    }
}

pub fn rot2_apply(r: Rot2, v: Vector2<f64>) -> Vector2<f64> {
    r.apply(v)
}

/// `R(angle) * [length, 0]`.
#[inline]
pub fn polar(angle: f64, length: f64) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(length * c, length * s)
}

/// Derivative of [`polar`] with respect to the angle.
#[inline]
pub fn polar_deriv(angle: f64, length: f64) -> Vector2<f64> {
    let (s, c) = angle.sin_cos();
    Vector2::new(-length * s, length * c)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<Vector2<f64>> for PlanarPoint {
    fn from(v: Vector2<f64>) -> Self {
        Self { x: v.x, y: v.y }
    }
}

/// Rigid transform: `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Transform3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform3 {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation: t }
    }

    /// Roll-pitch-yaw (extrinsic x, y, z) rotation followed by translation.
    pub fn from_rpy_translation(rpy: [f64; 3], t: Vector3<f64>) -> Self {
        let rot = Rotation3::from_euler_angles(rpy[0], rpy[1], rpy[2]);
        Self { rotation: *rot.matrix(), translation: t }
    }

    pub fn apply_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Transform3) -> Transform3 {
        Transform3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Transform3 {
        let rt = self.rotation.transpose();
        Transform3 { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Max entry of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max()
    }
}

/// Homogeneous lift of a planar point: `T * [x, y, 0, 1]`, returned as the 3-vector part.
pub fn lift_to_3d(t: &Transform3, p: PlanarPoint) -> Vector3<f64> {
    t.apply_point(&Vector3::new(p.x, p.y, 0.0))
}

/// Homogeneous lift computed through the 4×4 matrix (used where the affine form is needed).
pub fn lift_homogeneous(t: &Transform3, p: PlanarPoint) -> Vector3<f64> {
    let h = t.to_homogeneous() * Vector4::new(p.x, p.y, 0.0, 1.0);
    Vector3::new(h.x, h.y, h.z)
}

/// Central-difference Jacobian of `f` at `x`.
pub fn finite_diff_jacobian<F>(mut f: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>, GeometryError>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(GeometryError::BadStep(h));
    }
    let check = |v: &DVector<f64>| -> Result<(), GeometryError> {
        match v.iter().position(|c| !c.is_finite()) {
            Some(index) => Err(GeometryError::NonFinite { index }),
            None => Ok(()),
        }
    };
    let f0 = f(x);
    check(&f0)?;
    let m = f0.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.clone();
    for j in 0..n {
        let orig = xp[j];
        xp[j] = orig + h;
        let fp = f(&xp);
        check(&fp)?;
        xp[j] = orig - h;
        let fm = f(&xp);
        check(&fm)?;
        xp[j] = orig;
        let col = (fp - fm) / (2.0 * h);
        jac.set_column(j, &col);
    }
    Ok(jac)
}

/// Wrap an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = a % two_pi;
    if w <= -std::f64::consts::PI {
        w += two_pi;
    } else if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rot2_identity_and_quarter_turn() {
        let v = Rot2::new(0.0).apply(Vector2::new(1.0, 0.0));
        assert_eq!(v, Vector2::new(1.0, 0.0));
        let v = Rot2::new(FRAC_PI_2).apply(Vector2::new(1.0, 0.0));
        assert!(close(v.x, 0.0, 1e-15) && close(v.y, 1.0, 1e-15));
    }

    #[test]
    fn rot2_matches_matrix_product() {
        let r = Rot2::new(0.3);
        let v = Vector2::new(0.2, 0.1);
        // plain 2x2 product written out
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let expect = Vector2::new(c * 0.2 - s * 0.1, s * 0.2 + c * 0.1);
        let got = r.apply(v);
        assert!((got - expect).norm() < 1e-15);
        assert!((r.matrix() * v - expect).norm() < 1e-15);
    }

    #[test]
    fn rot2_det_and_inverse() {
        for i in 0..100 {
            let r = Rot2::new(-7.0 + 0.14 * i as f64);
            assert!(close(r.matrix().determinant(), 1.0, 1e-12));
            let id = r.matrix() * r.inverse().matrix();
            assert!((id - Matrix2::identity()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn lift_identity_and_translation() {
        let p = lift_to_3d(&Transform3::identity(), PlanarPoint::new(0.1, 0.2));
        assert_eq!(p, Vector3::new(0.1, 0.2, 0.0));
        let t = Transform3::from_translation(Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(lift_to_3d(&t, PlanarPoint::new(0.0, 0.0)), Vector3::new(1.0, 0.0, 0.0));
    }

    #[test]
    fn transform_inverse_roundtrip() {
        let t = Transform3::from_rpy_translation([0.3, -0.2, 1.1], Vector3::new(0.5, -1.0, 2.0));
        let p = Vector3::new(0.3, 0.7, -0.1);
        let back = t.inverse().apply_point(&t.apply_point(&p));
        assert!((back - p).norm() < 1e-12);
        assert!(t.orthonormality_error() < 1e-12);
    }

    #[test]
    fn fd_jacobian_of_linear_map() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, 4.0]);
        let x = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let j = finite_diff_jacobian(|x| &a * x, &x, FD_STEP).unwrap();
        assert!((j - &a).abs().max() < 1e-9);
        let j = finite_diff_jacobian(|x| x.clone(), &x, FD_STEP).unwrap();
        assert!((j - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-9);
    }

    #[test]
    fn fd_jacobian_rejects_non_finite() {
        let x = DVector::from_vec(vec![0.0]);
        let err = finite_diff_jacobian(|x| DVector::from_vec(vec![1.0 / x[0]]), &x, FD_STEP);
        assert!(matches!(err, Err(GeometryError::NonFinite { index: 0 })));
        assert!(matches!(
            finite_diff_jacobian(|x| x.clone(), &x, 0.0),
            Err(GeometryError::BadStep(_))
        ));
    }

    #[test]
    fn wrap_angle_range() {
        assert!(close(wrap_angle(3.0 * std::f64::consts::PI), std::f64::consts::PI, 1e-12));
        assert!(close(wrap_angle(-0.5), -0.5, 1e-15));
        assert!(close(wrap_angle(7.0), 7.0 - std::f64::consts::TAU, 1e-12));
    }
}
