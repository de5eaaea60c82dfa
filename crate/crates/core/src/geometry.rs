//! Rigid transforms, pinhole intrinsics and projection.

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on orthonormality and determinant of a rotation matrix.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation is not orthonormal (max |RᵀR - I| = {0:e})")]
    NotOrthonormal(f64),
    #[error("rotation determinant is {0}, expected +1")]
    BadDeterminant(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Rigid transform `x ↦ R·x + t`.
///
/// Used both for object poses in the camera frame and for symmetry
/// transforms in the object frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    /// Builds a pose, checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("pose"));
        }
        let dev = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if dev > ROTATION_TOLERANCE {
            return Err(GeometryError::NotOrthonormal(dev));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::BadDeterminant(det));
        }
        Ok(Self { rotation, translation })
    }

    /// Skips validation. Callers guarantee `rotation` is in SO(3).
    pub fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation: *Rotation3::new(axis_angle).matrix(), translation }
    }

    /// Row-major rotation followed by translation, the layout used in JSON files.
    pub fn from_row_major(r: &[f64; 9], t: &[f64; 3]) -> Result<Self, GeometryError> {
        Self::new(Matrix3::from_row_slice(r), Vector3::new(t[0], t[1], t[2]))
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        let r = &self.rotation;
        [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]]
    }

    pub fn translation_array(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -(rt * self.translation) }
    }

    /// Left-multiplicative update: `R ← exp(ω)·R`, `t ← t + δt`.
    pub fn oplus(&self, omega: &Vector3<f64>, dt: &Vector3<f64>) -> Pose {
        Pose {
            rotation: Rotation3::new(*omega).matrix() * self.rotation,
            translation: self.translation + dt,
        }
    }

    /// Projects the rotation back onto SO(3) via SVD.
    pub fn orthonormalized(&self) -> Pose {
        Pose { rotation: nearest_rotation(&self.rotation), translation: self.translation }
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vector3::zeros()
    }
}

/// Closest rotation matrix in the Frobenius sense.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u_fix = u;
        // flip the column paired with the smallest singular value
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        u_fix.column_mut(imin).neg_mut();
        r = u_fix * v_t;
    }
    r
}

/// Geodesic angle between two rotations, in radians.
///
/// Uses the chord form `2·asin(‖R₁ − R₂‖_F / √8)`, which stays accurate for
/// tiny angles where the trace formula loses half its digits.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let chord = (a - b).norm() / 8f64.sqrt();
    2.0 * chord.min(1.0).asin()
}

/// Geodesic angle of a rotation from the identity.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    rotation_angle_between(r, &Matrix3::identity())
}

/// Pinhole intrinsics without distortion or skew.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: String| Err(GeometryError::InvalidIntrinsics(m));
        if !(self.fx.is_finite() && self.fy.is_finite() && self.fx > 0.0 && self.fy > 0.0) {
            return bad(format!("focal lengths must be positive (fx={}, fy={})", self.fx, self.fy));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad(format!("cx={} outside [0, {})", self.cx, self.width));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad(format!("cy={} outside [0, {})", self.cy, self.height));
        }
        Ok(())
    }

    /// Intrinsics of the YCB-Video cameras (640×480).
    pub fn ycbv() -> Self {
        Self { fx: 1066.778, fy: 1067.487, cx: 312.9869, cy: 241.3109, width: 640, height: 480 }
    }

    /// Image diagonal in pixels.
    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    /// Pinhole projection of a camera-frame point; `None` unless `z > 0`.
    #[inline]
    pub fn project_camera_point(&self, x: &Vector3<f64>) -> Option<Vector2<f64>> {
        if x.z > 0.0 {
            Some(Vector2::new(self.fx * x.x / x.z + self.cx, self.fy * x.y / x.z + self.cy))
        } else {
            None
        }
    }

    /// Normalized image coordinates `((u − cx)/fx, (v − cy)/fy)`.
    pub fn normalize(&self, uv: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((uv.x - self.cx) / self.fx, (uv.y - self.cy) / self.fy)
    }

    pub fn contains(&self, uv: &Vector2<f64>, margin: f64) -> bool {
        uv.x >= -margin
            && uv.y >= -margin
            && uv.x <= self.width as f64 + margin
            && uv.y <= self.height as f64 + margin
    }
}

/// Projects an object-frame point under `pose`. Returns `None` for points
/// at or behind the camera plane; the caller decides how to treat them.
#[inline]
pub fn project(point: &Vector3<f64>, pose: &Pose, k: &CameraIntrinsics) -> Option<Vector2<f64>> {
    k.project_camera_point(&pose.transform_point(point))
}

/// Skew-symmetric cross-product matrix `[v]×`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn k500() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn projects_origin_to_principal_point() {
        let pose = Pose::from_parts_unchecked(Matrix3::identity(), Vector3::new(0.0, 0.0, 1.0));
        let uv = project(&Vector3::zeros(), &pose, &k500()).unwrap();
        assert_eq!(uv, Vector2::new(320.0, 240.0));
        let uv = project(&Vector3::new(0.1, 0.0, 0.0), &pose, &k500()).unwrap();
        assert!((uv.x - 370.0).abs() < 1e-12 && uv.y == 240.0);
    }

    #[test]
    fn behind_camera_is_flagged() {
        let pose = Pose::from_parts_unchecked(Matrix3::identity(), Vector3::new(0.0, 0.0, -1.0));
        assert!(project(&Vector3::zeros(), &pose, &k500()).is_none());
        let on_plane = Pose::from_parts_unchecked(Matrix3::identity(), Vector3::zeros());
        assert!(project(&Vector3::zeros(), &on_plane, &k500()).is_none());
    }

    #[test]
    fn rejects_bad_rotations() {
        let mut m = Matrix3::identity();
        m[(0, 1)] = 1e-3;
        assert!(matches!(Pose::new(m, Vector3::zeros()), Err(GeometryError::NotOrthonormal(_))));
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(Pose::new(reflect, Vector3::zeros()), Err(GeometryError::BadDeterminant(_))));
    }

    #[test]
    fn intrinsics_invariants() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 10.0, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, -0.1, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::ycbv().validate().is_ok());
    }

    #[test]
    fn chord_angle_matches_axis_angle() {
        for &theta in &[1e-9, 1e-4, 0.3, 1.0, 3.0, PI] {
            let r = Rotation3::new(Vector3::new(0.0, theta, 0.0));
            let got = rotation_angle(r.matrix());
            assert!((got - theta).abs() < 1e-12 * theta.max(1.0), "{theta} vs {got}");
        }
    }

    #[test]
    fn compose_and_inverse() {
        let a = Pose::from_axis_angle(Vector3::new(0.1, -0.2, 0.3), Vector3::new(1.0, 2.0, 3.0));
        let b = Pose::from_axis_angle(Vector3::new(-0.4, 0.0, 0.2), Vector3::new(-1.0, 0.5, 0.0));
        let p = Vector3::new(0.3, -0.7, 0.2);
        let lhs = a.compose(&b).transform_point(&p);
        let rhs = a.transform_point(&b.transform_point(&p));
        assert!((lhs - rhs).norm() < 1e-14);
        let id = a.compose(&a.inverse());
        assert!((id.rotation - Matrix3::identity()).norm() < 1e-14);
        assert!(id.translation.norm() < 1e-14);
    }

    #[test]
    fn nearest_rotation_fixes_drift() {
        let r = Rotation3::new(Vector3::new(0.5, 0.1, -0.3)).into_inner();
        let drift = r + Matrix3::from_element(1e-4);
        let fixed = nearest_rotation(&drift);
        assert!(Pose::new(fixed, Vector3::zeros()).is_ok());
        assert!((fixed - r).norm() < 1e-3);
    }
}
