//! Object symmetry groups and symmetry-aware pose canonicalization.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::Serialize;

use super::{Mesh, ModelError};
use crate::geometry::{rotation_angle, Pose};
use crate::spatial::KdTree;

/// Steps used to discretize a continuous rotational symmetry.
pub const DEFAULT_CONTINUOUS_STEPS: usize = 64;

/// Default symmetry tolerance as a fraction of the model diameter.
pub const DEFAULT_SYMMETRY_TOLERANCE_FRACTION: f64 = 0.005;

#[derive(Debug, Clone, PartialEq)]
pub enum SymmetryKind {
    None,
    Discrete,
    ContinuousAxis { axis: Vector3<f64>, steps: usize },
}

/// Finite set of object-frame rigid transforms that leave the object's
/// appearance unchanged. Element 0 is always the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrySet {
    transforms: Vec<Pose>,
    kind: SymmetryKind,
}

impl SymmetrySet {
    pub fn identity() -> Self {
        Self { transforms: vec![Pose::identity()], kind: SymmetryKind::None }
    }

    /// Discrete symmetry group. The identity is inserted at position 0 if
    /// missing and removed from anywhere else.
    pub fn discrete(transforms: Vec<Pose>) -> Self {
        let mut all = vec![Pose::identity()];
        all.extend(transforms.into_iter().filter(|t| !t.is_identity()));
        let kind = if all.len() == 1 { SymmetryKind::None } else { SymmetryKind::Discrete };
        Self { transforms: all, kind }
    }

    /// Rotations about `axis` (through the origin) at `steps` uniform angles.
    pub fn continuous(axis: Vector3<f64>, steps: usize) -> Result<Self, ModelError> {
        if steps < 2 {
            return Err(ModelError::Invariant(format!("continuous symmetry needs at least 2 steps, got {steps}")));
        }
        if !(axis.norm() > 0.0) || !axis.iter().all(|c| c.is_finite()) {
            return Err(ModelError::Invariant("continuous symmetry axis must be a non-zero vector".into()));
        }
        let axis = Unit::new_normalize(axis);
        let mut transforms = vec![Pose::identity()];
        for k in 1..steps {
            let angle = std::f64::consts::TAU * k as f64 / steps as f64;
            let r = Rotation3::from_axis_angle(&axis, angle);
            transforms.push(Pose::from_parts_unchecked(r.into_inner(), Vector3::zeros()));
        }
        Ok(Self { transforms, kind: SymmetryKind::ContinuousAxis { axis: axis.into_inner(), steps } })
    }

    pub fn transforms(&self) -> &[Pose] {
        &self.transforms
    }

    pub fn kind(&self) -> &SymmetryKind {
        &self.kind
    }

    pub fn is_symmetric(&self) -> bool {
        self.transforms.len() > 1
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryReport {
    /// Per transform: max over vertices of the distance from the
    /// transformed vertex to its nearest original vertex.
    pub max_deviation: Vec<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks that every transform maps the vertex set onto itself within `tolerance`.
pub fn validate_symmetries(mesh: &Mesh, sym: &SymmetrySet, tolerance: f64) -> SymmetryReport {
    let tree = KdTree::new(mesh.vertices());
    let max_deviation: Vec<f64> = sym
        .transforms()
        .iter()
        .map(|s| {
            mesh.vertices()
                .iter()
                .map(|v| tree.nearest(&s.transform_point(v)).map_or(0.0, |(_, d2)| d2.sqrt()))
                .fold(0.0, f64::max)
        })
        .collect();
    let passed = max_deviation.iter().all(|&d| d <= tolerance);
    SymmetryReport { max_deviation, tolerance, passed }
}

/// Maps a pose to the representative of its symmetry class: the candidate
/// `pose ∘ S` whose rotation has the smallest geodesic angle to the identity.
/// Ties keep the lower symmetry index.
pub fn canonicalize_pose(pose: &Pose, sym: &SymmetrySet) -> Pose {
    let mut best = *pose;
    let mut best_angle = rotation_angle(&pose.rotation);
    for s in &sym.transforms()[1..] {
        let candidate = pose.compose(s);
        let angle = rotation_angle(&candidate.rotation);
        if angle < best_angle {
            best = candidate;
            best_angle = angle;
        }
    }
    best
}

/// Rotation by `angle` about the object z axis.
pub fn rotation_z(angle: f64) -> Matrix3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), angle).into_inner()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_angle_between;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn cube() -> Mesh {
        let mut v = Vec::new();
        for &x in &[-0.5, 0.5] {
            for &y in &[-0.5, 0.5] {
                for &z in &[-0.5, 0.5] {
                    v.push(Vector3::new(x, y, z));
                }
            }
        }
        Mesh::new(v, vec![]).unwrap()
    }

    fn exact_rot_z_90() -> Pose {
        Pose::from_parts_unchecked(Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0), Vector3::zeros())
    }

    fn random_pose(rng: &mut impl Rng) -> Pose {
        let aa = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        Pose::from_axis_angle(aa, Vector3::new(0.0, 0.0, 1.0))
    }

    #[test]
    fn cube_quarter_turn_passes_with_zero_deviation() {
        let sym = SymmetrySet::discrete(vec![exact_rot_z_90()]);
        let report = validate_symmetries(&cube(), &sym, 1e-9);
        assert!(report.passed);
        assert_eq!(report.max_deviation, vec![0.0, 0.0]);
    }

    #[test]
    fn cube_eighth_turn_fails() {
        let r = Pose::from_parts_unchecked(rotation_z(FRAC_PI_4), Vector3::zeros());
        let sym = SymmetrySet::discrete(vec![r]);
        let report = validate_symmetries(&cube(), &sym, 0.005 * 3f64.sqrt());
        assert!(!report.passed);
        assert!(report.max_deviation[1] > 0.1);
    }

    #[test]
    fn identity_has_exactly_zero_deviation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<_> = (0..60).map(|_| Vector3::new(rng.random(), rng.random(), rng.random())).collect();
        let mesh = Mesh::new(pts, vec![]).unwrap();
        let report = validate_symmetries(&mesh, &SymmetrySet::identity(), 0.0);
        assert!(report.passed);
        assert_eq!(report.max_deviation, vec![0.0]);
    }

    #[test]
    fn revolved_profile_passes_with_matching_discretization() {
        let steps = 16;
        let profile = [(0.05, -0.04), (0.08, 0.0), (0.06, 0.03), (0.02, 0.04)];
        let mut pts = Vec::new();
        for k in 0..steps {
            let a = std::f64::consts::TAU * k as f64 / steps as f64;
            for &(r, z) in &profile {
                pts.push(Vector3::new(r * a.cos(), r * a.sin(), z));
            }
        }
        let mesh = Mesh::new(pts, vec![]).unwrap();
        let sym = SymmetrySet::continuous(Vector3::z(), steps).unwrap();
        let tol = DEFAULT_SYMMETRY_TOLERANCE_FRACTION * crate::model_registry::model_diameter(&mesh);
        let report = validate_symmetries(&mesh, &sym, tol);
        assert!(report.passed, "{:?}", report.max_deviation);
        assert!(report.max_deviation.iter().all(|&d| d < 1e-12));
    }

    #[test]
    fn identity_set_leaves_pose_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_pose(&mut rng);
        assert_eq!(canonicalize_pose(&p, &SymmetrySet::identity()), p);
    }

    #[test]
    fn half_turn_related_poses_share_canonical_form() {
        let flip = Pose::from_parts_unchecked(Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0)), Vector3::zeros());
        let sym = SymmetrySet::discrete(vec![flip]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let a = random_pose(&mut rng);
            let b = a.compose(&flip);
            assert_eq!(canonicalize_pose(&a, &sym), canonicalize_pose(&b, &sym));
        }
    }

    #[test]
    fn continuous_canonical_angle_is_minimal_over_candidates() {
        let sym = SymmetrySet::continuous(Vector3::z(), 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let p = random_pose(&mut rng);
            let c = canonicalize_pose(&p, &sym);
            let angle = rotation_angle(&c.rotation);
            // exhaustive scan, independent of canonicalize_pose
            for k in 0..64 {
                let r = p.rotation * rotation_z(std::f64::consts::TAU * k as f64 / 64.0);
                assert!(angle <= rotation_angle(&r) + 1e-12);
            }
            // the representative is still a symmetry-equivalent pose
            let rel = p.rotation.transpose() * c.rotation;
            assert!(rel[(2, 2)] > 1.0 - 1e-12);
        }
    }

    #[test]
    fn discrete_constructor_normalizes_identity() {
        let q = exact_rot_z_90();
        let sym = SymmetrySet::discrete(vec![q, Pose::identity()]);
        assert_eq!(sym.len(), 2);
        assert!(sym.transforms()[0].is_identity());
        assert_eq!(SymmetrySet::discrete(vec![]).kind(), &SymmetryKind::None);
        let half = Pose::from_parts_unchecked(rotation_z(PI), Vector3::zeros());
        let four = SymmetrySet::discrete(vec![q, half]);
        assert!(rotation_angle_between(&four.transforms()[1].rotation, &rotation_z(FRAC_PI_2)) < 1e-15);
        assert!(SymmetrySet::continuous(Vector3::zeros(), 8).is_err());
        assert!(SymmetrySet::continuous(Vector3::z(), 1).is_err());
    }
}
