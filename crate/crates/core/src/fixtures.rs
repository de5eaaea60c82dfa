//! Built-in object models and pose generators for tests and examples.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::geometry::{CameraIntrinsics, Pose};
use crate::model_registry::{Mesh, ObjectModel, SymmetrySet, CUBOID_EDGES};

/// The 8 corners of an axis-aligned box with half extents `(hx, hy, hz)`,
/// as a bottom ring followed by a top ring (matches [`CUBOID_EDGES`]).
pub fn box_corners(hx: f64, hy: f64, hz: f64) -> [Vector3<f64>; 8] {
    let ring = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let mut out = [Vector3::zeros(); 8];
    for (k, &(sx, sy)) in ring.iter().enumerate() {
        out[k] = Vector3::new(sx * hx, sy * hy, -hz);
        out[k + 4] = Vector3::new(sx * hx, sy * hy, hz);
    }
    out
}

/// Triangulated box mesh with corner keypoints.
pub fn box_mesh(hx: f64, hy: f64, hz: f64) -> Mesh {
    let faces = vec![
        [0, 2, 1], [0, 3, 2], // bottom
        [4, 5, 6], [4, 6, 7], // top
        [0, 1, 5], [0, 5, 4],
        [1, 2, 6], [1, 6, 5],
        [2, 3, 7], [2, 7, 6],
        [3, 0, 4], [3, 4, 7],
    ];
    Mesh::new(box_corners(hx, hy, hz).to_vec(), faces).expect("box mesh is valid")
}

/// Asymmetric box model with keypoints on the corners.
pub fn box_model(class_id: u32, hx: f64, hy: f64, hz: f64) -> ObjectModel {
    ObjectModel::new(
        class_id,
        format!("box_{class_id}"),
        box_mesh(hx, hy, hz),
        box_corners(hx, hy, hz),
        CUBOID_EDGES,
        SymmetrySet::identity(),
        None,
    )
    .expect("box model is valid")
}

/// Rotation drawn uniformly from SO(3).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    loop {
        let q = Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if q.norm() > 1e-6 {
            return UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        }
    }
}

/// Random rotation with the object center at `depth` meters, projecting into
/// the central 40% of the image.
pub fn random_pose_facing<R: Rng + ?Sized>(rng: &mut R, camera: &CameraIntrinsics, depth: f64) -> Pose {
    let (w, h) = (camera.width as f64, camera.height as f64);
    let u = rng.random_range(0.3 * w..0.7 * w);
    let v = rng.random_range(0.3 * h..0.7 * h);
    let t = Vector3::new(depth * (u - camera.cx) / camera.fx, depth * (v - camera.cy) / camera.fy, depth);
    Pose::from_parts_unchecked(random_rotation(rng), t)
}
