//! Automatic keypoint selection and keypoint-set audits.
//!
//! Selection runs the greedy farthest-point scheme over the mesh vertices:
//! the seed set holds only the object center (the origin), each step adds
//! the vertex with the largest distance to the current set, and the center
//! itself is dropped from the result.

use nalgebra::Vector3;
use serde::Serialize;

use crate::model_registry::{model_diameter, Mesh, ModelError};

/// Picks `k` mesh vertices by farthest-point sampling seeded at the origin.
///
/// Returned in selection order. Ties go to the lowest vertex index.
pub fn farthest_point_keypoints(mesh: &Mesh, k: usize) -> Result<Vec<Vector3<f64>>, ModelError> {
    let verts = mesh.vertices();
    if k == 0 || verts.len() < k {
        return Err(ModelError::InsufficientVertices { needed: k.max(1), available: verts.len() });
    }
    // squared distance of each vertex to the selected set (initially {origin})
    let mut min_d2: Vec<f64> = verts.iter().map(|v| v.norm_squared()).collect();
    let mut picked = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best = 0;
        for (i, &d) in min_d2.iter().enumerate() {
            if d > min_d2[best] {
                best = i;
            }
        }
        if min_d2[best] == 0.0 && !picked.is_empty() {
            // every remaining vertex coincides with a selected point
            return Err(ModelError::InsufficientVertices { needed: k, available: picked.len() });
        }
        let chosen = verts[best];
        picked.push(chosen);
        for (d, v) in min_d2.iter_mut().zip(verts) {
            *d = d.min((v - chosen).norm_squared());
        }
    }
    Ok(picked)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpreadReport {
    pub min_pairwise_distance: f64,
    pub mean_pairwise_distance: f64,
    pub diameter: f64,
    pub min_to_diameter: f64,
    pub mean_to_diameter: f64,
    /// Keypoints farther than 1e-9 m from every mesh vertex.
    pub off_surface: Vec<usize>,
}

/// Summarizes how well a keypoint set spans the object.
pub fn keypoint_spread_report(keypoints: &[Vector3<f64>], mesh: &Mesh) -> Result<SpreadReport, ModelError> {
    if keypoints.len() < 2 {
        return Err(ModelError::Invariant(format!("spread report needs at least 2 keypoints, got {}", keypoints.len())));
    }
    let mut min_d = f64::INFINITY;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, a) in keypoints.iter().enumerate() {
        for b in &keypoints[i + 1..] {
            let d = (a - b).norm();
            min_d = min_d.min(d);
            sum += d;
            count += 1;
        }
    }
    let diameter = model_diameter(mesh);
    let tree = crate::spatial::KdTree::new(mesh.vertices());
    let off_surface = keypoints
        .iter()
        .enumerate()
        .filter(|(_, k)| tree.nearest(k).is_some_and(|(_, d2)| d2.sqrt() > 1e-9))
        .map(|(i, _)| i)
        .collect();
    let mean = sum / count as f64;
    Ok(SpreadReport {
        min_pairwise_distance: min_d,
        mean_pairwise_distance: mean,
        diameter,
        min_to_diameter: min_d / diameter,
        mean_to_diameter: mean / diameter,
        off_surface,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_cube() -> Mesh {
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

    /// Independent greedy oracle: recomputes every min-distance from scratch.
    fn greedy_oracle(points: &[Vector3<f64>], k: usize) -> Vec<usize> {
        let mut chosen: Vec<usize> = Vec::new();
        for _ in 0..k {
            let mut best: Option<(usize, f64)> = None;
            for (i, p) in points.iter().enumerate() {
                let mut d = p.norm();
                for &c in &chosen {
                    d = d.min((p - points[c]).norm());
                }
                if best.is_none_or(|(_, bd)| d > bd) {
                    best = Some((i, d));
                }
            }
            chosen.push(best.unwrap().0);
        }
        chosen
    }

    #[test]
    fn cube_yields_its_eight_corners() {
        let cube = unit_cube();
        let kps = farthest_point_keypoints(&cube, 8).unwrap();
        let mut got: Vec<_> = kps.iter().map(|v| (v.x, v.y, v.z)).collect();
        let mut want: Vec<_> = cube.vertices().iter().map(|v| (v.x, v.y, v.z)).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
        // all corners tie at the first step; the lowest index wins
        assert_eq!(kps[0], cube.vertices()[0]);
    }

    #[test]
    fn single_keypoint_is_max_norm_vertex() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts: Vec<_> = (0..100).map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let mesh = Mesh::new(pts.clone(), vec![]).unwrap();
        let k = farthest_point_keypoints(&mesh, 1).unwrap();
        let max = pts.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
        assert_eq!(&k[0], max);
    }

    #[test]
    fn matches_greedy_oracle_and_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<_> = (0..200).map(|_| Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5), rng.random_range(-0.2..0.2))).collect();
        let mesh = Mesh::new(pts.clone(), vec![]).unwrap();
        let kps = farthest_point_keypoints(&mesh, 8).unwrap();
        let want: Vec<_> = greedy_oracle(&pts, 8).into_iter().map(|i| pts[i]).collect();
        assert_eq!(kps, want);
        let mut set = vec![Vector3::zeros()];
        let mut last = f64::INFINITY;
        for k in &kps {
            let d = set.iter().map(|s| (k - s).norm()).fold(f64::INFINITY, f64::min);
            assert!(d <= last);
            last = d;
            set.push(*k);
        }
    }

    #[test]
    fn too_few_vertices() {
        let cube = unit_cube();
        assert!(matches!(farthest_point_keypoints(&cube, 9), Err(ModelError::InsufficientVertices { needed: 9, available: 8 })));
        assert!(farthest_point_keypoints(&cube, 0).is_err());
        let mut dup = cube.vertices().to_vec();
        dup.extend_from_slice(cube.vertices());
        let doubled = Mesh::new(dup, vec![]).unwrap();
        assert!(farthest_point_keypoints(&doubled, 9).is_err());
    }

    #[test]
    fn spread_report_on_cube_corners() {
        let cube = unit_cube();
        let r = keypoint_spread_report(cube.vertices(), &cube).unwrap();
        assert_eq!(r.min_pairwise_distance, 1.0);
        assert!((r.min_to_diameter - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!(r.off_surface.is_empty());
        let r = keypoint_spread_report(&[Vector3::zeros(), Vector3::x()], &cube).unwrap();
        assert_eq!(r.off_surface, vec![0, 1]);
        assert!(keypoint_spread_report(&[Vector3::zeros()], &cube).is_err());
    }
}
