//! Pose from 2D-3D correspondences: EPnP with a planar homography
//! fallback, Levenberg-Marquardt reprojection refinement and a weighted
//! RANSAC loop.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, SMatrix, SVector, Vector2, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{nearest_rotation, skew, CameraIntrinsics, Pose};
use crate::model_registry::ModelRegistry;
use crate::paf_parse::InstanceSkeleton;

pub use crate::model_registry::canonicalize_pose;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PnpError {
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("{0} correspondences given; at least 4 are required")]
    TooFewCorrespondences(usize),
    #[error("no hypothesis reached 4 inliers in front of the camera")]
    NoValidPose,
    #[error("correspondence {0} has invalid weight or coordinates")]
    InvalidCorrespondence(usize),
    #[error("unknown class id {0}")]
    UnknownClass(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub model_point: Vector3<f64>,
    pub image_point: Vector2<f64>,
    /// Confidence in (0, 1].
    pub weight: f64,
}

impl Correspondence {
    pub fn new(model_point: Vector3<f64>, image_point: Vector2<f64>) -> Self {
        Self { model_point, image_point, weight: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub inlier_mask: Vec<bool>,
    /// Mean reprojection error over inliers, in pixels.
    pub mean_reproj_error: f64,
    pub n_ransac_iters_used: usize,
    pub refine_converged: bool,
}

impl PoseEstimate {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub max_iters: usize,
    /// Stop once the update norm falls below this value.
    pub convergence_tol: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self { max_iters: 50, convergence_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    /// Reprojection error bound for inliers, in pixels.
    pub inlier_threshold: f64,
    pub max_iters: usize,
    pub confidence: f64,
    pub refine: RefineConfig,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { inlier_threshold: 3.0, max_iters: 200, confidence: 0.999, refine: RefineConfig::default() }
    }
}

fn check_correspondences(corrs: &[Correspondence]) -> Result<(), PnpError> {
    for (i, c) in corrs.iter().enumerate() {
        let finite = c.model_point.iter().chain(c.image_point.iter()).all(|v| v.is_finite());
        if !finite || !(c.weight > 0.0 && c.weight.is_finite()) {
            return Err(PnpError::InvalidCorrespondence(i));
        }
    }
    Ok(())
}

fn point_scale(points: &[Vector3<f64>]) -> f64 {
    let c = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    points.iter().map(|p| (p - c).norm()).fold(0.0, f64::max)
}

/// Rejects coincident points and collinear triples.
fn check_minimal_geometry(points: &[Vector3<f64>]) -> Result<(), PnpError> {
    let scale = point_scale(points);
    if !(scale > 0.0) {
        return Err(PnpError::Degenerate("model points coincide".into()));
    }
    let n = points.len();
    for a in 0..n {
        for b in a + 1..n {
            if (points[a] - points[b]).norm() <= 1e-9 * scale {
                return Err(PnpError::Degenerate(format!("model points {a} and {b} coincide")));
            }
            for c in b + 1..n {
                let area = (points[b] - points[a]).cross(&(points[c] - points[a])).norm();
                if area <= 1e-9 * scale * scale {
                    return Err(PnpError::Degenerate(format!("model points {a}, {b}, {c} are collinear")));
                }
            }
        }
    }
    Ok(())
}

/// Minimal solve on exactly four correspondences. Returns every candidate
/// that puts all four points in front of the camera, best reprojection
/// error first.
pub fn pnp_minimal(corrs: &[Correspondence], k: &CameraIntrinsics) -> Result<Vec<Pose>, PnpError> {
    if corrs.len() != 4 {
        return Err(PnpError::Degenerate(format!("minimal solver needs exactly 4 correspondences, got {}", corrs.len())));
    }
    check_correspondences(corrs)?;
    let pts: Vec<Vector3<f64>> = corrs.iter().map(|c| c.model_point).collect();
    check_minimal_geometry(&pts)?;
    let norm: Vec<Vector2<f64>> = corrs.iter().map(|c| k.normalize(&c.image_point)).collect();
    let frame = PointFrame::new(&pts)?;
    let mut raw = if frame.planar { vec![planar_homography(&pts, &norm, &frame)?] } else { epnp_candidates(&pts, &norm, &frame)? };
    // the four-point linearization of EPnP can settle in a wrong minimum;
    // three-point hypotheses from every triple cover the true solution
    for skip in 0..4 {
        let tri: Vec<usize> = (0..4).filter(|&i| i != skip).collect();
        raw.extend(p3p(
            &[pts[tri[0]], pts[tri[1]], pts[tri[2]]],
            &[norm[tri[0]], norm[tri[1]], norm[tri[2]]],
        ));
    }
    Ok(rank_candidates(raw, corrs, k))
}

/// EPnP on any number (≥ 4) of correspondences, returning the candidate
/// with the lowest reprojection error.
pub fn epnp(corrs: &[Correspondence], k: &CameraIntrinsics) -> Result<Pose, PnpError> {
    if corrs.len() < 4 {
        return Err(PnpError::TooFewCorrespondences(corrs.len()));
    }
    check_correspondences(corrs)?;
    solve_candidates(corrs, k)?.into_iter().next().ok_or(PnpError::NoValidPose)
}

fn solve_candidates(corrs: &[Correspondence], k: &CameraIntrinsics) -> Result<Vec<Pose>, PnpError> {
    let pts: Vec<Vector3<f64>> = corrs.iter().map(|c| c.model_point).collect();
    let norm: Vec<Vector2<f64>> = corrs.iter().map(|c| k.normalize(&c.image_point)).collect();
    let frame = PointFrame::new(&pts)?;
    let raw = if frame.planar { vec![planar_homography(&pts, &norm, &frame)?] } else { epnp_candidates(&pts, &norm, &frame)? };
    Ok(rank_candidates(raw, corrs, k))
}

/// Drops candidates with any point at or behind the camera and sorts the
/// rest by summed reprojection error.
fn rank_candidates(raw: Vec<Pose>, corrs: &[Correspondence], k: &CameraIntrinsics) -> Vec<Pose> {
    let pts: Vec<Vector3<f64>> = corrs.iter().map(|c| c.model_point).collect();
    let mut scored: Vec<(f64, Pose)> = raw
        .into_iter()
        .filter(|p| pts.iter().all(|x| p.transform_point(x).z > 0.0))
        .map(|p| (reprojection_errors(&p, corrs, k).iter().sum::<f64>(), p))
        .filter(|(e, _)| e.is_finite())
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored.into_iter().map(|(_, p)| p).collect()
}

/// Polynomial coefficients, lowest degree first.
fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64], scale_b: f64) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[i] += scale_b * y;
    }
    out
}

fn poly_eval(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Real roots of a polynomial via companion-matrix eigenvalues, polished
/// with Newton steps.
fn real_roots(p: &[f64]) -> Vec<f64> {
    let scale = p.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return Vec::new();
    }
    let mut deg = p.len() - 1;
    while deg > 0 && p[deg].abs() <= 1e-12 * scale {
        deg -= 1;
    }
    if deg == 0 {
        return Vec::new();
    }
    let lead = p[deg];
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -p[i] / lead;
    }
    let dp: Vec<f64> = (1..=deg).map(|i| i as f64 * p[i]).collect();
    comp.complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-6 * (1.0 + z.re.abs()))
        .map(|z| {
            let mut x = z.re;
            for _ in 0..5 {
                let d = poly_eval(&dp, x);
                if d == 0.0 {
                    break;
                }
                x -= poly_eval(&p[..=deg], x) / d;
            }
            x
        })
        .collect()
}

/// Three-point pose hypotheses (up to four) by Grunert's elimination.
fn p3p(world: &[Vector3<f64>; 3], norm: &[Vector2<f64>; 3]) -> Vec<Pose> {
    let f: Vec<Vector3<f64>> = norm.iter().map(|n| Vector3::new(n.x, n.y, 1.0).normalize()).collect();
    let a2 = (world[1] - world[2]).norm_squared();
    let b2 = (world[0] - world[2]).norm_squared();
    let c2 = (world[0] - world[1]).norm_squared();
    if !(a2 > 0.0 && b2 > 0.0 && c2 > 0.0) {
        return Vec::new();
    }
    let (ca, cb, cg) = (f[1].dot(&f[2]), f[0].dot(&f[2]), f[0].dot(&f[1]));
    // with s2 = u·s1, s3 = v·s1:  b² ∝ 1 + v² − 2v·cosβ
    let qb = [1.0, -2.0 * cb, 1.0];
    // u = N(v) / D(v) from the difference of the a² and c² equations
    let n = poly_add(&[-1.0, 0.0, 1.0], &qb, (c2 - a2) / b2);
    let d = [-2.0 * cg, 2.0 * ca];
    // c² equation times D²: D² + N² − 2·cosγ·N·D − (c²/b²)·qb·D² = 0
    let d2 = poly_mul(&d, &d);
    let mut quartic = poly_add(&d2, &poly_mul(&n, &n), 1.0);
    quartic = poly_add(&quartic, &poly_mul(&n, &d), -2.0 * cg);
    quartic = poly_add(&quartic, &poly_mul(&qb, &d2), -c2 / b2);
    let mut out = Vec::new();
    for v in real_roots(&quartic) {
        let den = poly_eval(&d, v);
        let qbv = poly_eval(&qb, v);
        if den.abs() < 1e-12 || !(qbv > 0.0) {
            continue;
        }
        let u = poly_eval(&n, v) / den;
        let s1 = (b2 / qbv).sqrt();
        let depths = [s1, u * s1, v * s1];
        if depths.iter().any(|&s| !(s > 0.0)) {
            continue;
        }
        let cam: Vec<Vector3<f64>> = (0..3).map(|i| f[i] * depths[i]).collect();
        let pose = kabsch(world, &cam);
        if pose.rotation.iter().chain(pose.translation.iter()).all(|x| x.is_finite()) {
            out.push(pose);
        }
    }
    out
}

/// Centroid and principal axes of the model points.
struct PointFrame {
    centroid: Vector3<f64>,
    /// Columns are principal directions, largest variance first; det = +1.
    axes: Matrix3<f64>,
    /// Per-axis variance (eigenvalues of the covariance), same order.
    variances: Vector3<f64>,
    planar: bool,
}

impl PointFrame {
    fn new(pts: &[Vector3<f64>]) -> Result<Self, PnpError> {
        let n = pts.len() as f64;
        let centroid = pts.iter().sum::<Vector3<f64>>() / n;
        let mut cov = Matrix3::zeros();
        for p in pts {
            let d = p - centroid;
            cov += d * d.transpose();
        }
        let eig = cov.symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut axes = Matrix3::zeros();
        let mut variances = Vector3::zeros();
        for (col, &o) in order.iter().enumerate() {
            axes.set_column(col, &eig.eigenvectors.column(o));
            variances[col] = eig.eigenvalues[o].max(0.0) / n;
        }
        if axes.determinant() < 0.0 {
            axes.column_mut(2).neg_mut();
        }
        // singular values of the centered n×3 point matrix are sqrt(eigenvalues of cov)
        let smallest_sv = eig.eigenvalues[order[2]].max(0.0).sqrt();
        let second_sv = eig.eigenvalues[order[1]].max(0.0).sqrt();
        let diameter = 2.0 * point_scale(pts);
        if !(diameter > 0.0) || second_sv <= 1e-9 * diameter {
            return Err(PnpError::Degenerate("model points are coincident or collinear".into()));
        }
        Ok(Self { centroid, axes, variances, planar: smallest_sv < 1e-6 * diameter })
    }
}

fn kabsch(world: &[Vector3<f64>], cam: &[Vector3<f64>]) -> Pose {
    let n = world.len() as f64;
    let cw = world.iter().sum::<Vector3<f64>>() / n;
    let cc = cam.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (w, c) in world.iter().zip(cam) {
        h += (c - cc) * (w - cw).transpose();
    }
    let r = nearest_rotation(&h);
    Pose::from_parts_unchecked(r, cc - r * cw)
}

const PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

fn epnp_candidates(pts: &[Vector3<f64>], norm: &[Vector2<f64>], frame: &PointFrame) -> Result<Vec<Pose>, PnpError> {
    let mut ctrl = [frame.centroid; 4];
    for a in 0..3 {
        ctrl[a + 1] = frame.centroid + frame.axes.column(a) * frame.variances[a].sqrt();
    }
    let basis = Matrix3::from_columns(&[ctrl[1] - ctrl[0], ctrl[2] - ctrl[0], ctrl[3] - ctrl[0]]);
    let inv = basis.try_inverse().ok_or_else(|| PnpError::Degenerate("control points are coplanar".into()))?;
    let alphas: Vec<[f64; 4]> = pts
        .iter()
        .map(|p| {
            let a = inv * (p - ctrl[0]);
            [1.0 - a.x - a.y - a.z, a.x, a.y, a.z]
        })
        .collect();

    let rows = (2 * pts.len()).max(12);
    let mut m = DMatrix::<f64>::zeros(rows, 12);
    for (i, (al, uv)) in alphas.iter().zip(norm).enumerate() {
        for j in 0..4 {
            m[(2 * i, 3 * j)] = al[j];
            m[(2 * i, 3 * j + 2)] = -al[j] * uv.x;
            m[(2 * i + 1, 3 * j + 1)] = al[j];
            m[(2 * i + 1, 3 * j + 2)] = -al[j] * uv.y;
        }
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| PnpError::Degenerate("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..12).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    // kernel vectors, smallest singular value first
    let kernel: Vec<[Vector3<f64>; 4]> = order[..4]
        .iter()
        .map(|&r| std::array::from_fn(|j| Vector3::new(v_t[(r, 3 * j)], v_t[(r, 3 * j + 1)], v_t[(r, 3 * j + 2)])))
        .collect();

    let mut l = SMatrix::<f64, 6, 10>::zeros();
    let mut rho = SVector::<f64, 6>::zeros();
    for (row, &(a, b)) in PAIRS.iter().enumerate() {
        let dv: Vec<Vector3<f64>> = kernel.iter().map(|v| v[a] - v[b]).collect();
        let vals = [
            dv[0].dot(&dv[0]),
            2.0 * dv[0].dot(&dv[1]),
            dv[1].dot(&dv[1]),
            2.0 * dv[0].dot(&dv[2]),
            2.0 * dv[1].dot(&dv[2]),
            dv[2].dot(&dv[2]),
            2.0 * dv[0].dot(&dv[3]),
            2.0 * dv[1].dot(&dv[3]),
            2.0 * dv[2].dot(&dv[3]),
            dv[3].dot(&dv[3]),
        ];
        for (c, v) in vals.iter().enumerate() {
            l[(row, c)] = *v;
        }
        rho[row] = (ctrl[a] - ctrl[b]).norm_squared();
    }

    let mut out = Vec::new();
    for approx in [betas_n4(&l, &rho), betas_n2(&l, &rho), betas_n3(&l, &rho)].into_iter().flatten() {
        let betas = refine_betas(&l, &rho, approx);
        let cc: [Vector3<f64>; 4] =
            std::array::from_fn(|j| (0..4).map(|kk| kernel[kk][j] * betas[kk]).sum::<Vector3<f64>>());
        let mut cam: Vec<Vector3<f64>> =
            alphas.iter().map(|al| (0..4).map(|j| cc[j] * al[j]).sum::<Vector3<f64>>()).collect();
        let mean_z: f64 = cam.iter().map(|p| p.z).sum::<f64>() / cam.len() as f64;
        if mean_z < 0.0 {
            cam.iter_mut().for_each(|p| *p = -*p);
        }
        let pose = kabsch(pts, &cam);
        if pose.rotation.iter().all(|v| v.is_finite()) && pose.translation.iter().all(|v| v.is_finite()) {
            out.push(pose);
        }
    }
    Ok(out)
}

fn solve_columns(l: &SMatrix<f64, 6, 10>, rho: &SVector<f64, 6>, cols: &[usize]) -> Option<DVector<f64>> {
    let sub = DMatrix::from_fn(6, cols.len(), |r, c| l[(r, cols[c])]);
    let rhs = DVector::from_iterator(6, rho.iter().copied());
    sub.svd(true, true).solve(&rhs, 1e-14).ok()
}

fn betas_n4(l: &SMatrix<f64, 6, 10>, rho: &SVector<f64, 6>) -> Option<[f64; 4]> {
    let b = solve_columns(l, rho, &[0, 1, 3, 6])?;
    if b[0] < 0.0 {
        let b1 = (-b[0]).sqrt();
        Some([b1, -b[1] / b1, -b[2] / b1, -b[3] / b1])
    } else {
        let b1 = b[0].sqrt();
        if b1 == 0.0 {
            return None;
        }
        Some([b1, b[1] / b1, b[2] / b1, b[3] / b1])
    }
}

fn betas_n2(l: &SMatrix<f64, 6, 10>, rho: &SVector<f64, 6>) -> Option<[f64; 4]> {
    let b = solve_columns(l, rho, &[0, 1, 2])?;
    let (mut b1, b2) = if b[0] < 0.0 {
        ((-b[0]).sqrt(), if b[2] < 0.0 { (-b[2]).sqrt() } else { 0.0 })
    } else {
        (b[0].sqrt(), if b[2] > 0.0 { b[2].sqrt() } else { 0.0 })
    };
    if b[1] < 0.0 {
        b1 = -b1;
    }
    Some([b1, b2, 0.0, 0.0])
}

fn betas_n3(l: &SMatrix<f64, 6, 10>, rho: &SVector<f64, 6>) -> Option<[f64; 4]> {
    let b = solve_columns(l, rho, &[0, 1, 2, 3, 4])?;
    let (mut b1, b2) = if b[0] < 0.0 {
        ((-b[0]).sqrt(), if b[2] < 0.0 { (-b[2]).sqrt() } else { 0.0 })
    } else {
        (b[0].sqrt(), if b[2] > 0.0 { b[2].sqrt() } else { 0.0 })
    };
    if b[1] < 0.0 {
        b1 = -b1;
    }
    if b1 == 0.0 {
        return None;
    }
    Some([b1, b2, b[3] / b1, 0.0])
}

/// Gauss-Newton on the control-point distance constraints.
fn refine_betas(l: &SMatrix<f64, 6, 10>, rho: &SVector<f64, 6>, mut b: [f64; 4]) -> [f64; 4] {
    for _ in 0..10 {
        let mut a = SMatrix::<f64, 6, 4>::zeros();
        let mut r = SVector::<f64, 6>::zeros();
        for i in 0..6 {
            let li = |c: usize| l[(i, c)];
            a[(i, 0)] = 2.0 * li(0) * b[0] + li(1) * b[1] + li(3) * b[2] + li(6) * b[3];
            a[(i, 1)] = li(1) * b[0] + 2.0 * li(2) * b[1] + li(4) * b[2] + li(7) * b[3];
            a[(i, 2)] = li(3) * b[0] + li(4) * b[1] + 2.0 * li(5) * b[2] + li(8) * b[3];
            a[(i, 3)] = li(6) * b[0] + li(7) * b[1] + li(8) * b[2] + 2.0 * li(9) * b[3];
            let bb = [
                b[0] * b[0],
                b[0] * b[1],
                b[1] * b[1],
                b[0] * b[2],
                b[1] * b[2],
                b[2] * b[2],
                b[0] * b[3],
                b[1] * b[3],
                b[2] * b[3],
                b[3] * b[3],
            ];
            r[i] = rho[i] - (0..10).map(|c| li(c) * bb[c]).sum::<f64>();
        }
        let Ok(step) = a.svd(true, true).solve(&r, 1e-14) else { break };
        if !step.iter().all(|v| v.is_finite()) {
            break;
        }
        for k in 0..4 {
            b[k] += step[k];
        }
        if step.norm() < 1e-15 {
            break;
        }
    }
    b
}

/// Homography-based pose for coplanar model points.
fn planar_homography(pts: &[Vector3<f64>], norm: &[Vector2<f64>], frame: &PointFrame) -> Result<Pose, PnpError> {
    let b = frame.axes;
    let plane: Vec<Vector2<f64>> = pts
        .iter()
        .map(|p| {
            let q = b.transpose() * (p - frame.centroid);
            Vector2::new(q.x, q.y)
        })
        .collect();
    let (tp, plane_n) = hartley(&plane);
    let (ti, img_n) = hartley(norm);
    let rows = (2 * pts.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, q)) in plane_n.iter().zip(&img_n).enumerate() {
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r0 = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u];
        let r1 = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v];
        for c in 0..9 {
            a[(2 * i, c)] = r0[c];
            a[(2 * i + 1, c)] = r1[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| PnpError::Degenerate("SVD failed".into()))?;
    let smallest = (0..9).min_by(|&x, &y| svd.singular_values[x].total_cmp(&svd.singular_values[y])).unwrap();
    let hn = Matrix3::from_fn(|r, c| v_t[(smallest, 3 * r + c)]);
    let ti_inv = ti.try_inverse().ok_or_else(|| PnpError::Degenerate("image points coincide".into()))?;
    let h = ti_inv * hn * tp;
    let (h1, h2, h3) = (h.column(0).into_owned(), h.column(1).into_owned(), h.column(2).into_owned());
    let mut lambda = 0.5 * (h1.norm() + h2.norm());
    if !(lambda > 0.0) {
        return Err(PnpError::Degenerate("homography is singular".into()));
    }
    if h3.z < 0.0 {
        lambda = -lambda;
    }
    let (r1, r2, t_plane) = (h1 / lambda, h2 / lambda, h3 / lambda);
    let r_plane = nearest_rotation(&Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]));
    let rotation = r_plane * b.transpose();
    Ok(Pose::from_parts_unchecked(rotation, t_plane - rotation * frame.centroid))
}

/// Similarity moving points to zero mean and mean distance √2.
fn hartley(points: &[Vector2<f64>]) -> (Matrix3<f64>, Vec<Vector2<f64>>) {
    let n = points.len() as f64;
    let c = points.iter().sum::<Vector2<f64>>() / n;
    let mean_d = points.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean_d > 0.0 { std::f64::consts::SQRT_2 / mean_d } else { 1.0 };
    let t = Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0);
    (t, points.iter().map(|p| (p - c) * s).collect())
}

/// Per-correspondence reprojection error in pixels; infinite for points
/// at or behind the camera.
pub fn reprojection_errors(pose: &Pose, corrs: &[Correspondence], k: &CameraIntrinsics) -> Vec<f64> {
    corrs
        .iter()
        .map(|c| {
            k.project_camera_point(&pose.transform_point(&c.model_point))
                .map_or(f64::INFINITY, |uv| (uv - c.image_point).norm())
        })
        .collect()
}

/// Stacked weighted residuals `√w·(π(R·p + t) − u)`, or `None` if any
/// point is at or behind the camera.
pub fn reprojection_residuals(pose: &Pose, corrs: &[Correspondence], k: &CameraIntrinsics) -> Option<DVector<f64>> {
    let mut r = DVector::zeros(2 * corrs.len());
    for (i, c) in corrs.iter().enumerate() {
        let uv = k.project_camera_point(&pose.transform_point(&c.model_point))?;
        let sw = c.weight.sqrt();
        r[2 * i] = sw * (uv.x - c.image_point.x);
        r[2 * i + 1] = sw * (uv.y - c.image_point.y);
    }
    Some(r)
}

/// Jacobian of [`reprojection_residuals`] with respect to the increment
/// `(ω, δt)` of [`Pose::oplus`], as a `2n × 6` matrix.
pub fn reprojection_jacobian(pose: &Pose, corrs: &[Correspondence], k: &CameraIntrinsics) -> Option<DMatrix<f64>> {
    let mut j = DMatrix::zeros(2 * corrs.len(), 6);
    for (i, c) in corrs.iter().enumerate() {
        let rp = pose.rotation * c.model_point;
        let x = rp + pose.translation;
        if x.z <= 0.0 {
            return None;
        }
        let iz = 1.0 / x.z;
        let dproj = SMatrix::<f64, 2, 3>::new(
            k.fx * iz,
            0.0,
            -k.fx * x.x * iz * iz,
            0.0,
            k.fy * iz,
            -k.fy * x.y * iz * iz,
        );
        let d_omega = dproj * (-skew(&rp));
        let sw = c.weight.sqrt();
        for r in 0..2 {
            for col in 0..3 {
                j[(2 * i + r, col)] = sw * d_omega[(r, col)];
                j[(2 * i + r, col + 3)] = sw * dproj[(r, col)];
            }
        }
    }
    Some(j)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineResult {
    pub pose: Pose,
    pub converged: bool,
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
}

fn cost_of(pose: &Pose, corrs: &[Correspondence], k: &CameraIntrinsics) -> f64 {
    reprojection_residuals(pose, corrs, k).map_or(f64::INFINITY, |r| r.norm_squared())
}

/// Levenberg-Marquardt on the weighted squared reprojection error. Steps
/// are only accepted when they lower the cost, so the result is never
/// worse than the input.
pub fn refine_pose(pose: &Pose, corrs: &[Correspondence], k: &CameraIntrinsics, config: &RefineConfig) -> Result<RefineResult, PnpError> {
    if corrs.len() < 4 {
        return Err(PnpError::TooFewCorrespondences(corrs.len()));
    }
    check_correspondences(corrs)?;
    let initial_cost = cost_of(pose, corrs, k);
    let mut current = *pose;
    let mut cost = initial_cost;
    let mut converged = false;
    let mut iterations = 0;
    let mut lambda = -1.0;
    if !cost.is_finite() {
        return Ok(RefineResult { pose: current, converged: false, iterations: 0, initial_cost, final_cost: cost });
    }
    while iterations < config.max_iters {
        if cost == 0.0 {
            converged = true;
            break;
        }
        let (Some(r), Some(j)) = (reprojection_residuals(&current, corrs, k), reprojection_jacobian(&current, corrs, k)) else {
            break;
        };
        let jtj: Matrix6<f64> = Matrix6::from_fn(|a, b| j.column(a).dot(&j.column(b)));
        let g: Vector6<f64> = Vector6::from_fn(|a, _| j.column(a).dot(&r));
        if g.amax() <= 1e-15 * (1.0 + cost) {
            converged = true;
            break;
        }
        if lambda < 0.0 {
            lambda = 1e-6 * jtj.diagonal().max();
        }
        iterations += 1;
        let mut accepted = false;
        while lambda < 1e12 * (1.0 + jtj.diagonal().max()) {
            let mut a = jtj;
            for d in 0..6 {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|ch| ch.solve(&(-g))) else {
                lambda *= 10.0;
                continue;
            };
            let omega = Vector3::new(step[0], step[1], step[2]);
            let dt = Vector3::new(step[3], step[4], step[5]);
            let candidate = current.oplus(&omega, &dt);
            let new_cost = cost_of(&candidate, corrs, k);
            if new_cost < cost {
                current = candidate;
                cost = new_cost;
                lambda = (lambda / 10.0).max(1e-20);
                accepted = true;
                if step.norm() < config.convergence_tol {
                    converged = true;
                }
                break;
            }
            if step.norm() < config.convergence_tol {
                // no decrease even for a negligible step: at the minimum
                converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if converged || !accepted {
            break;
        }
    }
    let current = current.orthonormalized();
    let final_cost = cost_of(&current, corrs, k).min(cost);
    Ok(RefineResult { pose: current, converged, iterations, initial_cost, final_cost })
}

fn mask_and_mean(errors: &[f64], threshold: f64) -> (Vec<bool>, usize, f64) {
    let mask: Vec<bool> = errors.iter().map(|&e| e <= threshold).collect();
    let n = mask.iter().filter(|&&b| b).count();
    let sum: f64 = errors.iter().zip(&mask).filter(|(_, &m)| m).map(|(e, _)| e).sum();
    (mask, n, if n > 0 { sum / n as f64 } else { f64::INFINITY })
}

fn subset(corrs: &[Correspondence], mask: &[bool]) -> Vec<Correspondence> {
    corrs.iter().zip(mask).filter(|(_, &m)| m).map(|(c, _)| *c).collect()
}

/// Robust pose: weighted 4-point sampling, consensus by inlier count
/// (ties to lower mean inlier error), adaptive stopping, then refinement
/// on the inliers.
pub fn ransac_pnp(corrs: &[Correspondence], k: &CameraIntrinsics, config: &RansacConfig, seed: u64) -> Result<PoseEstimate, PnpError> {
    let n = corrs.len();
    if n < 4 {
        return Err(PnpError::TooFewCorrespondences(n));
    }
    check_correspondences(corrs)?;
    let th = config.inlier_threshold;

    if n == 4 {
        let mut best: Option<(f64, Pose, bool)> = None;
        for cand in pnp_minimal(corrs, k)? {
            let refined = refine_pose(&cand, corrs, k, &config.refine)?;
            let errs = reprojection_errors(&refined.pose, corrs, k);
            let (_, count, mean) = mask_and_mean(&errs, th);
            if count == 4 && best.as_ref().is_none_or(|b| mean < b.0) {
                best = Some((mean, refined.pose, refined.converged));
            }
        }
        let (mean, pose, conv) = best.ok_or(PnpError::NoValidPose)?;
        return Ok(PoseEstimate { pose, inlier_mask: vec![true; 4], mean_reproj_error: mean, n_ransac_iters_used: 0, refine_converged: conv });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = corrs.iter().map(|c| c.weight).collect();
    let mut best: Option<(usize, f64, Pose)> = None;
    let mut iters = 0;
    while iters < config.max_iters {
        iters += 1;
        let sample = rand::seq::index::sample_weighted(&mut rng, n, |i| weights[i], 4)
            .map_err(|e| PnpError::Degenerate(format!("sampling failed: {e}")))?;
        let mut idx: Vec<usize> = sample.into_iter().collect();
        idx.sort_unstable();
        let minimal: Vec<Correspondence> = idx.iter().map(|&i| corrs[i]).collect();
        let Ok(cands) = pnp_minimal(&minimal, k) else { continue };
        for cand in cands {
            let errs = reprojection_errors(&cand, corrs, k);
            let (_, count, mean) = mask_and_mean(&errs, th);
            if count < 4 {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bc, bm, _)) => count > *bc || (count == *bc && mean < *bm),
            };
            if better {
                best = Some((count, mean, cand));
            }
        }
        if let Some((count, _, _)) = best {
            let w = count as f64 / n as f64;
            let miss = (1.0 - w.powi(4)).powi(iters as i32);
            if miss < 1.0 - config.confidence {
                break;
            }
        }
    }
    let (_, _, hypothesis) = best.ok_or(PnpError::NoValidPose)?;

    let mut pose = hypothesis;
    let mut mask = mask_and_mean(&reprojection_errors(&pose, corrs, k), th).0;
    let mut converged = false;
    for _ in 0..2 {
        let inl = subset(corrs, &mask);
        if inl.len() < 4 {
            break;
        }
        let start = epnp(&inl, k).ok().filter(|p| cost_of(p, &inl, k) < cost_of(&pose, &inl, k)).unwrap_or(pose);
        let refined = refine_pose(&start, &inl, k, &config.refine)?;
        let new_mask = mask_and_mean(&reprojection_errors(&refined.pose, corrs, k), th).0;
        if new_mask.iter().filter(|&&b| b).count() < 4 {
            break;
        }
        pose = refined.pose;
        converged = refined.converged;
        let same = new_mask == mask;
        mask = new_mask;
        if same {
            break;
        }
    }
    let (mask, count, mean) = mask_and_mean(&reprojection_errors(&pose, corrs, k), th);
    if count < 4 {
        return Err(PnpError::NoValidPose);
    }
    Ok(PoseEstimate { pose, inlier_mask: mask, mean_reproj_error: mean, n_ransac_iters_used: iters, refine_converged: converged })
}

/// Correspondences pairing each skeleton part with the model keypoint of
/// the same index, weighted by detection score (clamped to (0, 1]).
pub fn skeleton_correspondences(skeleton: &InstanceSkeleton, keypoints: &[Vector3<f64>]) -> (Vec<usize>, Vec<Correspondence>) {
    skeleton
        .parts()
        .iter()
        .map(|(&part, c)| {
            (part, Correspondence { model_point: keypoints[part], image_point: c.position, weight: c.score.clamp(1e-6, 1.0) })
        })
        .unzip()
}

/// Pose of one skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct InstancePose {
    pub skeleton_index: usize,
    pub class_id: u32,
    /// Part index of each correspondence, aligned with `estimate.inlier_mask`.
    pub parts: Vec<usize>,
    pub instance_score: f64,
    pub estimate: PoseEstimate,
}

impl InstancePose {
    pub fn inlier_parts(&self) -> Vec<usize> {
        self.parts.iter().zip(&self.estimate.inlier_mask).filter(|(_, &m)| m).map(|(&p, _)| p).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFailure {
    pub skeleton_index: usize,
    pub class_id: u32,
    pub error: PnpError,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoseBatch {
    pub poses: Vec<InstancePose>,
    pub failures: Vec<PoseFailure>,
}

/// Runs RANSAC-PnP for every skeleton. Skeleton `i` uses seed
/// `seed + i` (wrapping). Failures are collected, not fatal.
pub fn estimate_poses(
    skeletons: &[InstanceSkeleton],
    models: &ModelRegistry,
    k: &CameraIntrinsics,
    config: &RansacConfig,
    seed: u64,
) -> PoseBatch {
    let mut batch = PoseBatch::default();
    for (i, s) in skeletons.iter().enumerate() {
        let fail = |error| PoseFailure { skeleton_index: i, class_id: s.class_id(), error };
        let model = match models.get(s.class_id()) {
            Ok(m) => m,
            Err(_) => {
                batch.failures.push(fail(PnpError::UnknownClass(s.class_id())));
                continue;
            }
        };
        let (parts, corrs) = skeleton_correspondences(s, model.keypoints());
        match ransac_pnp(&corrs, k, config, seed.wrapping_add(i as u64)) {
            Ok(estimate) => batch.poses.push(InstancePose {
                skeleton_index: i,
                class_id: s.class_id(),
                parts,
                instance_score: s.instance_score(),
                estimate,
            }),
            Err(e) => batch.failures.push(fail(e)),
        }
    }
    batch
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{box_corners, random_pose_facing, random_rotation};
    use crate::geometry::{project, rotation_angle_between};
    use rand::Rng;

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::new(600.0, 600.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn synth(points: &[Vector3<f64>], pose: &Pose) -> Vec<Correspondence> {
        points.iter().map(|p| Correspondence::new(*p, project(p, pose, &camera()).unwrap())).collect()
    }

    fn cloud(rng: &mut impl Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
            .collect()
    }

    #[test]
    fn minimal_recovers_noiseless_pose() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let pts = cloud(&mut rng, 4);
            let depth = rng.random_range(0.5..1.5);
            let gt = random_pose_facing(&mut rng, &camera(), depth);
            let sols = pnp_minimal(&synth(&pts, &gt), &camera()).unwrap();
            let refined = refine_pose(&sols[0], &synth(&pts, &gt), &camera(), &RefineConfig::default()).unwrap().pose;
            assert!(rotation_angle_between(&refined.rotation, &gt.rotation) < 1e-6);
            assert!((refined.translation - gt.translation).norm() < 1e-7);
        }
    }

    #[test]
    fn three_point_hypotheses_contain_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let pts = cloud(&mut rng, 3);
            let gt = random_pose_facing(&mut rng, &camera(), 1.0);
            let norm: Vec<_> = pts.iter().map(|p| camera().normalize(&project(p, &gt, &camera()).unwrap())).collect();
            let sols = p3p(&[pts[0], pts[1], pts[2]], &[norm[0], norm[1], norm[2]]);
            assert!(sols.len() <= 4);
            let best = sols.iter().map(|s| rotation_angle_between(&s.rotation, &gt.rotation)).fold(f64::INFINITY, f64::min);
            assert!(best < 1e-4, "{best}");
        }
    }

    #[test]
    fn epnp_alone_is_accurate_on_eight_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let pts = cloud(&mut rng, 8);
            let depth = rng.random_range(0.5..1.5);
            let gt = random_pose_facing(&mut rng, &camera(), depth);
            let p = epnp(&synth(&pts, &gt), &camera()).unwrap();
            assert!(rotation_angle_between(&p.rotation, &gt.rotation) < 1e-6);
            assert!((p.translation - gt.translation).norm() < 1e-6);
        }
    }

    #[test]
    fn planar_points_use_homography() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [4, 6, 8] {
            for _ in 0..50 {
                let mut pts: Vec<Vector3<f64>> =
                    (0..n).map(|_| Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 0.0)).collect();
                let tilt = random_rotation(&mut rng);
                pts.iter_mut().for_each(|p| *p = tilt * *p + Vector3::new(0.01, -0.02, 0.03));
                let gt = random_pose_facing(&mut rng, &camera(), 0.8);
                if pts.iter().any(|p| gt.transform_point(p).z <= 0.05) {
                    continue;
                }
                let corrs = synth(&pts, &gt);
                let p = epnp(&corrs, &camera()).unwrap();
                let r = refine_pose(&p, &corrs, &camera(), &RefineConfig::default()).unwrap().pose;
                assert!(rotation_angle_between(&r.rotation, &gt.rotation) < 1e-6, "n={n}");
                assert!((r.translation - gt.translation).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn degenerate_inputs() {
        let p = Vector3::new(0.1, 0.0, 0.0);
        let uv = Vector2::new(300.0, 200.0);
        let same = vec![Correspondence::new(p, uv); 4];
        assert!(matches!(pnp_minimal(&same, &camera()), Err(PnpError::Degenerate(_))));
        let line: Vec<_> = (0..4).map(|i| Correspondence::new(Vector3::new(i as f64 * 0.1, 0.0, 0.0), uv)).collect();
        assert!(matches!(pnp_minimal(&line, &camera()), Err(PnpError::Degenerate(_))));
        let three: Vec<_> = box_corners(0.1, 0.1, 0.1)[..4]
            .iter()
            .enumerate()
            .map(|(i, q)| Correspondence::new(if i == 3 { Vector3::new(0.2, 0.2, 0.0) } else { *q }, uv))
            .collect();
        let _ = pnp_minimal(&three, &camera());
        assert!(matches!(ransac_pnp(&same[..3], &camera(), &RansacConfig::default(), 0), Err(PnpError::TooFewCorrespondences(3))));
        let mut bad = synth(&box_corners(0.1, 0.1, 0.1), &Pose::from_axis_angle(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0)));
        bad[2].weight = 0.0;
        assert_eq!(ransac_pnp(&bad, &camera(), &RansacConfig::default(), 0), Err(PnpError::InvalidCorrespondence(2)));
    }

    #[test]
    fn cheirality_rejects_mirror_solutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = cloud(&mut rng, 4);
        let gt = random_pose_facing(&mut rng, &camera(), 1.0);
        for s in pnp_minimal(&synth(&pts, &gt), &camera()).unwrap() {
            assert!(pts.iter().all(|p| s.transform_point(p).z > 0.0));
        }
    }

    #[test]
    fn exact_pose_is_left_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = cloud(&mut rng, 8);
        let gt = random_pose_facing(&mut rng, &camera(), 1.0);
        let corrs: Vec<_> = pts
            .iter()
            .map(|p| {
                let x = gt.transform_point(p);
                Correspondence::new(*p, Vector2::new(600.0 * x.x / x.z + 320.0, 600.0 * x.y / x.z + 240.0))
            })
            .collect();
        let r = refine_pose(&gt, &corrs, &camera(), &RefineConfig::default()).unwrap();
        assert!((r.pose.rotation - gt.rotation).amax() < 1e-10);
        assert!((r.pose.translation - gt.translation).amax() < 1e-10);
    }

    #[test]
    fn perturbed_pose_converges_quickly() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let pts = box_corners(0.05, 0.04, 0.06);
            let depth = rng.random_range(0.5..1.2);
            let gt = random_pose_facing(&mut rng, &camera(), depth);
            let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
            let dir = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
            let start = gt.oplus(&(axis * 2f64.to_radians()), &(dir * 0.005));
            let corrs = synth(&pts, &gt);
            let r = refine_pose(&start, &corrs, &camera(), &RefineConfig::default()).unwrap();
            assert!(r.iterations <= 20, "{}", r.iterations);
            assert!(rotation_angle_between(&r.pose.rotation, &gt.rotation) < 1e-6);
            assert!((r.pose.translation - gt.translation).norm() < 1e-6);
            assert!(r.final_cost <= r.initial_cost);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let pts = cloud(&mut rng, 6);
            let gt = random_pose_facing(&mut rng, &camera(), 0.8);
            let mut corrs = synth(&pts, &gt);
            for c in &mut corrs {
                c.image_point += Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                c.weight = rng.random_range(0.2..1.0);
            }
            let pose = gt.oplus(&Vector3::new(0.01, -0.02, 0.015), &Vector3::new(0.002, 0.001, -0.003));
            let j = reprojection_jacobian(&pose, &corrs, &camera()).unwrap();
            let h = 1e-6;
            for col in 0..6 {
                let mut d = Vector6::zeros();
                d[col] = h;
                let plus = pose.oplus(&d.fixed_rows::<3>(0).into(), &d.fixed_rows::<3>(3).into());
                let minus = pose.oplus(&(-d.fixed_rows::<3>(0)), &(-d.fixed_rows::<3>(3)));
                let fd = (reprojection_residuals(&plus, &corrs, &camera()).unwrap()
                    - reprojection_residuals(&minus, &corrs, &camera()).unwrap())
                    / (2.0 * h);
                let an = j.column(col);
                assert!((fd - an).norm() <= 1e-5 * an.norm().max(1.0), "col {col}");
            }
        }
    }

    #[test]
    fn ransac_clean_and_with_outliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pts = box_corners(0.05, 0.04, 0.06);
        for trial in 0..50 {
            let gt = random_pose_facing(&mut rng, &camera(), 0.8);
            let clean = synth(&pts, &gt);
            let est = ransac_pnp(&clean, &camera(), &RansacConfig::default(), trial).unwrap();
            assert_eq!(est.inlier_count(), 8);
            assert!(rotation_angle_between(&est.pose.rotation, &gt.rotation) < 1e-6);
            assert!((est.pose.translation - gt.translation).norm() < 1e-6);
            let mut dirty = clean.clone();
            for i in [1, 6] {
                let a = rng.random_range(0.0..std::f64::consts::TAU);
                dirty[i].image_point += Vector2::new(a.cos(), a.sin()) * 50.0;
            }
            let est = ransac_pnp(&dirty, &camera(), &RansacConfig::default(), trial).unwrap();
            assert_eq!(est.inlier_count(), 6);
            assert!(!est.inlier_mask[1] && !est.inlier_mask[6]);
            assert!(rotation_angle_between(&est.pose.rotation, &gt.rotation) < 0.2f64.to_radians());
            assert!((est.pose.translation - gt.translation).norm() < 0.002);
        }
    }

    #[test]
    fn four_points_with_outlier_never_silently_wrong() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let pts = cloud(&mut rng, 4);
            let gt = random_pose_facing(&mut rng, &camera(), 0.8);
            let mut corrs = synth(&pts, &gt);
            corrs[2].image_point.x += 40.0;
            match ransac_pnp(&corrs, &camera(), &RansacConfig::default(), 1) {
                Err(PnpError::NoValidPose) | Err(PnpError::Degenerate(_)) => {}
                Ok(est) => {
                    let errs = reprojection_errors(&est.pose, &corrs, &camera());
                    assert!(errs.iter().all(|&e| e <= 3.0));
                    assert!((est.mean_reproj_error - errs.iter().sum::<f64>() / 4.0).abs() < 1e-12);
                }
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn ransac_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pts = box_corners(0.05, 0.04, 0.06);
        let gt = random_pose_facing(&mut rng, &camera(), 0.8);
        let mut corrs = synth(&pts, &gt);
        for (i, c) in corrs.iter_mut().enumerate() {
            c.image_point += Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            c.weight = 0.3 + 0.08 * i as f64;
        }
        corrs[3].image_point.y += 45.0;
        let a = ransac_pnp(&corrs, &camera(), &RansacConfig::default(), 77).unwrap();
        let b = ransac_pnp(&corrs, &camera(), &RansacConfig::default(), 77).unwrap();
        assert_eq!(a, b);
    }
}
