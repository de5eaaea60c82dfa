//! Pose error metrics, accuracy-threshold curves and dataset evaluation.

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rotation_angle_between, CameraIntrinsics, Pose};
use crate::label_synth::SceneAnnotation;
use crate::model_registry::{ModelRegistry, SymmetrySet};
use crate::spatial::KdTree;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("accuracy curve needs at least one error value")]
    EmptyInput,
    #[error("accuracy curve needs n_steps >= 2 and a positive maximum threshold")]
    InvalidCurveParams,
    #[error("error value {0} is NaN or negative")]
    InvalidError(f64),
    #[error("unknown class id {0}")]
    UnknownClass(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Add,
    Adds,
    Proj2d,
    Mssd,
    Mspd,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [MetricKind::Add, MetricKind::Adds, MetricKind::Proj2d, MetricKind::Mssd, MetricKind::Mspd];

    pub fn is_pixel(&self) -> bool {
        matches!(self, MetricKind::Proj2d | MetricKind::Mspd)
    }

    /// Lowercase name, as serialized.
    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Add => "add",
            MetricKind::Adds => "adds",
            MetricKind::Proj2d => "proj2d",
            MetricKind::Mssd => "mssd",
            MetricKind::Mspd => "mspd",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Mean distance between corresponding model points under both poses.
pub fn add_error(est: &Pose, gt: &Pose, points: &[Vector3<f64>]) -> f64 {
    let sum: f64 = points.iter().map(|p| (gt.transform_point(p) - est.transform_point(p)).norm()).sum();
    sum / points.len() as f64
}

/// Mean distance from each ground-truth point to the closest estimated point.
pub fn adds_error(est: &Pose, gt: &Pose, points: &[Vector3<f64>]) -> f64 {
    let moved: Vec<Vector3<f64>> = points.iter().map(|p| est.transform_point(p)).collect();
    let tree = KdTree::new(&moved);
    let sum: f64 = points
        .iter()
        .map(|p| tree.nearest(&gt.transform_point(p)).map_or(0.0, |(_, d2)| d2.sqrt()))
        .sum();
    sum / points.len() as f64
}

/// Quadratic-time reference for [`adds_error`].
pub fn adds_error_brute(est: &Pose, gt: &Pose, points: &[Vector3<f64>]) -> f64 {
    let moved: Vec<Vector3<f64>> = points.iter().map(|p| est.transform_point(p)).collect();
    let sum: f64 = points
        .iter()
        .map(|p| {
            let g = gt.transform_point(p);
            moved.iter().map(|m| (g - m).norm()).fold(f64::INFINITY, f64::min)
        })
        .sum();
    sum / points.len() as f64
}

/// Pixel distance between the projections of two camera-frame points.
/// Points at or behind the camera make the distance the image diagonal.
fn projected_distance(a: &Vector3<f64>, b: &Vector3<f64>, k: &CameraIntrinsics) -> f64 {
    match (k.project_camera_point(a), k.project_camera_point(b)) {
        (Some(pa), Some(pb)) => (pa - pb).norm().min(k.diagonal()),
        _ => k.diagonal(),
    }
}

/// Mean 2D distance between projected corresponding points. Each point
/// contributes at most the image diagonal.
pub fn proj2d_error(est: &Pose, gt: &Pose, points: &[Vector3<f64>], k: &CameraIntrinsics) -> f64 {
    let sum: f64 =
        points.iter().map(|p| projected_distance(&gt.transform_point(p), &est.transform_point(p), k)).sum();
    sum / points.len() as f64
}

/// Maximum symmetry-aware surface distance: min over symmetries of the
/// max point distance.
pub fn mssd(est: &Pose, gt: &Pose, sym: &SymmetrySet, points: &[Vector3<f64>]) -> f64 {
    sym.transforms()
        .iter()
        .map(|s| {
            let g = gt.compose(s);
            points.iter().map(|p| (g.transform_point(p) - est.transform_point(p)).norm()).fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Maximum symmetry-aware projection distance, in pixels.
pub fn mspd(est: &Pose, gt: &Pose, sym: &SymmetrySet, points: &[Vector3<f64>], k: &CameraIntrinsics) -> f64 {
    sym.transforms()
        .iter()
        .map(|s| {
            let g = gt.compose(s);
            points
                .iter()
                .map(|p| projected_distance(&g.transform_point(p), &est.transform_point(p), k))
                .fold(0.0, f64::max)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Rotation (radians) and translation (meters) error against the closest
/// symmetry-equivalent ground truth.
pub fn pose_error_modulo_symmetry(est: &Pose, gt: &Pose, sym: &SymmetrySet) -> (f64, f64) {
    let mut best = (f64::INFINITY, f64::INFINITY);
    for s in sym.transforms() {
        let g = gt.compose(s);
        let angle = rotation_angle_between(&est.rotation, &g.rotation);
        if angle < best.0 {
            best = (angle, (est.translation - g.translation).norm());
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCurve {
    pub metric: Option<MetricKind>,
    pub thresholds: Vec<f64>,
    pub accuracy: Vec<f64>,
    /// Area under the curve divided by the maximum threshold, in [0, 1].
    pub auc: f64,
}

/// Fraction of errors at or below each of `n_steps` uniform thresholds on
/// `[0, max_threshold]`, with the trapezoidal area normalized to [0, 1].
/// Missed detections enter as `+∞`.
pub fn accuracy_curve(errors: &[f64], max_threshold: f64, n_steps: usize) -> Result<AccuracyCurve, MetricsError> {
    if errors.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if n_steps < 2 || !(max_threshold > 0.0 && max_threshold.is_finite()) {
        return Err(MetricsError::InvalidCurveParams);
    }
    if let Some(&bad) = errors.iter().find(|e| e.is_nan() || **e < 0.0) {
        return Err(MetricsError::InvalidError(bad));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let thresholds: Vec<f64> = (0..n_steps).map(|i| max_threshold * i as f64 / (n_steps - 1) as f64).collect();
    let accuracy: Vec<f64> = thresholds.iter().map(|&t| sorted.partition_point(|&e| e <= t) as f64 / n).collect();
    let area: f64 = accuracy.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum();
    let auc = (area / (n_steps - 1) as f64).clamp(0.0, 1.0);
    Ok(AccuracyCurve { metric: None, thresholds, accuracy, auc })
}

/// Estimate/ground-truth pairing for one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    /// `(estimate index, ground-truth index)` pairs.
    pub matches: Vec<(usize, usize)>,
    pub missed_gt: Vec<usize>,
    pub false_positives: Vec<usize>,
}

/// Greedy one-to-one assignment within each class by ascending
/// translation distance; ties by estimate index, then ground-truth index.
pub fn assign_to_gt(estimates: &[(u32, Pose)], gts: &[(u32, Pose)]) -> Assignment {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ei, (ec, ep)) in estimates.iter().enumerate() {
        for (gi, (gc, gp)) in gts.iter().enumerate() {
            if ec == gc {
                pairs.push(((ep.translation - gp.translation).norm(), ei, gi));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut est_used = vec![false; estimates.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut out = Assignment::default();
    for (_, ei, gi) in pairs {
        if !est_used[ei] && !gt_used[gi] {
            est_used[ei] = true;
            gt_used[gi] = true;
            out.matches.push((ei, gi));
        }
    }
    out.matches.sort_by_key(|&(_, g)| g);
    out.missed_gt = (0..gts.len()).filter(|&g| !gt_used[g]).collect();
    out.false_positives = (0..estimates.len()).filter(|&e| !est_used[e]).collect();
    out
}

/// Errors for one ground-truth instance; all `None` when it was missed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub image_id: String,
    pub class_id: u32,
    pub gt_index: usize,
    pub matched_estimate: Option<usize>,
    pub add: Option<f64>,
    pub adds: Option<f64>,
    pub proj2d: Option<f64>,
    pub mssd: Option<f64>,
    pub mspd: Option<f64>,
    pub rotation_error_deg: Option<f64>,
    pub translation_error: Option<f64>,
}

impl EvalRecord {
    pub fn value(&self, metric: MetricKind) -> Option<f64> {
        match metric {
            MetricKind::Add => self.add,
            MetricKind::Adds => self.adds,
            MetricKind::Proj2d => self.proj2d,
            MetricKind::Mssd => self.mssd,
            MetricKind::Mspd => self.mspd,
        }
    }

    pub fn is_missed(&self) -> bool {
        self.matched_estimate.is_none()
    }
}

/// Evaluation inputs for one image.
#[derive(Debug, Clone)]
pub struct ImageInput {
    pub image_id: String,
    pub estimates: Vec<(u32, Pose)>,
    pub ground_truth: SceneAnnotation,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ImageEval {
    pub records: Vec<EvalRecord>,
    /// Class ids of unmatched estimates.
    pub false_positives: Vec<u32>,
}

/// Assigns estimates to ground truth and computes every metric for each
/// ground-truth instance.
pub fn evaluate_image(input: &ImageInput, models: &ModelRegistry) -> Result<ImageEval, MetricsError> {
    let gts: Vec<(u32, Pose)> = input.ground_truth.instances.iter().map(|i| (i.class_id, i.pose)).collect();
    for &(c, _) in gts.iter().chain(&input.estimates) {
        models.get(c).map_err(|_| MetricsError::UnknownClass(c))?;
    }
    let assignment = assign_to_gt(&input.estimates, &gts);
    let k = &input.ground_truth.camera;
    let mut records: Vec<EvalRecord> = gts
        .iter()
        .enumerate()
        .map(|(gi, &(class_id, _))| EvalRecord {
            image_id: input.image_id.clone(),
            class_id,
            gt_index: gi,
            matched_estimate: None,
            add: None,
            adds: None,
            proj2d: None,
            mssd: None,
            mspd: None,
            rotation_error_deg: None,
            translation_error: None,
        })
        .collect();
    for &(ei, gi) in &assignment.matches {
        let (class_id, gt) = gts[gi];
        let est = input.estimates[ei].1;
        let model = models.get(class_id).expect("checked");
        let pts = model.eval_points();
        let sym = model.symmetries();
        let (rot, trans) = pose_error_modulo_symmetry(&est, &gt, sym);
        let r = &mut records[gi];
        r.matched_estimate = Some(ei);
        r.add = Some(add_error(&est, &gt, pts));
        r.adds = Some(adds_error(&est, &gt, pts));
        r.proj2d = Some(proj2d_error(&est, &gt, pts, k));
        r.mssd = Some(mssd(&est, &gt, sym, pts));
        r.mspd = Some(mspd(&est, &gt, sym, pts, k));
        r.rotation_error_deg = Some(rot.to_degrees());
        r.translation_error = Some(trans);
    }
    let false_positives = assignment.false_positives.iter().map(|&e| input.estimates[e].0).collect();
    Ok(ImageEval { records, false_positives })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Maximum threshold for ADD, ADD-S and MSSD curves, in meters.
    pub max_threshold_3d: f64,
    /// Maximum threshold for 2D projection and MSPD curves, in pixels.
    pub max_threshold_2d: f64,
    pub n_steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { max_threshold_3d: 0.1, max_threshold_2d: 40.0, n_steps: 1000 }
    }
}

impl EvalConfig {
    pub fn max_threshold(&self, metric: MetricKind) -> f64 {
        if metric.is_pixel() {
            self.max_threshold_2d
        } else {
            self.max_threshold_3d
        }
    }
}

/// AuC × 100 rounded to one decimal.
pub fn auc_percent(auc: f64) -> f64 {
    (auc * 1000.0).round() / 10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class_id: u32,
    pub name: String,
    pub symmetric: bool,
    pub n_images: usize,
    pub n_instances: usize,
    pub n_missed: usize,
    pub n_false_positives: usize,
    pub auc_add: f64,
    pub auc_adds: f64,
    pub auc_proj2d: f64,
    pub auc_mssd: f64,
    pub auc_mspd: f64,
    /// ADD-S for symmetric classes, ADD otherwise.
    pub headline_metric: MetricKind,
    pub auc_headline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageSummary {
    pub auc_add: f64,
    pub auc_adds: f64,
    pub auc_proj2d: f64,
    pub auc_mssd: f64,
    pub auc_mspd: f64,
    pub auc_headline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub classes: Vec<ClassSummary>,
    pub average: Option<AverageSummary>,
    pub records: Vec<EvalRecord>,
}

/// Per-class accuracy curve for one metric; missed instances count as `+∞`.
pub fn class_curve(records: &[EvalRecord], class_id: u32, metric: MetricKind, config: &EvalConfig) -> Result<AccuracyCurve, MetricsError> {
    let errors: Vec<f64> =
        records.iter().filter(|r| r.class_id == class_id).map(|r| r.value(metric).unwrap_or(f64::INFINITY)).collect();
    let mut curve = accuracy_curve(&errors, config.max_threshold(metric), config.n_steps)?;
    curve.metric = Some(metric);
    Ok(curve)
}

/// Evaluates every image (in parallel, order preserved) and aggregates
/// per-class AuC values.
pub fn evaluate_dataset(images: &[ImageInput], models: &ModelRegistry, config: &EvalConfig) -> Result<EvalReport, MetricsError> {
    let per_image: Vec<ImageEval> =
        images.par_iter().map(|img| evaluate_image(img, models)).collect::<Result<_, _>>()?;
    let scenes: Vec<&SceneAnnotation> = images.iter().map(|img| &img.ground_truth).collect();
    summarize(&scenes, per_image, models, config)
}

/// Aggregates per-image evaluations; `scenes[i]` is the ground truth of
/// `per_image[i]`.
pub fn summarize(scenes: &[&SceneAnnotation], per_image: Vec<ImageEval>, models: &ModelRegistry, config: &EvalConfig) -> Result<EvalReport, MetricsError> {
    let mut class_ids: Vec<u32> = scenes.iter().flat_map(|s| s.instances.iter().map(|i| i.class_id)).collect();
    class_ids.sort_unstable();
    class_ids.dedup();
    let mut fp_counts = std::collections::BTreeMap::<u32, usize>::new();
    for e in &per_image {
        for &c in &e.false_positives {
            *fp_counts.entry(c).or_default() += 1;
        }
    }
    let records: Vec<EvalRecord> = per_image.into_iter().flat_map(|e| e.records).collect();
    let mut classes = Vec::new();
    for &c in &class_ids {
        let model = models.get(c).map_err(|_| MetricsError::UnknownClass(c))?;
        let mut auc = [0.0; 5];
        for (slot, m) in auc.iter_mut().zip(MetricKind::ALL) {
            *slot = class_curve(&records, c, m, config)?.auc;
        }
        let headline_metric = if model.is_symmetric() { MetricKind::Adds } else { MetricKind::Add };
        let n_images = scenes.iter().filter(|s| s.instances.iter().any(|i| i.class_id == c)).count();
        let mine: Vec<&EvalRecord> = records.iter().filter(|r| r.class_id == c).collect();
        classes.push(ClassSummary {
            class_id: c,
            name: model.name().to_string(),
            symmetric: model.is_symmetric(),
            n_images,
            n_instances: mine.len(),
            n_missed: mine.iter().filter(|r| r.is_missed()).count(),
            n_false_positives: fp_counts.get(&c).copied().unwrap_or(0),
            auc_add: auc_percent(auc[0]),
            auc_adds: auc_percent(auc[1]),
            auc_proj2d: auc_percent(auc[2]),
            auc_mssd: auc_percent(auc[3]),
            auc_mspd: auc_percent(auc[4]),
            headline_metric,
            auc_headline: auc_percent(if model.is_symmetric() { auc[1] } else { auc[0] }),
        });
    }
    let average = (!classes.is_empty()).then(|| {
        let mean = |f: fn(&ClassSummary) -> f64| (classes.iter().map(f).sum::<f64>() / classes.len() as f64 * 10.0).round() / 10.0;
        AverageSummary {
            auc_add: mean(|c| c.auc_add),
            auc_adds: mean(|c| c.auc_adds),
            auc_proj2d: mean(|c| c.auc_proj2d),
            auc_mssd: mean(|c| c.auc_mssd),
            auc_mspd: mean(|c| c.auc_mspd),
            auc_headline: mean(|c| c.auc_headline),
        }
    });
    Ok(EvalReport { config: *config, classes, average, records })
}

impl EvalReport {
    /// CSV with columns `class_id, auc_add, auc_adds, auc_proj2d, n_images, n_missed`
    /// and a final `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class_id,auc_add,auc_adds,auc_proj2d,n_images,n_missed\n");
        for c in &self.classes {
            out.push_str(&format!(
                "{},{:.1},{:.1},{:.1},{},{}\n",
                c.class_id, c.auc_add, c.auc_adds, c.auc_proj2d, c.n_images, c.n_missed
            ));
        }
        if let Some(a) = &self.average {
            let n_images: usize = self.classes.iter().map(|c| c.n_images).sum();
            let n_missed: usize = self.classes.iter().map(|c| c.n_missed).sum();
            out.push_str(&format!("mean,{:.1},{:.1},{:.1},{},{}\n", a.auc_add, a.auc_adds, a.auc_proj2d, n_images, n_missed));
        }
        out
    }
}

/// Projects model points under `pose`; `None` for points at or behind the camera.
pub fn project_points(pose: &Pose, points: &[Vector3<f64>], k: &CameraIntrinsics) -> Vec<Option<Vector2<f64>>> {
    points.iter().map(|p| k.project_camera_point(&pose.transform_point(p))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_pose_facing, random_rotation};
    use crate::model_registry::rotation_z;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    #[test]
    fn metric_names_match_serialization() {
        for m in MetricKind::ALL {
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{m}\""));
        }
    }

    fn cloud(rng: &mut impl Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
            .collect()
    }

    #[test]
    fn zero_for_identical_poses() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = cloud(&mut rng, 30);
        let p = random_pose_facing(&mut rng, &camera(), 1.0);
        let sym = SymmetrySet::identity();
        assert_eq!(add_error(&p, &p, &pts), 0.0);
        assert_eq!(adds_error(&p, &p, &pts), 0.0);
        assert_eq!(proj2d_error(&p, &p, &pts, &camera()), 0.0);
        assert_eq!(mssd(&p, &p, &sym, &pts), 0.0);
        assert_eq!(mspd(&p, &p, &sym, &pts, &camera()), 0.0);
    }

    #[test]
    fn pure_translation_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let pts = cloud(&mut rng, 20);
            let gt = random_pose_facing(&mut rng, &camera(), 1.0);
            let est = Pose::from_parts_unchecked(gt.rotation, gt.translation + Vector3::new(0.0, 0.0, 0.05));
            assert!((add_error(&est, &gt, &pts) - 0.05).abs() < 1e-12);
        }
    }

    #[test]
    fn adds_absorbs_ring_symmetry() {
        let pts: Vec<_> = (0..12)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / 12.0;
                Vector3::new(0.1 * a.cos(), 0.1 * a.sin(), 0.0)
            })
            .collect();
        let gt = Pose::from_parts_unchecked(random_rotation(&mut ChaCha8Rng::seed_from_u64(3)), Vector3::new(0.0, 0.0, 1.0));
        let step = Pose::from_parts_unchecked(rotation_z(std::f64::consts::TAU / 12.0), Vector3::zeros());
        let est = gt.compose(&step);
        assert!(adds_error(&est, &gt, &pts) < 1e-9);
        assert!(add_error(&est, &gt, &pts) > 0.01);
        let sym = SymmetrySet::discrete(vec![step]);
        assert!(mssd(&est, &gt, &sym, &pts) < 1e-9);
    }

    #[test]
    fn kd_tree_matches_brute_force_and_adds_le_add() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let pts = cloud(&mut rng, 80);
            let gt = random_pose_facing(&mut rng, &camera(), 1.0);
            let est = random_pose_facing(&mut rng, &camera(), 1.1);
            let fast = adds_error(&est, &gt, &pts);
            assert!((fast - adds_error_brute(&est, &gt, &pts)).abs() <= 1e-12 * fast.max(1.0));
            assert!(fast <= add_error(&est, &gt, &pts));
            assert!(mssd(&est, &gt, &SymmetrySet::identity(), &pts) >= add_error(&est, &gt, &pts));
        }
    }

    #[test]
    fn proj2d_axial_shift_matches_pinhole() {
        let p = [Vector3::new(0.1, 0.0, 0.0)];
        let gt = Pose::from_parts_unchecked(nalgebra::Matrix3::identity(), Vector3::new(0.0, 0.0, 1.0));
        let est = Pose::from_parts_unchecked(nalgebra::Matrix3::identity(), Vector3::new(0.0, 0.0, 1.25));
        // u = 500·0.1/z + 320
        let expected = 500.0 * 0.1 / 1.0 - 500.0 * 0.1 / 1.25;
        assert!((proj2d_error(&est, &gt, &p, &camera()) - expected).abs() < 1e-12);
        let behind = Pose::from_parts_unchecked(nalgebra::Matrix3::identity(), Vector3::new(0.0, 0.0, -1.0));
        assert_eq!(proj2d_error(&behind, &gt, &p, &camera()), camera().diagonal());
    }

    #[test]
    fn curve_edge_cases() {
        let c = accuracy_curve(&[0.0; 17], 0.1, 1000).unwrap();
        assert_eq!(c.auc, 1.0);
        let c = accuracy_curve(&[0.2, f64::INFINITY], 0.1, 1000).unwrap();
        assert_eq!(c.auc, 0.0);
        assert!(accuracy_curve(&[], 0.1, 10).is_err());
        assert!(accuracy_curve(&[0.1], 0.1, 1).is_err());
        assert!(accuracy_curve(&[f64::NAN], 0.1, 10).is_err());
        let c = accuracy_curve(&[0.05], 0.1, 3).unwrap();
        assert_eq!(c.accuracy, vec![0.0, 1.0, 1.0]);
        assert_eq!(c.auc, 0.75);
    }

    #[test]
    fn greedy_assignment_is_one_to_one() {
        let p = |x: f64| Pose::from_parts_unchecked(nalgebra::Matrix3::identity(), Vector3::new(x, 0.0, 1.0));
        let gts = vec![(1, p(0.0)), (1, p(0.3)), (2, p(0.1))];
        let ests = vec![(1, p(0.05)), (1, p(0.06)), (2, p(0.5)), (3, p(0.0))];
        let a = assign_to_gt(&ests, &gts);
        assert_eq!(a.matches, vec![(0, 0), (1, 1), (2, 2)]);
        assert!(a.missed_gt.is_empty());
        assert_eq!(a.false_positives, vec![3]);
        let a = assign_to_gt(&ests[..1], &gts);
        assert_eq!(a.missed_gt, vec![1, 2]);
    }
}
