//! Synthetic scenes, label corruption and closed-loop trials.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixtures::random_rotation;
use crate::geometry::{project, CameraIntrinsics, Pose};
use crate::label_synth::{project_instances, splat_gaussian, synthesize_labels, Instance, LabelError, LabelParams, LabelTensor, SceneAnnotation};
use crate::metrics::{evaluate_image, summarize, EvalConfig, EvalRecord, EvalReport, ImageInput, MetricsError};
use crate::model_registry::{ModelRegistry, NUM_EDGES, NUM_KEYPOINTS};
use crate::paf_parse::{ParseError, ParseMode};
use crate::pipeline::{run_image, PipelineConfig};
use crate::tensor_io::PoseRecord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid noise spec: {0}")]
    InvalidNoise(String),
    #[error("invalid scene parameters: {0}")]
    InvalidRanges(String),
    #[error("no valid scene placement after {attempts} attempts")]
    PlacementExhausted { attempts: usize },
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Label-tensor corruption parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Additive Gaussian noise on keypoint heatmaps, in confidence units.
    pub heatmap_gaussian_noise_sd: f64,
    /// Keypoint blob displacement, in pixels.
    pub keypoint_jitter_sd: f64,
    pub part_dropout_prob: f64,
    /// Spurious blobs added to every keypoint channel.
    pub spurious_peak_count: usize,
    pub spurious_peak_amplitude: f64,
    /// Per-cell PAF rotation, in radians.
    pub paf_angle_noise_sd: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            heatmap_gaussian_noise_sd: 0.0,
            keypoint_jitter_sd: 0.0,
            part_dropout_prob: 0.0,
            spurious_peak_count: 0,
            spurious_peak_amplitude: 1.0,
            paf_angle_noise_sd: 0.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let fields = [
            ("heatmap_gaussian_noise_sd", self.heatmap_gaussian_noise_sd),
            ("keypoint_jitter_sd", self.keypoint_jitter_sd),
            ("spurious_peak_amplitude", self.spurious_peak_amplitude),
            ("paf_angle_noise_sd", self.paf_angle_noise_sd),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::InvalidNoise(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.part_dropout_prob) {
            return Err(SimError::InvalidNoise(format!("part_dropout_prob must be in [0, 1], got {}", self.part_dropout_prob)));
        }
        Ok(())
    }

    fn moves_blobs(&self) -> bool {
        self.keypoint_jitter_sd > 0.0 || self.part_dropout_prob > 0.0
    }

    pub fn is_noiseless(&self) -> bool {
        !self.moves_blobs()
            && self.spurious_peak_count == 0
            && self.heatmap_gaussian_noise_sd == 0.0
            && self.paf_angle_noise_sd == 0.0
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Placement constraints for [`sample_scene`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseRanges {
    /// Object-center depth range in meters.
    pub depth_min: f64,
    pub depth_max: f64,
    /// Projected object centers stay this far from the image border.
    pub center_margin_px: f64,
    /// Projected keypoints stay this far from the image border.
    pub keypoint_margin_px: f64,
    /// Minimum center distance in units of the larger diameter, applied in
    /// 3D and between projected centers in the image. Bounding spheres are
    /// always kept disjoint.
    pub min_separation_diameters: f64,
    pub max_attempts: usize,
}

impl Default for PoseRanges {
    fn default() -> Self {
        Self {
            depth_min: 0.6,
            depth_max: 1.2,
            center_margin_px: 100.0,
            keypoint_margin_px: 48.0,
            min_separation_diameters: 0.0,
            max_attempts: 1000,
        }
    }
}

impl PoseRanges {
    pub fn validate(&self, camera: &CameraIntrinsics) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidRanges(m));
        if !(self.depth_min > 0.0 && self.depth_max >= self.depth_min && self.depth_max.is_finite()) {
            return bad(format!("depth range [{}, {}] is invalid", self.depth_min, self.depth_max));
        }
        let half = (camera.width.min(camera.height) as f64) / 2.0;
        if !(self.center_margin_px >= 0.0 && self.center_margin_px < half) {
            return bad(format!("center margin {} must be in [0, {half})", self.center_margin_px));
        }
        if !(self.keypoint_margin_px >= 0.0 && self.keypoint_margin_px < half) {
            return bad(format!("keypoint margin {} must be in [0, {half})", self.keypoint_margin_px));
        }
        if !(self.min_separation_diameters >= 0.0 && self.min_separation_diameters.is_finite()) {
            return bad(format!("min separation {} must be non-negative", self.min_separation_diameters));
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive".into());
        }
        Ok(())
    }
}

/// Random scene with `n_instances` objects of uniformly drawn classes.
pub fn sample_scene<R: Rng + ?Sized>(
    models: &ModelRegistry,
    camera: &CameraIntrinsics,
    ranges: &PoseRanges,
    n_instances: usize,
    rng: &mut R,
) -> Result<SceneAnnotation, SimError> {
    let ids = models.class_ids();
    if ids.is_empty() {
        return Err(SimError::InvalidRanges("model registry is empty".into()));
    }
    let classes: Vec<u32> = (0..n_instances).map(|_| ids[rng.random_range(0..ids.len())]).collect();
    sample_scene_with_classes(models, camera, ranges, &classes, rng)
}

/// Random scene with one instance per entry of `classes`. Whole scenes
/// are redrawn until every constraint holds.
pub fn sample_scene_with_classes<R: Rng + ?Sized>(
    models: &ModelRegistry,
    camera: &CameraIntrinsics,
    ranges: &PoseRanges,
    classes: &[u32],
    rng: &mut R,
) -> Result<SceneAnnotation, SimError> {
    ranges.validate(camera)?;
    let mut specs = Vec::with_capacity(classes.len());
    for &class_id in classes {
        let model = models.get(class_id).map_err(|_| LabelError::UnknownClass(class_id))?;
        specs.push((class_id, model, model.mesh().bounding_radius(), model.diameter()));
    }
    let (w, h) = (camera.width as f64, camera.height as f64);
    let m = ranges.center_margin_px;
    let km = ranges.keypoint_margin_px;
    'attempt: for _ in 0..ranges.max_attempts {
        let mut placed: Vec<(Instance, f64, f64)> = Vec::with_capacity(classes.len());
        for &(class_id, model, radius, diameter) in &specs {
            let depth = if ranges.depth_max > ranges.depth_min { rng.random_range(ranges.depth_min..=ranges.depth_max) } else { ranges.depth_min };
            let u = rng.random_range(m..=w - m);
            let v = rng.random_range(m..=h - m);
            let t = Vector3::new(depth * (u - camera.cx) / camera.fx, depth * (v - camera.cy) / camera.fy, depth);
            let pose = Pose::from_parts_unchecked(random_rotation(rng), t);
            let in_frame = model.keypoints().iter().all(|kp| {
                project(kp, &pose, camera).is_some_and(|p| p.x >= km && p.y >= km && p.x <= w - km && p.y <= h - km)
            });
            if !in_frame {
                continue 'attempt;
            }
            let clear = placed.iter().all(|(other, other_radius, other_diameter)| {
                let sep = ranges.min_separation_diameters * diameter.max(*other_diameter);
                let d3 = (other.pose.translation - t).norm();
                if d3 <= radius + other_radius || d3 < sep {
                    return false;
                }
                if sep > 0.0 {
                    let pb = camera.project_camera_point(&other.pose.translation).expect("placed in front");
                    let proj_d = camera.fx.max(camera.fy) * sep / depth.min(other.pose.translation.z);
                    return (Vector2::new(u, v) - pb).norm() >= proj_d;
                }
                true
            });
            if !clear {
                continue 'attempt;
            }
            placed.push((Instance { class_id, pose }, radius, diameter));
        }
        return Ok(SceneAnnotation { camera: *camera, instances: placed.into_iter().map(|(i, _, _)| i).collect() });
    }
    Err(SimError::PlacementExhausted { attempts: ranges.max_attempts })
}

fn stage_rng(seed: u64, stage: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stage);
    rng
}

/// Applies, in order: keypoint jitter and part dropout (blobs re-rendered
/// from `scene`), spurious peaks, additive heatmap noise clamped to
/// `[0, 1]`, and per-cell PAF rotation. Each stage draws from its own
/// stream of `spec.seed`. A noiseless spec returns an exact copy.
pub fn corrupt_labels(
    tensor: &LabelTensor,
    spec: &NoiseSpec,
    scene: &SceneAnnotation,
    models: &ModelRegistry,
    params: &LabelParams,
) -> Result<LabelTensor, SimError> {
    spec.validate()?;
    let mut out = tensor.clone();
    if spec.is_noiseless() {
        return Ok(out);
    }
    let n_classes = out.class_ids().len();
    let hc = out.heatmap_channels();
    let kp_channels = hc - 1;
    let mut heatmaps_changed = false;

    if spec.moves_blobs() {
        let instances = project_instances(scene, models, params, true)?;
        for cell in out.heatmaps_mut().chunks_exact_mut(hc) {
            cell[..kp_channels].fill(0.0);
        }
        let mut rng = stage_rng(spec.seed, 1);
        for inst in &instances {
            let ci = out.class_index(inst.class_id).ok_or(LabelError::UnknownClass(inst.class_id))?;
            for (k, p) in inst.points.iter().enumerate() {
                let dropped = rng.random::<f64>() < spec.part_dropout_prob;
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                if let (Some(p), false) = (p, dropped) {
                    let c = p + Vector2::new(dx, dy) * spec.keypoint_jitter_sd;
                    splat_gaussian(&mut out, LabelTensor::keypoint_channel(ci, k), &c, params.sigma, 1.0);
                }
            }
        }
        heatmaps_changed = true;
    }

    if spec.spurious_peak_count > 0 {
        let mut rng = stage_rng(spec.seed, 2);
        let (ih, iw) = out.image_size();
        for ch in 0..kp_channels {
            for _ in 0..spec.spurious_peak_count {
                let c = Vector2::new(rng.random_range(0.0..iw as f64), rng.random_range(0.0..ih as f64));
                splat_gaussian(&mut out, ch, &c, params.sigma, spec.spurious_peak_amplitude);
            }
        }
        heatmaps_changed = true;
    }

    if spec.heatmap_gaussian_noise_sd > 0.0 {
        let mut rng = stage_rng(spec.seed, 3);
        let normal = Normal::new(0.0, spec.heatmap_gaussian_noise_sd).expect("validated sd");
        for cell in out.heatmaps_mut().chunks_exact_mut(hc) {
            for v in &mut cell[..kp_channels] {
                *v = (*v as f64 + normal.sample(&mut rng)).clamp(0.0, 1.0) as f32;
            }
        }
        heatmaps_changed = true;
    }

    if heatmaps_changed {
        out.recompute_background();
    }

    if spec.paf_angle_noise_sd > 0.0 {
        let mut rng = stage_rng(spec.seed, 4);
        let normal = Normal::new(0.0, spec.paf_angle_noise_sd).expect("validated sd");
        let pc = out.paf_channels();
        for cell in out.pafs_mut().chunks_exact_mut(pc) {
            for ci in 0..n_classes {
                for e in 0..NUM_EDGES {
                    let (xc, yc) = LabelTensor::paf_channel_pair(ci, e);
                    let (x, y) = (cell[xc] as f64, cell[yc] as f64);
                    if x == 0.0 && y == 0.0 {
                        continue;
                    }
                    let (s, c) = normal.sample(&mut rng).sin_cos();
                    cell[xc] = (c * x - s * y) as f32;
                    cell[yc] = (s * x + c * y) as f32;
                }
            }
        }
    }
    debug_assert_eq!(kp_channels, n_classes * NUM_KEYPOINTS);
    Ok(out)
}

/// Scene generation and pipeline settings for a batch of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    /// Instances per scene when `classes` is unset.
    pub n_instances: usize,
    /// Fixed class list per scene; one instance per entry.
    pub classes: Option<Vec<u32>>,
    pub ranges: PoseRanges,
    pub labels: LabelParams,
    pub pipeline: PipelineConfig,
    pub eval: EvalConfig,
    pub seed: u64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            n_instances: 1,
            classes: None,
            ranges: PoseRanges::default(),
            labels: LabelParams::default(),
            pipeline: PipelineConfig::default(),
            eval: EvalConfig::default(),
            seed: 0,
        }
    }
}

/// Results of one parsing mode on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeOutcome {
    /// `(class_id, skeleton count)` for each class of the tensor.
    pub skeletons_per_class: Vec<(u32, usize)>,
    pub poses: Vec<PoseRecord>,
    pub n_pose_failures: usize,
    pub records: Vec<EvalRecord>,
    pub false_positives: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub scene: SceneAnnotation,
    pub paf: ModeOutcome,
    pub heatmap: ModeOutcome,
}

fn run_mode(
    tensor: &LabelTensor,
    scene: &SceneAnnotation,
    image_id: &str,
    models: &ModelRegistry,
    config: &TrialConfig,
    mode: ParseMode,
    seed: u64,
) -> Result<ModeOutcome, SimError> {
    let pipeline = config.pipeline.with_mode(mode);
    let result = run_image(tensor, models, &scene.camera, &pipeline, seed)?;
    let input = ImageInput { image_id: image_id.to_string(), estimates: result.estimates(), ground_truth: scene.clone() };
    let eval = evaluate_image(&input, models)?;
    Ok(ModeOutcome {
        skeletons_per_class: tensor.class_ids().iter().map(|&c| (c, result.skeleton_count(c))).collect(),
        poses: result.pose_records(),
        n_pose_failures: result.batch.failures.len(),
        records: eval.records,
        false_positives: eval.false_positives,
    })
}

/// Trial identifier used as the image id in evaluation records.
pub fn trial_id(trial: usize) -> String {
    format!("trial_{trial:06}")
}

/// One trial: scene from seed `config.seed + trial`, labels corrupted with
/// seed `noise.seed + trial`, then both parsing modes. Also returns the
/// corrupted tensor.
pub fn run_trial(
    models: &ModelRegistry,
    camera: &CameraIntrinsics,
    noise: &NoiseSpec,
    config: &TrialConfig,
    trial: usize,
) -> Result<(TrialOutcome, LabelTensor), SimError> {
    let seed = config.seed.wrapping_add(trial as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = match &config.classes {
        Some(classes) => sample_scene_with_classes(models, camera, &config.ranges, classes, &mut rng)?,
        None => sample_scene(models, camera, &config.ranges, config.n_instances, &mut rng)?,
    };
    let clean = synthesize_labels(&scene, models, &config.labels)?;
    let trial_noise = noise.with_seed(noise.seed.wrapping_add(trial as u64));
    let tensor = corrupt_labels(&clean, &trial_noise, &scene, models, &config.labels)?;
    let id = trial_id(trial);
    let paf = run_mode(&tensor, &scene, &id, models, config, ParseMode::Paf, seed)?;
    let heatmap = run_mode(&tensor, &scene, &id, models, config, ParseMode::Heatmap, seed)?;
    Ok((TrialOutcome { trial, seed, scene, paf, heatmap }, tensor))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n_trials: usize,
    pub noise: NoiseSpec,
    pub config: TrialConfig,
    pub paf: EvalReport,
    pub heatmap: EvalReport,
}

/// Aggregates trial outcomes (in trial order) into per-mode reports.
pub fn summarize_trials(
    outcomes: &[TrialOutcome],
    models: &ModelRegistry,
    noise: &NoiseSpec,
    config: &TrialConfig,
) -> Result<SimulationReport, SimError> {
    let scenes: Vec<&SceneAnnotation> = outcomes.iter().map(|o| &o.scene).collect();
    let evals = |pick: fn(&TrialOutcome) -> &ModeOutcome| {
        outcomes
            .iter()
            .map(|o| {
                let m = pick(o);
                crate::metrics::ImageEval { records: m.records.clone(), false_positives: m.false_positives.clone() }
            })
            .collect::<Vec<_>>()
    };
    let paf = summarize(&scenes, evals(|o| &o.paf), models, &config.eval)?;
    let heatmap = summarize(&scenes, evals(|o| &o.heatmap), models, &config.eval)?;
    Ok(SimulationReport { n_trials: outcomes.len(), noise: *noise, config: config.clone(), paf, heatmap })
}

/// Runs `n_trials` independent trials in parallel and reports PAF-mode and
/// heatmap-only results side by side. Output does not depend on the
/// number of worker threads.
pub fn run_trials(
    models: &ModelRegistry,
    camera: &CameraIntrinsics,
    noise: &NoiseSpec,
    n_trials: usize,
    config: &TrialConfig,
) -> Result<(Vec<TrialOutcome>, SimulationReport), SimError> {
    noise.validate()?;
    let outcomes: Vec<TrialOutcome> =
        (0..n_trials).into_par_iter().map(|i| run_trial(models, camera, noise, config, i).map(|(o, _)| o)).collect::<Result<_, _>>()?;
    let report = summarize_trials(&outcomes, models, noise, config)?;
    Ok((outcomes, report))
}
