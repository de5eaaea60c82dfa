//! Ground-truth heatmap and part-affinity-field tensors.
//!
//! Layout for `C` classes (in ascending class id order) on an
//! `h × w` grid with stride `s`:
//!
//! * heatmaps: `C·8 + 1` channels, channel `c·8 + k` holds keypoint `k` of
//!   class index `c`; the last channel is background.
//! * PAFs: `C·24` channels, channels `c·24 + 2e` and `c·24 + 2e + 1` hold the
//!   x and y components for edge `e` of class index `c`.
//!
//! Grid cell `(i, j)` is centered at pixel `((j + 0.5)·s, (i + 0.5)·s)`.

use std::cmp::Ordering;

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::geometry::{project, CameraIntrinsics, Pose};
use crate::model_registry::{ModelRegistry, NUM_EDGES, NUM_KEYPOINTS};

pub use crate::model_registry::canonicalize_pose as canonicalize_gt_pose;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabelError {
    #[error("class id {0} is not registered")]
    UnknownClass(u32),
    #[error("invalid label parameters: {0}")]
    InvalidParams(String),
    #[error("tensor layout error: {0}")]
    Layout(String),
}

pub const HEATMAP_CHANNELS_PER_CLASS: usize = NUM_KEYPOINTS;
pub const PAF_CHANNELS_PER_CLASS: usize = 2 * NUM_EDGES;

pub fn heatmap_channel_count(num_classes: usize) -> usize {
    num_classes * HEATMAP_CHANNELS_PER_CLASS + 1
}

pub fn paf_channel_count(num_classes: usize) -> usize {
    num_classes * PAF_CHANNELS_PER_CLASS
}

/// Rendering parameters. Lengths are in full-resolution pixels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LabelParams {
    pub stride: usize,
    /// Gaussian standard deviation of keypoint blobs.
    pub sigma: f64,
    /// Half-width of the PAF band around each edge.
    pub paf_half_width: f64,
    /// Keypoints farther than this many grid cells outside the image are dropped.
    pub margin_cells: f64,
}

impl LabelParams {
    /// σ = 2 cells, PAF half-width = 1.5 cells, 20-cell margin.
    pub fn with_stride(stride: usize) -> Self {
        let s = stride as f64;
        Self { stride, sigma: 2.0 * s, paf_half_width: 1.5 * s, margin_cells: 20.0 }
    }

    pub fn margin_px(&self) -> f64 {
        self.margin_cells * self.stride as f64
    }

    pub fn validate(&self) -> Result<(), LabelError> {
        if self.stride == 0 {
            return Err(LabelError::InvalidParams("stride must be positive".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(LabelError::InvalidParams(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.paf_half_width > 0.0) {
            return Err(LabelError::InvalidParams(format!("PAF half-width must be positive, got {}", self.paf_half_width)));
        }
        if !(self.margin_cells >= 0.0) {
            return Err(LabelError::InvalidParams("margin must be non-negative".into()));
        }
        Ok(())
    }
}

impl Default for LabelParams {
    fn default() -> Self {
        Self::with_stride(8)
    }
}

/// Heatmap + PAF stacks on the stride grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTensor {
    grid_height: usize,
    grid_width: usize,
    stride: usize,
    /// (height, width) of the full-resolution image.
    image_size: (u32, u32),
    class_ids: Vec<u32>,
    heatmaps: Vec<f32>,
    pafs: Vec<f32>,
}

/// Read-only view of one channel of an interleaved `(h, w, c)` array.
#[derive(Debug, Clone, Copy)]
pub struct ChannelView<'a> {
    data: &'a [f32],
    channels: usize,
    channel: usize,
    pub height: usize,
    pub width: usize,
}

impl ChannelView<'_> {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.data[(i * self.width + j) * self.channels + self.channel]
    }

    pub fn iter_cells(&self) -> impl Iterator<Item = (usize, usize, f32)> + '_ {
        (0..self.height).flat_map(move |i| (0..self.width).map(move |j| (i, j, self.get(i, j))))
    }
}

pub fn grid_dims(image_height: u32, image_width: u32, stride: usize) -> (usize, usize) {
    ((image_height as usize).div_ceil(stride), (image_width as usize).div_ceil(stride))
}

impl LabelTensor {
    /// All keypoint channels zero, background one, PAFs zero.
    pub fn empty(class_ids: &[u32], image_height: u32, image_width: u32, stride: usize) -> Self {
        let (h, w) = grid_dims(image_height, image_width, stride);
        let hc = heatmap_channel_count(class_ids.len());
        let mut heatmaps = vec![0.0f32; h * w * hc];
        for cell in heatmaps.chunks_exact_mut(hc) {
            cell[hc - 1] = 1.0;
        }
        Self {
            grid_height: h,
            grid_width: w,
            stride,
            image_size: (image_height, image_width),
            class_ids: class_ids.to_vec(),
            heatmaps,
            pafs: vec![0.0; h * w * paf_channel_count(class_ids.len())],
        }
    }

    /// Assembles a tensor from raw stacks, checking the channel contract.
    pub fn from_parts(
        class_ids: Vec<u32>,
        image_size: (u32, u32),
        stride: usize,
        grid: (usize, usize),
        heatmaps: Vec<f32>,
        pafs: Vec<f32>,
    ) -> Result<Self, LabelError> {
        let (h, w) = grid;
        if stride == 0 {
            return Err(LabelError::Layout("stride must be positive".into()));
        }
        let mut sorted = class_ids.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted != class_ids {
            return Err(LabelError::Layout(format!("class ids must be strictly ascending, got {class_ids:?}")));
        }
        let c = class_ids.len();
        if heatmaps.len() != h * w * heatmap_channel_count(c) {
            return Err(LabelError::Layout(format!(
                "heatmap stack has {} values, expected {h}×{w}×{}",
                heatmaps.len(),
                heatmap_channel_count(c)
            )));
        }
        if pafs.len() != h * w * paf_channel_count(c) {
            return Err(LabelError::Layout(format!(
                "PAF stack has {} values, expected {h}×{w}×{}",
                pafs.len(),
                paf_channel_count(c)
            )));
        }
        Ok(Self { grid_height: h, grid_width: w, stride, image_size, class_ids, heatmaps, pafs })
    }

    pub fn grid_height(&self) -> usize {
        self.grid_height
    }

    pub fn grid_width(&self) -> usize {
        self.grid_width
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn image_size(&self) -> (u32, u32) {
        self.image_size
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn class_index(&self, class_id: u32) -> Option<usize> {
        self.class_ids.binary_search(&class_id).ok()
    }

    pub fn heatmap_channels(&self) -> usize {
        heatmap_channel_count(self.class_ids.len())
    }

    pub fn paf_channels(&self) -> usize {
        paf_channel_count(self.class_ids.len())
    }

    pub fn heatmaps(&self) -> &[f32] {
        &self.heatmaps
    }

    pub fn pafs(&self) -> &[f32] {
        &self.pafs
    }

    pub fn heatmaps_mut(&mut self) -> &mut [f32] {
        &mut self.heatmaps
    }

    pub fn pafs_mut(&mut self) -> &mut [f32] {
        &mut self.pafs
    }

    pub fn keypoint_channel(class_index: usize, part: usize) -> usize {
        class_index * HEATMAP_CHANNELS_PER_CLASS + part
    }

    pub fn paf_channel_pair(class_index: usize, edge: usize) -> (usize, usize) {
        let x = class_index * PAF_CHANNELS_PER_CLASS + 2 * edge;
        (x, x + 1)
    }

    pub fn heatmap_view(&self, channel: usize) -> ChannelView<'_> {
        assert!(channel < self.heatmap_channels());
        ChannelView {
            data: &self.heatmaps,
            channels: self.heatmap_channels(),
            channel,
            height: self.grid_height,
            width: self.grid_width,
        }
    }

    pub fn background_view(&self) -> ChannelView<'_> {
        self.heatmap_view(self.heatmap_channels() - 1)
    }

    pub fn paf_view(&self, channel: usize) -> ChannelView<'_> {
        assert!(channel < self.paf_channels());
        ChannelView {
            data: &self.pafs,
            channels: self.paf_channels(),
            channel,
            height: self.grid_height,
            width: self.grid_width,
        }
    }

    /// Pixel coordinates of a cell center.
    pub fn cell_center(&self, i: usize, j: usize) -> Vector2<f64> {
        cell_center(i, j, self.stride)
    }

    /// Rewrites the background channel as `1 − max` over keypoint channels.
    pub fn recompute_background(&mut self) {
        let hc = self.heatmap_channels();
        for cell in self.heatmaps.chunks_exact_mut(hc) {
            let m = cell[..hc - 1].iter().copied().fold(0.0f32, f32::max);
            cell[hc - 1] = 1.0 - m;
        }
    }
}

#[inline]
pub fn cell_center(i: usize, j: usize, stride: usize) -> Vector2<f64> {
    let s = stride as f64;
    Vector2::new((j as f64 + 0.5) * s, (i as f64 + 0.5) * s)
}

/// One ground-truth object instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Instance {
    pub class_id: u32,
    pub pose: Pose,
}

/// Ground truth for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneAnnotation {
    pub camera: CameraIntrinsics,
    pub instances: Vec<Instance>,
}

impl SceneAnnotation {
    pub fn check_classes(&self, models: &ModelRegistry) -> Result<(), LabelError> {
        for inst in &self.instances {
            models.get(inst.class_id).map_err(|_| LabelError::UnknownClass(inst.class_id))?;
        }
        Ok(())
    }
}

/// Projected keypoints of one instance; `None` marks keypoints behind the
/// camera or beyond the off-image margin.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedInstance {
    pub class_id: u32,
    pub pose: Pose,
    pub points: [Option<Vector2<f64>>; NUM_KEYPOINTS],
}

/// Projects every instance's keypoints. Symmetric classes are
/// canonicalized first when `canonicalize` is set. The result is sorted
/// into a canonical order so rendering does not depend on instance order.
pub fn project_instances(
    scene: &SceneAnnotation,
    models: &ModelRegistry,
    params: &LabelParams,
    canonicalize: bool,
) -> Result<Vec<ProjectedInstance>, LabelError> {
    scene.check_classes(models)?;
    let margin = params.margin_px();
    let mut out: Vec<ProjectedInstance> = scene
        .instances
        .iter()
        .map(|inst| {
            let model = models.get(inst.class_id).expect("checked above");
            let pose = if canonicalize { canonicalize_gt_pose(&inst.pose, model.symmetries()) } else { inst.pose };
            let mut points = [None; NUM_KEYPOINTS];
            for (slot, kp) in points.iter_mut().zip(model.keypoints()) {
                *slot = project(kp, &pose, &scene.camera).filter(|uv| scene.camera.contains(uv, margin));
            }
            ProjectedInstance { class_id: inst.class_id, pose, points }
        })
        .collect();
    out.sort_by(compare_instances);
    Ok(out)
}

fn compare_instances(a: &ProjectedInstance, b: &ProjectedInstance) -> Ordering {
    a.class_id.cmp(&b.class_id).then_with(|| {
        let ka = a.pose.rotation_row_major().into_iter().chain(a.pose.translation_array());
        let kb = b.pose.rotation_row_major().into_iter().chain(b.pose.translation_array());
        ka.zip(kb).map(|(x, y)| x.total_cmp(&y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
    })
}

/// Writes `max(current, amplitude·exp(−‖x_g − center‖² / 2σ²))` into one
/// heatmap channel over the full grid.
pub fn splat_gaussian(tensor: &mut LabelTensor, channel: usize, center: &Vector2<f64>, sigma: f64, amplitude: f64) {
    let (h, w, s) = (tensor.grid_height, tensor.grid_width, tensor.stride);
    let hc = tensor.heatmap_channels();
    let inv = 1.0 / (2.0 * sigma * sigma);
    for i in 0..h {
        for j in 0..w {
            let d = cell_center(i, j, s) - center;
            let v = (amplitude * (-d.norm_squared() * inv).exp()) as f32;
            let slot = &mut tensor.heatmaps[(i * w + j) * hc + channel];
            if v > *slot {
                *slot = v;
            }
        }
    }
}

/// Renders keypoint blobs for already projected instances and refreshes
/// the background channel.
pub fn render_heatmaps_into(tensor: &mut LabelTensor, instances: &[ProjectedInstance], sigma: f64) {
    for inst in instances {
        let Some(ci) = tensor.class_index(inst.class_id) else { continue };
        for (k, p) in inst.points.iter().enumerate() {
            if let Some(p) = p {
                splat_gaussian(tensor, LabelTensor::keypoint_channel(ci, k), p, sigma, 1.0);
            }
        }
    }
    tensor.recompute_background();
}

/// Renders PAF bands: every cell whose center lies in the oriented
/// rectangle `along ∈ [0, L]`, `|perp| ≤ half_width` receives the unit
/// edge direction; overlapping instances of the same edge are averaged.
pub fn render_pafs_into(
    tensor: &mut LabelTensor,
    instances: &[ProjectedInstance],
    models: &ModelRegistry,
    half_width: f64,
) {
    let (h, w, s) = (tensor.grid_height, tensor.grid_width, tensor.stride);
    let pc = tensor.paf_channels();
    let n_edges_total = pc / 2;
    let mut sums = vec![Vector2::<f64>::zeros(); h * w * n_edges_total];
    let mut counts = vec![0u32; h * w * n_edges_total];
    let sf = s as f64;

    for inst in instances {
        let Some(ci) = tensor.class_index(inst.class_id) else { continue };
        let Ok(model) = models.get(inst.class_id) else { continue };
        for (e, &(a, b)) in model.paf_edges().iter().enumerate() {
            let (Some(pa), Some(pb)) = (inst.points[a], inst.points[b]) else { continue };
            let Some(u) = edge_direction(&pa, &pb) else { continue };
            let len = (pb - pa).norm();
            let lo = pa.inf(&pb).add_scalar(-half_width);
            let hi = pa.sup(&pb).add_scalar(half_width);
            let (i0, i1) = cell_range(lo.y, hi.y, sf, h);
            let (j0, j1) = cell_range(lo.x, hi.x, sf, w);
            let slot_base = ci * NUM_EDGES + e;
            for i in i0..i1 {
                for j in j0..j1 {
                    let d = cell_center(i, j, s) - pa;
                    let along = d.dot(&u);
                    let perp = u.x * d.y - u.y * d.x;
                    if (0.0..=len).contains(&along) && perp.abs() <= half_width {
                        let idx = (i * w + j) * n_edges_total + slot_base;
                        sums[idx] += u;
                        counts[idx] += 1;
                    }
                }
            }
        }
    }
    for (idx, (sum, &n)) in sums.iter().zip(&counts).enumerate() {
        let cell = idx / n_edges_total;
        let slot = idx % n_edges_total;
        let base = cell * pc + 2 * slot;
        if n > 0 {
            let v = sum / n as f64;
            tensor.pafs[base] = v.x as f32;
            tensor.pafs[base + 1] = v.y as f32;
        } else {
            tensor.pafs[base] = 0.0;
            tensor.pafs[base + 1] = 0.0;
        }
    }
}

/// Unit direction from `pa` to `pb`; `None` when they are less than a pixel apart.
pub fn edge_direction(pa: &Vector2<f64>, pb: &Vector2<f64>) -> Option<Vector2<f64>> {
    let d = pb - pa;
    let len = d.norm();
    (len >= 1.0).then(|| d / len)
}

// grid cells whose centers may fall in the pixel interval [lo, hi]
fn cell_range(lo: f64, hi: f64, stride: f64, n: usize) -> (usize, usize) {
    let a = ((lo / stride - 0.5).floor().max(0.0)) as usize;
    let b = ((hi / stride - 0.5).ceil() + 1.0).clamp(0.0, n as f64) as usize;
    (a.min(n), b)
}

fn empty_for(scene: &SceneAnnotation, models: &ModelRegistry, params: &LabelParams) -> LabelTensor {
    LabelTensor::empty(&models.class_ids(), scene.camera.height, scene.camera.width, params.stride)
}

/// Heatmap stack for a scene (PAF stack left at zero).
pub fn render_heatmaps(scene: &SceneAnnotation, models: &ModelRegistry, params: &LabelParams) -> Result<LabelTensor, LabelError> {
    params.validate()?;
    let inst = project_instances(scene, models, params, false)?;
    let mut t = empty_for(scene, models, params);
    render_heatmaps_into(&mut t, &inst, params.sigma);
    Ok(t)
}

/// PAF stack for a scene (heatmaps left empty).
pub fn render_pafs(scene: &SceneAnnotation, models: &ModelRegistry, params: &LabelParams) -> Result<LabelTensor, LabelError> {
    params.validate()?;
    let inst = project_instances(scene, models, params, false)?;
    let mut t = empty_for(scene, models, params);
    render_pafs_into(&mut t, &inst, models, params.paf_half_width);
    Ok(t)
}

/// Full training label: symmetric poses canonicalized, then heatmaps and PAFs.
pub fn synthesize_labels(scene: &SceneAnnotation, models: &ModelRegistry, params: &LabelParams) -> Result<LabelTensor, LabelError> {
    params.validate()?;
    let inst = project_instances(scene, models, params, true)?;
    let mut t = empty_for(scene, models, params);
    render_heatmaps_into(&mut t, &inst, params.sigma);
    render_pafs_into(&mut t, &inst, models, params.paf_half_width);
    Ok(t)
}

/// Ground-truth 2D keypoints after canonicalization, per instance in scene order.
pub fn ground_truth_keypoints(
    scene: &SceneAnnotation,
    models: &ModelRegistry,
) -> Result<Vec<[Option<Vector2<f64>>; NUM_KEYPOINTS]>, LabelError> {
    scene.check_classes(models)?;
    Ok(scene
        .instances
        .iter()
        .map(|inst| {
            let model = models.get(inst.class_id).expect("checked");
            let pose = canonicalize_gt_pose(&inst.pose, model.symmetries());
            let mut pts = [None; NUM_KEYPOINTS];
            for (slot, kp) in pts.iter_mut().zip(model.keypoints()) {
                *slot = project(kp, &pose, &scene.camera);
            }
            pts
        })
        .collect())
}

/// Object-frame point expressed in the camera frame.
pub fn camera_point(p: &Vector3<f64>, pose: &Pose) -> Vector3<f64> {
    pose.transform_point(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_registry::{ObjectModel, SymmetrySet, CUBOID_EDGES};
    use crate::fixtures::{box_model, random_pose_facing};
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn camera() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn registry_with(model: ObjectModel) -> ModelRegistry {
        let mut r = ModelRegistry::new();
        r.insert(model).unwrap();
        r
    }

    fn manual_instance(class_id: u32, pts: [Option<Vector2<f64>>; 8]) -> ProjectedInstance {
        ProjectedInstance { class_id, pose: Pose::identity(), points: pts }
    }

    #[test]
    fn empty_scene_has_background_one() {
        let reg = registry_with(box_model(1, 0.05, 0.04, 0.06));
        let scene = SceneAnnotation { camera: camera(), instances: vec![] };
        let t = synthesize_labels(&scene, &reg, &LabelParams::default()).unwrap();
        assert_eq!((t.grid_height(), t.grid_width()), (60, 80));
        assert_eq!(t.heatmap_channels(), 9);
        assert_eq!(t.paf_channels(), 24);
        for c in 0..8 {
            assert!(t.heatmap_view(c).iter_cells().all(|(_, _, v)| v == 0.0));
        }
        assert!(t.background_view().iter_cells().all(|(_, _, v)| v == 1.0));
        assert!(t.pafs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_peak_and_one_sigma_value() {
        let mut t = LabelTensor::empty(&[1], 480, 640, 8);
        let center = cell_center(10, 20, 8);
        let mut pts = [None; 8];
        pts[0] = Some(center);
        render_heatmaps_into(&mut t, &[manual_instance(1, pts)], 16.0);
        let v = t.heatmap_view(0);
        assert_eq!(v.get(10, 20), 1.0);
        // neighbor two cells away is exactly σ = 16 px from the center
        assert!((v.get(10, 22) as f64 - (-0.5f64).exp()).abs() < 1e-7);
        assert_eq!(t.background_view().get(10, 20), 0.0);
    }

    #[test]
    fn overlapping_blobs_take_cellwise_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut t = LabelTensor::empty(&[1], 120, 160, 4);
        let a = Vector2::new(rng.random_range(40.0..80.0), rng.random_range(30.0..60.0));
        let b = a + Vector2::new(9.3, -4.1);
        let mut pa = [None; 8];
        let mut pb = [None; 8];
        pa[3] = Some(a);
        pb[3] = Some(b);
        let sigma = 6.0;
        render_heatmaps_into(&mut t, &[manual_instance(1, pa), manual_instance(1, pb)], sigma);
        // naive per-cell oracle
        for i in 0..30 {
            for j in 0..40 {
                let x = Vector2::new((j as f64 + 0.5) * 4.0, (i as f64 + 0.5) * 4.0);
                let g = |c: Vector2<f64>| (-(x - c).norm_squared() / (2.0 * sigma * sigma)).exp();
                let want = g(a).max(g(b)) as f32;
                assert_eq!(t.heatmap_view(3).get(i, j), want);
            }
        }
    }

    #[test]
    fn horizontal_paf_band() {
        let mesh_model = box_model(1, 0.05, 0.04, 0.06);
        let reg = registry_with(mesh_model);
        let mut t = LabelTensor::empty(&[1], 100, 100, 1);
        let mut pts = [None; 8];
        pts[0] = Some(Vector2::new(10.0, 40.0));
        pts[1] = Some(Vector2::new(50.0, 40.0));
        render_pafs_into(&mut t, &[manual_instance(1, pts)], &reg, 4.0);
        let (xc, yc) = LabelTensor::paf_channel_pair(0, 0);
        for i in 0..100 {
            for j in 0..100 {
                let (u, v) = (j as f64 + 0.5, i as f64 + 0.5);
                let inside = (v - 40.0).abs() <= 4.0 && (10.0..=50.0).contains(&u);
                let want = if inside { 1.0 } else { 0.0 };
                assert_eq!(t.paf_view(xc).get(i, j), want, "cell ({i},{j})");
                assert_eq!(t.paf_view(yc).get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn antiparallel_overlap_averages_to_zero() {
        let reg = registry_with(box_model(1, 0.05, 0.04, 0.06));
        let mut t = LabelTensor::empty(&[1], 100, 100, 1);
        let mut a = [None; 8];
        a[0] = Some(Vector2::new(10.0, 40.0));
        a[1] = Some(Vector2::new(50.0, 40.0));
        let mut b = [None; 8];
        b[0] = Some(Vector2::new(50.0, 40.0));
        b[1] = Some(Vector2::new(10.0, 40.0));
        render_pafs_into(&mut t, &[manual_instance(1, a), manual_instance(1, b)], &reg, 4.0);
        let (xc, _) = LabelTensor::paf_channel_pair(0, 0);
        assert_eq!(t.paf_view(xc).get(40, 30), 0.0);
        let mut c = [None; 8];
        c[0] = Some(Vector2::new(30.0, 40.0));
        c[1] = Some(Vector2::new(30.0, 60.0));
        render_pafs_into(&mut t, &[manual_instance(1, a), manual_instance(1, c)], &reg, 4.0);
        // edge 0 of a and edge 0 of c overlap near (30, 40): average of (1,0) and (0,1)
        let (xc, yc) = LabelTensor::paf_channel_pair(0, 0);
        assert_eq!(t.paf_view(xc).get(41, 30), 0.5);
        assert_eq!(t.paf_view(yc).get(41, 30), 0.5);
    }

    #[test]
    fn diagonal_paf_matches_point_in_rectangle_oracle() {
        let reg = registry_with(box_model(1, 0.05, 0.04, 0.06));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let pa = Vector2::new(rng.random_range(0.0..320.0), rng.random_range(0.0..240.0));
            let pb = Vector2::new(rng.random_range(0.0..320.0), rng.random_range(0.0..240.0));
            let mut pts = [None; 8];
            pts[2] = Some(pa);
            pts[6] = Some(pb);
            let mut t = LabelTensor::empty(&[1], 240, 320, 8);
            render_pafs_into(&mut t, &[manual_instance(1, pts)], &reg, 12.0);
            let (xc, yc) = LabelTensor::paf_channel_pair(0, 10); // edge (2, 6)
            let len = (pb - pa).norm();
            let u = (pb - pa) / len;
            for i in 0..30 {
                for j in 0..40 {
                    let c = Vector2::new((j as f64 + 0.5) * 8.0, (i as f64 + 0.5) * 8.0);
                    // analytic rectangle test via projection on the segment frame
                    let t_along = (c - pa).dot(&(pb - pa)) / (len * len);
                    let foot = pa + (pb - pa) * t_along;
                    let inside = (0.0..=1.0).contains(&t_along) && (c - foot).norm() <= 12.0 + 1e-9;
                    let (vx, vy) = (t.paf_view(xc).get(i, j), t.paf_view(yc).get(i, j));
                    if inside {
                        assert!((vx - u.x as f32).abs() < 1e-6 && (vy - u.y as f32).abs() < 1e-6);
                    } else {
                        assert_eq!((vx, vy), (0.0, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn sub_pixel_edges_are_skipped() {
        let reg = registry_with(box_model(1, 0.05, 0.04, 0.06));
        let mut t = LabelTensor::empty(&[1], 100, 100, 1);
        let mut pts = [None; 8];
        pts[0] = Some(Vector2::new(10.0, 40.0));
        pts[1] = Some(Vector2::new(10.5, 40.3));
        render_pafs_into(&mut t, &[manual_instance(1, pts)], &reg, 4.0);
        assert!(t.pafs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn labels_invariant_to_order_and_symmetry() {
        let flip = Pose::from_parts_unchecked(Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0)), Vector3::zeros());
        let base = box_model(1, 0.05, 0.04, 0.06);
        let sym_model = ObjectModel::new(
            1,
            "sym",
            base.mesh().clone(),
            *base.keypoints(),
            CUBOID_EDGES,
            SymmetrySet::discrete(vec![flip]),
            None,
        )
        .unwrap();
        let mut reg = registry_with(sym_model);
        reg.insert(box_model(2, 0.03, 0.03, 0.08)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let params = LabelParams::default();
        for _ in 0..10 {
            let p1 = random_pose_facing(&mut rng, &camera(), 0.6);
            let p2 = random_pose_facing(&mut rng, &camera(), 0.8);
            let p3 = random_pose_facing(&mut rng, &camera(), 0.7);
            let scene = |a: Pose, order: bool| SceneAnnotation {
                camera: camera(),
                instances: if order {
                    vec![Instance { class_id: 1, pose: a }, Instance { class_id: 2, pose: p2 }, Instance { class_id: 1, pose: p3 }]
                } else {
                    vec![Instance { class_id: 1, pose: p3 }, Instance { class_id: 1, pose: a }, Instance { class_id: 2, pose: p2 }]
                },
            };
            let a = synthesize_labels(&scene(p1, true), &reg, &params).unwrap();
            let b = synthesize_labels(&scene(p1, false), &reg, &params).unwrap();
            let c = synthesize_labels(&scene(p1.compose(&flip), true), &reg, &params).unwrap();
            assert_eq!(a, b);
            assert_eq!(a, c);
            let magnitude_ok = a.pafs().chunks_exact(2).all(|v| (v[0] * v[0] + v[1] * v[1]).sqrt() <= 1.0 + 1e-6);
            assert!(magnitude_ok);
            assert!(a.heatmaps().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn isolated_keypoint_argmax_is_nearest_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..200 {
            let p = Vector2::new(rng.random_range(20.0..620.0), rng.random_range(20.0..460.0));
            let mut t = LabelTensor::empty(&[1], 480, 640, 8);
            let mut pts = [None; 8];
            pts[5] = Some(p);
            render_heatmaps_into(&mut t, &[manual_instance(1, pts)], 16.0);
            let (bi, bj, _) = t
                .heatmap_view(5)
                .iter_cells()
                .fold((0, 0, -1.0f32), |acc, (i, j, v)| if v > acc.2 { (i, j, v) } else { acc });
            let (ni, nj) = ((p.y / 8.0).floor() as usize, (p.x / 8.0).floor() as usize);
            assert_eq!((bi, bj), (ni, nj), "{p:?}");
        }
    }

    #[test]
    fn far_off_image_keypoints_are_dropped() {
        let reg = registry_with(box_model(1, 0.05, 0.04, 0.06));
        // object 3 m to the side at 1 m depth: far beyond the 160 px margin
        let pose = Pose::from_parts_unchecked(Matrix3::identity(), Vector3::new(3.0, 0.0, 1.0));
        let scene = SceneAnnotation { camera: camera(), instances: vec![Instance { class_id: 1, pose }] };
        let t = render_heatmaps(&scene, &reg, &LabelParams::default()).unwrap();
        assert!(t.heatmaps().chunks_exact(9).all(|c| c[..8].iter().all(|&v| v == 0.0)));
        let unknown = SceneAnnotation { camera: camera(), instances: vec![Instance { class_id: 7, pose }] };
        assert_eq!(synthesize_labels(&unknown, &reg, &LabelParams::default()), Err(LabelError::UnknownClass(7)));
    }
}
