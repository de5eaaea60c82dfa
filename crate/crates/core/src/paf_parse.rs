//! Keypoint candidates from heatmaps and their grouping into object
//! instances with part affinity fields.

use std::collections::BTreeMap;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label_synth::{ChannelView, LabelTensor};
use crate::model_registry::{ModelRegistry, PafEdge, NUM_EDGES, NUM_KEYPOINTS};

/// Fewest parts a skeleton needs for a unique PnP solution.
pub const MIN_PARTS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("segment endpoints are {0:.3} px apart; at least 1 px required")]
    DegenerateSegment(f64),
    #[error("tensor class {0} is not in the model registry")]
    UnknownClass(u32),
    #[error("skeleton has {0} parts; at least 4 are required")]
    TooFewParts(usize),
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
    #[error("invalid parse configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// Local maxima grouped with part affinity fields.
    #[default]
    Paf,
    /// One global maximum per heatmap channel, no grouping.
    Heatmap,
}

impl std::str::FromStr for ParseMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paf" => Ok(ParseMode::Paf),
            "heatmap" | "heatmaps" => Ok(ParseMode::Heatmap),
            other => Err(format!("unknown parse mode '{other}' (expected paf or heatmap)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParseConfig {
    pub mode: ParseMode,
    pub detection_threshold: f64,
    pub nms_radius: usize,
    pub n_samples: usize,
    /// Minimum mean alignment for an edge match.
    pub paf_threshold: f64,
    /// Per-sample alignment counted as valid.
    pub align_threshold: f64,
    pub min_valid_fraction: f64,
    /// Segment sampling starts and ends this many grid cells inside the
    /// endpoints (capped at a quarter of the segment length).
    pub endpoint_inset_cells: f64,
    /// Keep only the best-scoring skeletons per class.
    pub max_instances_per_class: Option<usize>,
}

impl Default for ParseConfig {
    fn default() -> Self {
        Self {
            mode: ParseMode::Paf,
            detection_threshold: 0.30,
            nms_radius: 1,
            n_samples: 10,
            paf_threshold: 0.20,
            align_threshold: 0.05,
            min_valid_fraction: 0.8,
            endpoint_inset_cells: 1.5,
            max_instances_per_class: None,
        }
    }
}

impl ParseConfig {
    pub fn validate(&self) -> Result<(), ParseError> {
        let bad = |m: String| Err(ParseError::InvalidConfig(m));
        if !(self.detection_threshold > 0.0 && self.detection_threshold < 1.0) {
            return bad(format!("detection_threshold must be in (0, 1), got {}", self.detection_threshold));
        }
        if self.n_samples < 2 {
            return bad(format!("n_samples must be at least 2, got {}", self.n_samples));
        }
        if !(0.0..=1.0).contains(&self.min_valid_fraction) {
            return bad(format!("min_valid_fraction must be in [0, 1], got {}", self.min_valid_fraction));
        }
        if !(self.endpoint_inset_cells >= 0.0) {
            return bad("endpoint_inset_cells must be non-negative".into());
        }
        if self.max_instances_per_class == Some(0) {
            return bad("max_instances_per_class must be positive".into());
        }
        Ok(())
    }
}

/// A heatmap peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartCandidate {
    pub class_id: u32,
    pub part_index: usize,
    /// Full-resolution pixel coordinates.
    pub position: Vector2<f64>,
    pub score: f64,
}

/// Scored candidate pair for one edge. Indices refer to the candidate
/// lists of the edge's two parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeMatch {
    pub edge_index: usize,
    pub candidate_a: usize,
    pub candidate_b: usize,
    pub paf_score: f64,
    pub valid_fraction: f64,
    pub accepted: bool,
}

/// Grouped detections of one object instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSkeleton {
    class_id: u32,
    parts: BTreeMap<usize, PartCandidate>,
    instance_score: f64,
}

impl InstanceSkeleton {
    /// Fails unless there are at least four parts, all of `class_id` with
    /// part indices matching their keys.
    pub fn new(class_id: u32, parts: BTreeMap<usize, PartCandidate>, instance_score: f64) -> Result<Self, ParseError> {
        if parts.len() < MIN_PARTS {
            return Err(ParseError::TooFewParts(parts.len()));
        }
        for (&k, c) in &parts {
            if k >= NUM_KEYPOINTS || c.part_index != k || c.class_id != class_id {
                return Err(ParseError::InvalidSkeleton(format!("part slot {k} holds {:?}", c)));
            }
            if !(c.position.iter().all(|v| v.is_finite()) && c.score.is_finite()) {
                return Err(ParseError::InvalidSkeleton(format!("part {k} has non-finite values")));
            }
        }
        if !instance_score.is_finite() {
            return Err(ParseError::InvalidSkeleton("instance score is not finite".into()));
        }
        Ok(Self { class_id, parts, instance_score })
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn parts(&self) -> &BTreeMap<usize, PartCandidate> {
        &self.parts
    }

    pub fn instance_score(&self) -> f64 {
        self.instance_score
    }
}

/// Local maxima of one heatmap channel, strongest first.
///
/// A cell is a peak when its value is at least `threshold` and no cell
/// within `nms_radius` (Chebyshev) is larger; on plateaus the cell with
/// the lowest linear index wins. Positions are refined per axis by fitting
/// a parabola through the log-values of the 3-cell neighborhood (exact for
/// Gaussian blobs), clamped to half a cell.
pub fn find_peaks(
    channel: &ChannelView<'_>,
    stride: usize,
    threshold: f64,
    nms_radius: usize,
    class_id: u32,
    part_index: usize,
) -> Vec<PartCandidate> {
    let (h, w) = (channel.height, channel.width);
    let mut peaks: Vec<(usize, PartCandidate)> = Vec::new();
    for i in 0..h {
        for j in 0..w {
            let v = channel.get(i, j);
            if (v as f64) < threshold || !is_local_max(channel, i, j, nms_radius) {
                continue;
            }
            peaks.push((i * w + j, candidate_at(channel, i, j, stride, class_id, part_index)));
        }
    }
    peaks.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)));
    peaks.into_iter().map(|(_, c)| c).collect()
}

fn is_local_max(channel: &ChannelView<'_>, i: usize, j: usize, r: usize) -> bool {
    let v = channel.get(i, j);
    let own = i * channel.width + j;
    for ii in i.saturating_sub(r)..=(i + r).min(channel.height - 1) {
        for jj in j.saturating_sub(r)..=(j + r).min(channel.width - 1) {
            let n = channel.get(ii, jj);
            if n > v || (n == v && ii * channel.width + jj < own) {
                return false;
            }
        }
    }
    true
}

fn candidate_at(channel: &ChannelView<'_>, i: usize, j: usize, stride: usize, class_id: u32, part_index: usize) -> PartCandidate {
    let c = channel.get(i, j) as f64;
    let dx = if j > 0 && j + 1 < channel.width {
        subcell_offset(channel.get(i, j - 1) as f64, c, channel.get(i, j + 1) as f64)
    } else {
        0.0
    };
    let dy = if i > 0 && i + 1 < channel.height {
        subcell_offset(channel.get(i - 1, j) as f64, c, channel.get(i + 1, j) as f64)
    } else {
        0.0
    };
    let s = stride as f64;
    PartCandidate {
        class_id,
        part_index,
        position: Vector2::new((j as f64 + 0.5 + dx) * s, (i as f64 + 0.5 + dy) * s),
        score: c,
    }
}

/// Vertex offset of the parabola through `(−1, l), (0, c), (1, r)`, fitted
/// to log-values when all are positive.
pub fn subcell_offset(l: f64, c: f64, r: f64) -> f64 {
    let (l, c, r) = if l > 0.0 && c > 0.0 && r > 0.0 { (l.ln(), c.ln(), r.ln()) } else { (l, c, r) };
    let denom = l - 2.0 * c + r;
    if denom < 0.0 {
        (0.5 * (l - r) / denom).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

/// Bilinear sample of a channel at pixel position `p`; cells outside the
/// grid read as zero.
pub fn bilinear(channel: &ChannelView<'_>, stride: usize, p: &Vector2<f64>) -> f64 {
    let s = stride as f64;
    let gx = p.x / s - 0.5;
    let gy = p.y / s - 0.5;
    let (j0, i0) = (gx.floor(), gy.floor());
    let (fx, fy) = (gx - j0, gy - i0);
    let at = |i: f64, j: f64| -> f64 {
        if i < 0.0 || j < 0.0 || i >= channel.height as f64 || j >= channel.width as f64 {
            0.0
        } else {
            channel.get(i as usize, j as usize) as f64
        }
    };
    (1.0 - fy) * ((1.0 - fx) * at(i0, j0) + fx * at(i0, j0 + 1.0))
        + fy * ((1.0 - fx) * at(i0 + 1.0, j0) + fx * at(i0 + 1.0, j0 + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeScore {
    pub mean: f64,
    pub valid_fraction: f64,
}

/// Mean alignment of the PAF with the direction `pa → pb`.
///
/// `n_samples` points are spaced uniformly, endpoints included, on the
/// segment shortened by `inset` pixels at both ends (at most a quarter of
/// its length each), so the bilinear stencil stays inside the rendered band.
#[allow(clippy::too_many_arguments)]
pub fn paf_edge_score(
    paf_x: &ChannelView<'_>,
    paf_y: &ChannelView<'_>,
    stride: usize,
    pa: &Vector2<f64>,
    pb: &Vector2<f64>,
    n_samples: usize,
    align_threshold: f64,
    inset: f64,
) -> Result<EdgeScore, ParseError> {
    let d = pb - pa;
    let len = d.norm();
    if !(len >= 1.0) {
        return Err(ParseError::DegenerateSegment(len));
    }
    let u = d / len;
    let delta = inset.min(0.25 * len);
    let (start, span) = (pa + u * delta, len - 2.0 * delta);
    let n = n_samples.max(2);
    let mut sum = 0.0;
    let mut valid = 0usize;
    for k in 0..n {
        let p = start + u * (span * k as f64 / (n - 1) as f64);
        let dot = bilinear(paf_x, stride, &p) * u.x + bilinear(paf_y, stride, &p) * u.y;
        sum += dot;
        if dot >= align_threshold {
            valid += 1;
        }
    }
    Ok(EdgeScore { mean: sum / n as f64, valid_fraction: valid as f64 / n as f64 })
}

/// Scores every candidate pair for one edge and greedily accepts the best
/// eligible pairs, each candidate at most once. All scored pairs are
/// returned; `accepted` marks the chosen ones.
pub fn match_edge(
    edge_index: usize,
    candidates_a: &[PartCandidate],
    candidates_b: &[PartCandidate],
    paf_x: &ChannelView<'_>,
    paf_y: &ChannelView<'_>,
    stride: usize,
    config: &ParseConfig,
) -> Vec<EdgeMatch> {
    let inset = config.endpoint_inset_cells * stride as f64;
    let mut out = Vec::with_capacity(candidates_a.len() * candidates_b.len());
    for (ia, ca) in candidates_a.iter().enumerate() {
        for (ib, cb) in candidates_b.iter().enumerate() {
            let score = paf_edge_score(
                paf_x,
                paf_y,
                stride,
                &ca.position,
                &cb.position,
                config.n_samples,
                config.align_threshold,
                inset,
            )
            .unwrap_or(EdgeScore { mean: 0.0, valid_fraction: 0.0 });
            out.push(EdgeMatch {
                edge_index,
                candidate_a: ia,
                candidate_b: ib,
                paf_score: score.mean,
                valid_fraction: score.valid_fraction,
                accepted: false,
            });
        }
    }
    let mut order: Vec<usize> = (0..out.len())
        .filter(|&k| out[k].paf_score >= config.paf_threshold && out[k].valid_fraction >= config.min_valid_fraction)
        .collect();
    order.sort_by(|&x, &y| out[y].paf_score.total_cmp(&out[x].paf_score).then(x.cmp(&y)));
    let mut used_a = vec![false; candidates_a.len()];
    let mut used_b = vec![false; candidates_b.len()];
    for k in order {
        let m = &mut out[k];
        if !used_a[m.candidate_a] && !used_b[m.candidate_b] {
            used_a[m.candidate_a] = true;
            used_b[m.candidate_b] = true;
            m.accepted = true;
        }
    }
    out
}

struct UnionFind {
    parent: Vec<usize>,
    mask: Vec<u16>,
    edge_score: Vec<f64>,
}

impl UnionFind {
    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

/// Merges accepted matches into instances.
///
/// Matches are applied strongest first (ties by edge index, then candidate
/// indices). A match joining two groups that already both hold some part
/// is rejected. Groups with fewer than four parts are dropped. Output is
/// sorted by descending instance score.
pub fn assemble_instances(
    class_id: u32,
    candidates: &[Vec<PartCandidate>; NUM_KEYPOINTS],
    matches: &[Vec<EdgeMatch>],
    edges: &[PafEdge; NUM_EDGES],
) -> Vec<InstanceSkeleton> {
    let mut offsets = [0usize; NUM_KEYPOINTS + 1];
    for k in 0..NUM_KEYPOINTS {
        offsets[k + 1] = offsets[k] + candidates[k].len();
    }
    let n = offsets[NUM_KEYPOINTS];
    let mut uf = UnionFind {
        parent: (0..n).collect(),
        mask: (0..n)
            .map(|node| {
                let part = offsets.partition_point(|&o| o <= node) - 1;
                1u16 << part
            })
            .collect(),
        edge_score: vec![0.0; n],
    };
    let mut accepted: Vec<&EdgeMatch> = matches.iter().flatten().filter(|m| m.accepted).collect();
    accepted.sort_by(|x, y| {
        y.paf_score
            .total_cmp(&x.paf_score)
            .then(x.edge_index.cmp(&y.edge_index))
            .then(x.candidate_a.cmp(&y.candidate_a))
            .then(x.candidate_b.cmp(&y.candidate_b))
    });
    for m in accepted {
        let (pa, pb) = edges[m.edge_index];
        let (na, nb) = (offsets[pa] + m.candidate_a, offsets[pb] + m.candidate_b);
        let (ra, rb) = (uf.find(na), uf.find(nb));
        if ra == rb {
            uf.edge_score[ra] += m.paf_score;
            continue;
        }
        if uf.mask[ra] & uf.mask[rb] != 0 {
            continue;
        }
        uf.parent[rb] = ra;
        uf.mask[ra] |= uf.mask[rb];
        uf.edge_score[ra] += uf.edge_score[rb] + m.paf_score;
    }

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for node in 0..n {
        let r = uf.find(node);
        groups.entry(r).or_default().push(node);
    }
    let mut out: Vec<(usize, InstanceSkeleton)> = Vec::new();
    for (root, nodes) in groups {
        if nodes.len() < MIN_PARTS {
            continue;
        }
        let mut parts = BTreeMap::new();
        let mut score = uf.edge_score[root];
        for &node in &nodes {
            let part = offsets.partition_point(|&o| o <= node) - 1;
            let c = candidates[part][node - offsets[part]];
            score += c.score;
            parts.insert(part, c);
        }
        if let Ok(s) = InstanceSkeleton::new(class_id, parts, score) {
            out.push((nodes[0], s));
        }
    }
    out.sort_by(|a, b| b.1.instance_score.total_cmp(&a.1.instance_score).then(a.0.cmp(&b.0)));
    out.into_iter().map(|(_, s)| s).collect()
}

fn check_classes(tensor: &LabelTensor, models: &ModelRegistry) -> Result<(), ParseError> {
    for &c in tensor.class_ids() {
        models.get(c).map_err(|_| ParseError::UnknownClass(c))?;
    }
    Ok(())
}

/// Heatmap-only baseline: per class, the global maximum of each keypoint
/// channel (ties to the lowest cell index) if it reaches the detection
/// threshold; one skeleton per class when at least four parts remain.
pub fn parse_heatmaps_only(tensor: &LabelTensor, models: &ModelRegistry, config: &ParseConfig) -> Result<Vec<InstanceSkeleton>, ParseError> {
    config.validate()?;
    check_classes(tensor, models)?;
    let mut out = Vec::new();
    for (ci, &class_id) in tensor.class_ids().iter().enumerate() {
        let mut parts = BTreeMap::new();
        for k in 0..NUM_KEYPOINTS {
            let view = tensor.heatmap_view(LabelTensor::keypoint_channel(ci, k));
            let mut best: Option<(usize, usize, f32)> = None;
            for (i, j, v) in view.iter_cells() {
                if best.is_none_or(|b| v > b.2) {
                    best = Some((i, j, v));
                }
            }
            if let Some((i, j, v)) = best {
                if v as f64 >= config.detection_threshold {
                    parts.insert(k, candidate_at(&view, i, j, tensor.stride(), class_id, k));
                }
            }
        }
        let score = parts.values().map(|c| c.score).sum();
        if let Ok(s) = InstanceSkeleton::new(class_id, parts, score) {
            out.push(s);
        }
    }
    Ok(out)
}

/// Candidates, scored matches and assembled skeletons for one class.
#[derive(Debug, Clone)]
pub struct ClassParse {
    pub class_id: u32,
    pub candidates: [Vec<PartCandidate>; NUM_KEYPOINTS],
    pub matches: Vec<Vec<EdgeMatch>>,
    pub skeletons: Vec<InstanceSkeleton>,
}

/// Full PAF grouping for one class.
pub fn parse_class(tensor: &LabelTensor, class_index: usize, edges: &[PafEdge; NUM_EDGES], config: &ParseConfig) -> ClassParse {
    let class_id = tensor.class_ids()[class_index];
    let stride = tensor.stride();
    let candidates: [Vec<PartCandidate>; NUM_KEYPOINTS] = std::array::from_fn(|k| {
        let view = tensor.heatmap_view(LabelTensor::keypoint_channel(class_index, k));
        find_peaks(&view, stride, config.detection_threshold, config.nms_radius, class_id, k)
    });
    let matches: Vec<Vec<EdgeMatch>> = edges
        .iter()
        .enumerate()
        .map(|(e, &(a, b))| {
            let (xc, yc) = LabelTensor::paf_channel_pair(class_index, e);
            match_edge(e, &candidates[a], &candidates[b], &tensor.paf_view(xc), &tensor.paf_view(yc), stride, config)
        })
        .collect();
    let mut skeletons = assemble_instances(class_id, &candidates, &matches, edges);
    if let Some(m) = config.max_instances_per_class {
        skeletons.truncate(m);
    }
    ClassParse { class_id, candidates, matches, skeletons }
}

/// Skeletons for every class of the tensor, in ascending class order and
/// descending instance score within a class.
pub fn parse(tensor: &LabelTensor, models: &ModelRegistry, config: &ParseConfig) -> Result<Vec<InstanceSkeleton>, ParseError> {
    config.validate()?;
    check_classes(tensor, models)?;
    match config.mode {
        ParseMode::Heatmap => parse_heatmaps_only(tensor, models, config),
        ParseMode::Paf => Ok((0..tensor.class_ids().len())
            .flat_map(|ci| {
                let model = models.get(tensor.class_ids()[ci]).expect("checked");
                parse_class(tensor, ci, model.paf_edges(), config).skeletons
            })
            .collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::box_model;
    use crate::label_synth::{cell_center, render_heatmaps_into, render_pafs_into, ProjectedInstance};
    use crate::geometry::Pose;

    fn registry() -> ModelRegistry {
        let mut r = ModelRegistry::new();
        r.insert(box_model(1, 0.05, 0.04, 0.06)).unwrap();
        r
    }

    fn instance(points: [Option<Vector2<f64>>; 8]) -> ProjectedInstance {
        ProjectedInstance { class_id: 1, pose: Pose::identity(), points }
    }

    fn render(instances: &[ProjectedInstance]) -> LabelTensor {
        let mut t = LabelTensor::empty(&[1], 480, 640, 8);
        render_heatmaps_into(&mut t, instances, 16.0);
        render_pafs_into(&mut t, instances, &registry(), 12.0);
        t
    }

    /// Eight keypoints laid out as two squares, offset by `origin`.
    fn layout(origin: Vector2<f64>) -> [Option<Vector2<f64>>; 8] {
        let ring = [(0.0, 0.0), (60.0, 0.0), (60.0, 60.0), (0.0, 60.0)];
        let mut out = [None; 8];
        for (k, &(x, y)) in ring.iter().enumerate() {
            out[k] = Some(origin + Vector2::new(x, y));
            out[k + 4] = Some(origin + Vector2::new(x + 23.0, y + 17.0));
        }
        out
    }

    #[test]
    fn zero_channel_has_no_peaks() {
        let t = LabelTensor::empty(&[1], 480, 640, 8);
        assert!(find_peaks(&t.heatmap_view(0), 8, 0.3, 1, 1, 0).is_empty());
    }

    #[test]
    fn blob_on_cell_center_gives_exact_peak() {
        let mut pts = [None; 8];
        let c = cell_center(12, 30, 8);
        pts[0] = Some(c);
        let t = render(&[instance(pts)]);
        let peaks = find_peaks(&t.heatmap_view(0), 8, 0.1, 1, 1, 0);
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].score, 1.0);
        assert!((peaks[0].position - c).norm() < 1e-9);
    }

    #[test]
    fn off_center_blob_is_refined() {
        let mut pts = [None; 8];
        let p = Vector2::new(243.3, 101.9);
        pts[0] = Some(p);
        let t = render(&[instance(pts)]);
        let peaks = find_peaks(&t.heatmap_view(0), 8, 0.1, 1, 1, 0);
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0].position - p).norm() < 1e-3, "{:?}", peaks[0].position);
    }

    #[test]
    fn plateau_yields_single_peak() {
        let mut t = LabelTensor::empty(&[1], 80, 80, 8);
        let hc = t.heatmap_channels();
        let w = t.grid_width();
        for (i, j) in [(4, 4), (4, 5)] {
            t.heatmaps_mut()[(i * w + j) * hc] = 0.8;
        }
        let peaks = find_peaks(&t.heatmap_view(0), 8, 0.3, 1, 1, 0);
        assert_eq!(peaks.len(), 1);
    }

    #[test]
    fn raising_threshold_never_adds_candidates() {
        let mut pts_a = [None; 8];
        pts_a[0] = Some(Vector2::new(100.0, 100.0));
        let mut pts_b = [None; 8];
        pts_b[0] = Some(Vector2::new(300.0, 200.0));
        let mut t = render(&[instance(pts_a), instance(pts_b)]);
        for v in t.heatmaps_mut().iter_mut().step_by(9).skip(3000).take(500) {
            *v = (*v + 0.35).min(1.0);
        }
        let mut last = usize::MAX;
        for k in 1..20 {
            let n = find_peaks(&t.heatmap_view(0), 8, k as f64 * 0.05, 1, 1, 0).len();
            assert!(n <= last);
            last = n;
        }
    }

    #[test]
    fn edge_score_aligned_reversed_orthogonal() {
        let pa = Vector2::new(100.0, 200.0);
        let pb = Vector2::new(260.0, 260.0);
        let mut pts = [None; 8];
        pts[0] = Some(pa);
        pts[1] = Some(pb);
        let t = render(&[instance(pts)]);
        let (x, y) = (t.paf_view(0), t.paf_view(1));
        let s = paf_edge_score(&x, &y, 8, &pa, &pb, 10, 0.05, 12.0).unwrap();
        assert!(s.mean >= 0.99, "{s:?}");
        assert_eq!(s.valid_fraction, 1.0);
        let r = paf_edge_score(&x, &y, 8, &pb, &pa, 10, 0.05, 12.0).unwrap();
        assert!(r.mean <= -0.99);
        let mid = (pa + pb) / 2.0;
        let dir = (pb - pa).normalize();
        let perp = Vector2::new(-dir.y, dir.x);
        let o = paf_edge_score(&x, &y, 8, &(mid - perp * 30.0), &(mid + perp * 30.0), 10, 0.05, 12.0).unwrap();
        assert!(o.mean.abs() <= 0.01, "{o:?}");
        assert!(matches!(paf_edge_score(&x, &y, 8, &pa, &(pa + Vector2::new(0.5, 0.0)), 10, 0.05, 12.0), Err(ParseError::DegenerateSegment(_))));
    }

    #[test]
    fn two_instances_pair_correctly() {
        let a = layout(Vector2::new(80.0, 80.0));
        let b = layout(Vector2::new(400.0, 90.0));
        let t = render(&[instance(a), instance(b)]);
        let reg = registry();
        let cp = parse_class(&t, 0, reg.get(1).unwrap().paf_edges(), &ParseConfig::default());
        for m in cp.matches[0].iter().filter(|m| m.accepted) {
            let ca = cp.candidates[0][m.candidate_a].position;
            let cb = cp.candidates[1][m.candidate_b].position;
            assert!((ca.x < 240.0) == (cb.x < 240.0), "crossed pairing");
        }
        assert_eq!(cp.matches[0].iter().filter(|m| m.accepted).count(), 2);
        assert_eq!(cp.skeletons.len(), 2);
        let mut used = std::collections::HashSet::new();
        for s in &cp.skeletons {
            assert_eq!(s.parts().len(), 8);
            for c in s.parts().values() {
                assert!(used.insert((c.part_index, c.position.x.to_bits(), c.position.y.to_bits())));
            }
        }
    }

    #[test]
    fn three_parts_are_not_a_skeleton() {
        let full = layout(Vector2::new(200.0, 150.0));
        let mut pts = [None; 8];
        pts[0] = full[0];
        pts[1] = full[1];
        pts[2] = full[2];
        let t = render(&[instance(pts)]);
        assert!(parse(&t, &registry(), &ParseConfig::default()).unwrap().is_empty());
        let hm = ParseConfig { mode: ParseMode::Heatmap, ..Default::default() };
        assert!(parse(&t, &registry(), &hm).unwrap().is_empty());
        assert!(InstanceSkeleton::new(1, BTreeMap::new(), 0.0).is_err());
    }

    #[test]
    fn single_instance_both_modes_agree() {
        let pts = layout(Vector2::new(203.7, 151.2));
        let t = render(&[instance(pts)]);
        let paf = parse(&t, &registry(), &ParseConfig::default()).unwrap();
        let hm = parse(&t, &registry(), &ParseConfig { mode: ParseMode::Heatmap, ..Default::default() }).unwrap();
        assert_eq!(paf.len(), 1);
        assert_eq!(hm.len(), 1);
        for (k, truth) in pts.iter().enumerate() {
            let p = paf[0].parts()[&k].position;
            assert_eq!(p, hm[0].parts()[&k].position);
            assert!((p - truth.unwrap()).norm() < 0.75 * 8.0);
        }
        // 8 part scores plus 12 edges of roughly unit alignment
        assert!(paf[0].instance_score() > 8.0 * 0.9 + 12.0 * 0.9);
    }

    #[test]
    fn conflicting_merge_is_rejected() {
        // two candidates for part 0 both matched to different neighbors of one chain
        let c = |part: usize, x: f64| PartCandidate { class_id: 1, part_index: part, position: Vector2::new(x, 0.0), score: 1.0 };
        let mut cands: [Vec<PartCandidate>; 8] = Default::default();
        for (k, list) in cands.iter_mut().enumerate() {
            list.push(c(k, k as f64 * 10.0));
        }
        cands[0].push(c(0, 500.0));
        let edges = crate::model_registry::CUBOID_EDGES;
        let mut matches: Vec<Vec<EdgeMatch>> = vec![Vec::new(); 12];
        let m = |e: usize, a: usize, b: usize, s: f64| EdgeMatch { edge_index: e, candidate_a: a, candidate_b: b, paf_score: s, valid_fraction: 1.0, accepted: true };
        for (e, list) in matches.iter_mut().enumerate().skip(1) {
            list.push(m(e, 0, 0, 0.9));
        }
        // edge 0 = (0, 1) matches first part-0 candidate; edge 3 = (3, 0) tries the second one
        matches[0].push(m(0, 0, 0, 0.95));
        matches[3].clear();
        matches[3].push(m(3, 0, 1, 0.99));
        let sk = assemble_instances(1, &cands, &matches, &edges);
        // edge 3 binds part 3 to the second part-0 candidate first; every
        // later merge between that pair and the main group would put two
        // candidates in slot 0 and is rejected
        assert_eq!(sk.len(), 1);
        assert_eq!(sk[0].parts().len(), 7);
        assert_eq!(sk[0].parts()[&0].position.x, 0.0);
        assert!(!sk[0].parts().contains_key(&3));
    }
}
