//! Tensor files, scene annotations, skeleton and pose JSON.
//!
//! Tensor file: one compact JSON header line terminated by `\n`, then the
//! payload as little-endian f32 in row-major `(h, w, c)` order. Within a
//! cell the `8C+1` heatmap channels come first, then the `24C` PAF channels.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use nalgebra::Vector2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraIntrinsics, Pose};
use crate::label_synth::{grid_dims, heatmap_channel_count, paf_channel_count, Instance, LabelTensor, SceneAnnotation};
use crate::paf_parse::{InstanceSkeleton, PartCandidate};
use crate::pnp_solver::InstancePose;

pub const TENSOR_MAGIC: &str = "pafpose-tensor";
pub const TENSOR_DTYPE: &str = "f32le";

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("malformed tensor header: {0}")]
    Header(String),
    #[error("bad magic {found:?}, expected {TENSOR_MAGIC:?}")]
    Magic { found: String },
    #[error("{what} channel mismatch: expected {expected}, found {found}")]
    ChannelMismatch { what: &'static str, expected: usize, found: usize },
    #[error("class ids {found:?} do not match expected {expected:?}")]
    ClassMismatch { expected: Vec<u32>, found: Vec<u32> },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

impl TensorIoError {
    fn schema(path: impl Into<String>, message: impl ToString) -> Self {
        Self::Schema { path: path.into(), message: message.to_string() }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> TensorIoError + '_ {
    move |source| TensorIoError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorHeader {
    pub magic: String,
    pub dtype: String,
    /// `[h, w, c]` with `c` the total channel count.
    pub shape: [usize; 3],
    pub stride: usize,
    pub class_ids: Vec<u32>,
    /// Heatmap channel count; the remaining channels are PAFs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap_channels: Option<usize>,
    /// `[height, width]` of the source image in pixels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_size: Option<[u32; 2]>,
}

pub fn encode_tensor(tensor: &LabelTensor) -> Vec<u8> {
    let (h, w) = (tensor.grid_height(), tensor.grid_width());
    let (hc, pc) = (tensor.heatmap_channels(), tensor.paf_channels());
    let (ih, iw) = tensor.image_size();
    let header = TensorHeader {
        magic: TENSOR_MAGIC.into(),
        dtype: TENSOR_DTYPE.into(),
        shape: [h, w, hc + pc],
        stride: tensor.stride(),
        class_ids: tensor.class_ids().to_vec(),
        heatmap_channels: Some(hc),
        image_size: Some([ih, iw]),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.reserve(h * w * (hc + pc) * 4);
    for cell in 0..h * w {
        for v in &tensor.heatmaps()[cell * hc..(cell + 1) * hc] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &tensor.pafs()[cell * pc..(cell + 1) * pc] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parses a tensor file image. With `expected_class_ids`, the header's
/// class list must match exactly.
pub fn decode_tensor(bytes: &[u8], expected_class_ids: Option<&[u32]>) -> Result<LabelTensor, TensorIoError> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| TensorIoError::Header("missing newline after header".into()))?;
    let header_text =
        std::str::from_utf8(&bytes[..nl]).map_err(|e| TensorIoError::Header(format!("header is not UTF-8: {e}")))?;
    let value: serde_json::Value =
        serde_json::from_str(header_text).map_err(|e| TensorIoError::Header(e.to_string()))?;
    if let Some(magic) = value.get("magic") {
        if magic != TENSOR_MAGIC {
            return Err(TensorIoError::Magic { found: magic.as_str().map_or_else(|| magic.to_string(), str::to_string) });
        }
    }
    let header: TensorHeader = serde_path_to_error::deserialize(value)
        .map_err(|e| TensorIoError::Header(format!("{}: {}", e.path(), e.inner())))?;
    if header.dtype != TENSOR_DTYPE {
        return Err(TensorIoError::Header(format!("unsupported dtype {:?}, expected {TENSOR_DTYPE:?}", header.dtype)));
    }
    if let Some(expected) = expected_class_ids {
        if expected != header.class_ids.as_slice() {
            return Err(TensorIoError::ClassMismatch { expected: expected.to_vec(), found: header.class_ids.clone() });
        }
    }
    let n_classes = header.class_ids.len();
    let [h, w, c] = header.shape;
    let hc_expected = heatmap_channel_count(n_classes);
    let pc_expected = paf_channel_count(n_classes);
    let hc = header.heatmap_channels.unwrap_or(hc_expected);
    if hc != hc_expected {
        return Err(TensorIoError::ChannelMismatch { what: "heatmap", expected: hc_expected, found: hc });
    }
    let pc = c.checked_sub(hc).ok_or(TensorIoError::ChannelMismatch { what: "total", expected: hc + pc_expected, found: c })?;
    if pc != pc_expected {
        return Err(TensorIoError::ChannelMismatch { what: "PAF", expected: pc_expected, found: pc });
    }
    if header.stride == 0 {
        return Err(TensorIoError::Header("stride must be positive".into()));
    }
    let image_size = match header.image_size {
        Some([ih, iw]) => {
            if grid_dims(ih, iw, header.stride) != (h, w) {
                return Err(TensorIoError::Header(format!(
                    "grid {h}×{w} inconsistent with image {ih}×{iw} at stride {}",
                    header.stride
                )));
            }
            (ih, iw)
        }
        None => {
            let px = |n: usize| u32::try_from(n * header.stride).map_err(|_| TensorIoError::Header("grid too large".into()));
            (px(h)?, px(w)?)
        }
    };
    let payload = &bytes[nl + 1..];
    let expected_bytes = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(c))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| TensorIoError::Header("shape overflows".into()))?;
    if payload.len() < expected_bytes {
        return Err(TensorIoError::Truncated { expected: expected_bytes, found: payload.len() });
    }
    if payload.len() > expected_bytes {
        return Err(TensorIoError::TrailingBytes(payload.len() - expected_bytes));
    }
    let mut heatmaps = Vec::with_capacity(h * w * hc);
    let mut pafs = Vec::with_capacity(h * w * pc);
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if k % c < hc {
            heatmaps.push(v);
        } else {
            pafs.push(v);
        }
    }
    LabelTensor::from_parts(header.class_ids, image_size, header.stride, (h, w), heatmaps, pafs)
        .map_err(|e| TensorIoError::Header(e.to_string()))
}

pub fn write_tensor(tensor: &LabelTensor, path: &Path) -> Result<(), TensorIoError> {
    write_bytes(path, &encode_tensor(tensor))
}

pub fn read_tensor(path: &Path, expected_class_ids: Option<&[u32]>) -> Result<LabelTensor, TensorIoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_tensor(&bytes, expected_class_ids)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), TensorIoError> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))
}

/// Deserializes JSON, reporting the JSON path of the first schema violation.
pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T, TensorIoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        TensorIoError::schema(if path == "." { "$".to_string() } else { path }, e.into_inner())
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, TensorIoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    from_json_str(&text).map_err(|e| match e {
        TensorIoError::Schema { path: p, message } => TensorIoError::Schema { path: format!("{}: {p}", path.display()), message },
        other => other,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<(), TensorIoError> {
    write_bytes(path, to_json_string(value).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRecord {
    class_id: u32,
    #[serde(rename = "R")]
    r: [f64; 9],
    t: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneRecord {
    camera: CameraIntrinsics,
    instances: Vec<InstanceRecord>,
}

pub fn annotation_from_str(text: &str) -> Result<SceneAnnotation, TensorIoError> {
    let rec: SceneRecord = from_json_str(text)?;
    rec.camera.validate().map_err(|e| TensorIoError::schema("camera", e))?;
    let instances = rec
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            Pose::from_row_major(&inst.r, &inst.t)
                .map(|pose| Instance { class_id: inst.class_id, pose })
                .map_err(|e| TensorIoError::schema(format!("instances[{i}].R"), e))
        })
        .collect::<Result<_, _>>()?;
    Ok(SceneAnnotation { camera: rec.camera, instances })
}

pub fn annotation_to_string(scene: &SceneAnnotation) -> String {
    let rec = SceneRecord {
        camera: scene.camera,
        instances: scene
            .instances
            .iter()
            .map(|i| InstanceRecord { class_id: i.class_id, r: i.pose.rotation_row_major(), t: i.pose.translation_array() })
            .collect(),
    };
    to_json_string(&rec)
}

pub fn read_annotations(path: &Path) -> Result<SceneAnnotation, TensorIoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    annotation_from_str(&text).map_err(|e| prefix_path(e, path))
}

pub fn write_annotations(scene: &SceneAnnotation, path: &Path) -> Result<(), TensorIoError> {
    write_bytes(path, annotation_to_string(scene).as_bytes())
}

fn prefix_path(e: TensorIoError, file: &Path) -> TensorIoError {
    match e {
        TensorIoError::Schema { path, message } => TensorIoError::Schema { path: format!("{}: {path}", file.display()), message },
        other => other,
    }
}

pub fn read_camera(path: &Path) -> Result<CameraIntrinsics, TensorIoError> {
    let k: CameraIntrinsics = read_json(path)?;
    k.validate().map_err(|e| TensorIoError::schema(path.display().to_string(), e))?;
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartRecord {
    pub part: usize,
    pub u: f64,
    pub v: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonRecord {
    pub class_id: u32,
    pub parts: Vec<PartRecord>,
    pub instance_score: f64,
}

impl From<&InstanceSkeleton> for SkeletonRecord {
    fn from(s: &InstanceSkeleton) -> Self {
        Self {
            class_id: s.class_id(),
            parts: s
                .parts()
                .iter()
                .map(|(&part, c)| PartRecord { part, u: c.position.x, v: c.position.y, score: c.score })
                .collect(),
            instance_score: s.instance_score(),
        }
    }
}

pub fn skeletons_to_string(skeletons: &[InstanceSkeleton]) -> String {
    let recs: Vec<SkeletonRecord> = skeletons.iter().map(SkeletonRecord::from).collect();
    to_json_string(&recs)
}

/// Parses a skeleton list; skeletons with fewer than four parts, duplicate
/// or out-of-range part indices are rejected.
pub fn skeletons_from_str(text: &str) -> Result<Vec<InstanceSkeleton>, TensorIoError> {
    let recs: Vec<SkeletonRecord> = from_json_str(text)?;
    recs.iter()
        .enumerate()
        .map(|(i, r)| {
            let mut parts = BTreeMap::new();
            for (j, p) in r.parts.iter().enumerate() {
                if !(p.u.is_finite() && p.v.is_finite() && p.score.is_finite()) {
                    return Err(TensorIoError::schema(format!("[{i}].parts[{j}]"), "non-finite value"));
                }
                let cand = PartCandidate { class_id: r.class_id, part_index: p.part, position: Vector2::new(p.u, p.v), score: p.score };
                if parts.insert(p.part, cand).is_some() {
                    return Err(TensorIoError::schema(format!("[{i}].parts[{j}].part"), format!("duplicate part {}", p.part)));
                }
            }
            InstanceSkeleton::new(r.class_id, parts, r.instance_score)
                .map_err(|e| TensorIoError::schema(format!("[{i}].parts"), e))
        })
        .collect()
}

pub fn read_skeletons(path: &Path) -> Result<Vec<InstanceSkeleton>, TensorIoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    skeletons_from_str(&text).map_err(|e| prefix_path(e, path))
}

pub fn write_skeletons(skeletons: &[InstanceSkeleton], path: &Path) -> Result<(), TensorIoError> {
    write_bytes(path, skeletons_to_string(skeletons).as_bytes())
}

/// One estimated pose. Only `class_id`, `R` and `t` are required on input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub class_id: u32,
    #[serde(rename = "R")]
    pub r: [f64; 9],
    pub t: [f64; 3],
    /// Part indices kept as RANSAC inliers.
    #[serde(default)]
    pub inliers: Vec<usize>,
    #[serde(default)]
    pub mean_reproj_error: f64,
    #[serde(default)]
    pub instance_score: f64,
    #[serde(default)]
    pub n_ransac_iters_used: usize,
    #[serde(default)]
    pub refine_converged: bool,
}

impl From<&InstancePose> for PoseRecord {
    fn from(p: &InstancePose) -> Self {
        Self {
            class_id: p.class_id,
            r: p.estimate.pose.rotation_row_major(),
            t: p.estimate.pose.translation_array(),
            inliers: p.inlier_parts(),
            mean_reproj_error: p.estimate.mean_reproj_error,
            instance_score: p.instance_score,
            n_ransac_iters_used: p.estimate.n_ransac_iters_used,
            refine_converged: p.estimate.refine_converged,
        }
    }
}

impl PoseRecord {
    pub fn pose(&self) -> Result<Pose, crate::geometry::GeometryError> {
        Pose::from_row_major(&self.r, &self.t)
    }
}

pub fn poses_to_string(poses: &[PoseRecord]) -> String {
    to_json_string(poses)
}

pub fn poses_from_str(text: &str) -> Result<Vec<PoseRecord>, TensorIoError> {
    let recs: Vec<PoseRecord> = from_json_str(text)?;
    for (i, r) in recs.iter().enumerate() {
        r.pose().map_err(|e| TensorIoError::schema(format!("[{i}].R"), e))?;
    }
    Ok(recs)
}

pub fn read_poses(path: &Path) -> Result<Vec<PoseRecord>, TensorIoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    poses_from_str(&text).map_err(|e| prefix_path(e, path))
}

pub fn write_poses(poses: &[PoseRecord], path: &Path) -> Result<(), TensorIoError> {
    write_bytes(path, poses_to_string(poses).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn sample_tensor() -> LabelTensor {
        let mut t = LabelTensor::empty(&[3, 7], 20, 30, 8);
        for (k, v) in t.heatmaps_mut().iter_mut().enumerate() {
            *v = (k as f32 * 0.37).sin();
        }
        for (k, v) in t.pafs_mut().iter_mut().enumerate() {
            *v = (k as f32 * 0.11).cos();
        }
        t
    }

    fn with_header(bytes: &[u8], edit: impl FnOnce(&mut serde_json::Value)) -> Vec<u8> {
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let mut h: serde_json::Value = serde_json::from_slice(&bytes[..nl]).unwrap();
        edit(&mut h);
        let mut out = serde_json::to_vec(&h).unwrap();
        out.extend_from_slice(&bytes[nl..]);
        out
    }

    #[test]
    fn tensor_round_trip_is_bit_exact() {
        let t = sample_tensor();
        let bytes = encode_tensor(&t);
        let back = decode_tensor(&bytes, Some(&[3, 7])).unwrap();
        assert_eq!(back, t);
        assert_eq!(encode_tensor(&back), bytes);
    }

    #[test]
    fn payload_is_cell_interleaved_little_endian() {
        let t = sample_tensor();
        let bytes = encode_tensor(&t);
        let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
        let c = t.heatmap_channels() + t.paf_channels();
        // cell (1, 2), first PAF channel
        let cell = t.grid_width() + 2;
        let off = nl + 1 + 4 * (cell * c + t.heatmap_channels());
        let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        assert_eq!(v, t.pafs()[cell * t.paf_channels()]);
    }

    #[test]
    fn channel_counts_checked_separately() {
        let bytes = encode_tensor(&sample_tensor());
        // 17 heatmaps for two classes is right; PAFs one short
        let bad = with_header(&bytes, |h| h["shape"][2] = (17 + 47).into());
        match decode_tensor(&bad, None) {
            Err(TensorIoError::ChannelMismatch { what: "PAF", expected: 48, found: 47 }) => {}
            other => panic!("{other:?}"),
        }
        let bad = with_header(&bytes, |h| h["heatmap_channels"] = 16.into());
        match decode_tensor(&bad, None) {
            Err(TensorIoError::ChannelMismatch { what: "heatmap", expected: 17, found: 16 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let bytes = encode_tensor(&sample_tensor());
        assert!(matches!(decode_tensor(&bytes[..bytes.len() - 3], None), Err(TensorIoError::Truncated { .. })));
        let mut long = bytes.clone();
        long.extend_from_slice(&[0; 4]);
        assert!(matches!(decode_tensor(&long, None), Err(TensorIoError::TrailingBytes(4))));
    }

    #[test]
    fn header_errors() {
        let bytes = encode_tensor(&sample_tensor());
        let bad = with_header(&bytes, |h| h["magic"] = "nope".into());
        assert!(matches!(decode_tensor(&bad, None), Err(TensorIoError::Magic { .. })));
        let bad = with_header(&bytes, |h| h["dtype"] = "f64le".into());
        assert!(matches!(decode_tensor(&bad, None), Err(TensorIoError::Header(_))));
        assert!(matches!(decode_tensor(&bytes, Some(&[3])), Err(TensorIoError::ClassMismatch { .. })));
        assert!(matches!(decode_tensor(b"{}", None), Err(TensorIoError::Header(_))));
    }

    #[test]
    fn annotation_round_trip_and_diagnostics() {
        let scene = SceneAnnotation {
            camera: CameraIntrinsics::ycbv(),
            instances: vec![Instance {
                class_id: 13,
                pose: Pose::from_axis_angle(Vector3::new(0.1, -0.7, 0.3), Vector3::new(0.01, 0.02, 0.9)),
            }],
        };
        let text = annotation_to_string(&scene);
        let back = annotation_from_str(&text).unwrap();
        assert_eq!(back, scene);
        assert_eq!(annotation_to_string(&back), text);

        let bad = text.replacen("\"t\": [", "\"t\": [\"x\", ", 1);
        match annotation_from_str(&bad) {
            Err(TensorIoError::Schema { path, .. }) => assert_eq!(path, "instances[0].t[0]"),
            other => panic!("{other:?}"),
        }
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["instances"][0]["R"][0] = 2.0.into();
        match annotation_from_str(&v.to_string()) {
            Err(TensorIoError::Schema { path, .. }) => assert_eq!(path, "instances[0].R"),
            other => panic!("{other:?}"),
        }
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["instances"][0]["R"].as_array_mut().unwrap().pop();
        assert!(annotation_from_str(&v.to_string()).is_err());
    }

    #[test]
    fn skeleton_reader_rejects_three_parts() {
        let text = r#"[{"class_id":1,"parts":[{"part":0,"u":1,"v":2,"score":0.9},{"part":1,"u":3,"v":2,"score":0.9},{"part":2,"u":1,"v":5,"score":0.9}],"instance_score":0.9}]"#;
        assert!(matches!(skeletons_from_str(text), Err(TensorIoError::Schema { .. })));
        let four = text.replace("}],\"instance_score\"", r#"},{"part":5,"u":7,"v":7,"score":0.5}],"instance_score""#);
        let sk = skeletons_from_str(&four).unwrap();
        assert_eq!(sk[0].parts().len(), 4);
        assert_eq!(skeletons_from_str(&skeletons_to_string(&sk)).unwrap(), sk);
        let dup = text.replace("}],\"instance_score\"", r#"},{"part":0,"u":7,"v":7,"score":0.5}],"instance_score""#);
        assert!(skeletons_from_str(&dup).is_err());
    }

    #[test]
    fn pose_records_minimal_input() {
        let text = r#"[{"class_id":4,"R":[1,0,0,0,1,0,0,0,1],"t":[0,0,1]}]"#;
        let recs = poses_from_str(text).unwrap();
        assert_eq!(recs[0].pose().unwrap(), Pose::from_parts_unchecked(nalgebra::Matrix3::identity(), Vector3::z()));
        assert!(poses_from_str(r#"[{"class_id":4,"R":[2,0,0,0,1,0,0,0,1],"t":[0,0,1]}]"#).is_err());
    }
}
