//! Per-class object geometry: meshes, keypoints, PAF topology and symmetries.
//!
//! An [`ObjectModel`] is immutable once built and is shared read-only by
//! every later stage (label synthesis, parsing, PnP, evaluation).

mod mesh;
mod symmetry;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mesh::{load_mesh, model_diameter, parse_obj, parse_ply, Mesh};
pub use symmetry::{
    canonicalize_pose, rotation_z, validate_symmetries, SymmetryKind, SymmetryReport, SymmetrySet,
    DEFAULT_CONTINUOUS_STEPS, DEFAULT_SYMMETRY_TOLERANCE_FRACTION,
};

use crate::geometry::Pose;
use crate::keypoint_select::farthest_point_keypoints;

pub const NUM_KEYPOINTS: usize = 8;
pub const NUM_EDGES: usize = 12;

/// Metric evaluation subsamples meshes down to at most this many vertices.
pub const MAX_EVAL_POINTS: usize = 5000;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("mesh parse error: {0}")]
    Parse(String),
    #[error("degenerate mesh: {0}")]
    DegenerateMesh(String),
    #[error("model config schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("insufficient vertices: need {needed}, mesh has {available}")]
    InsufficientVertices { needed: usize, available: usize },
    #[error("unknown class id {0}")]
    UnknownClass(u32),
}

impl ModelError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ModelError::Io { path: path.to_path_buf(), source }
    }
}

/// Ordered pair of keypoint indices connected by a part affinity field.
pub type PafEdge = (usize, usize);

/// Everything known about one object class.
#[derive(Debug, Clone)]
pub struct ObjectModel {
    class_id: u32,
    name: String,
    mesh: Mesh,
    keypoints: [Vector3<f64>; NUM_KEYPOINTS],
    paf_edges: [PafEdge; NUM_EDGES],
    symmetries: SymmetrySet,
    diameter: f64,
    eval_points: Vec<Vector3<f64>>,
}

impl ObjectModel {
    /// Validates every model invariant. `symmetry_tolerance` defaults to
    /// 0.5% of the model diameter.
    pub fn new(
        class_id: u32,
        name: impl Into<String>,
        mesh: Mesh,
        keypoints: [Vector3<f64>; NUM_KEYPOINTS],
        paf_edges: [PafEdge; NUM_EDGES],
        symmetries: SymmetrySet,
        symmetry_tolerance: Option<f64>,
    ) -> Result<Self, ModelError> {
        if class_id == 0 {
            return Err(ModelError::Invariant("class_id must be >= 1".into()));
        }
        mesh.check_centered()?;
        validate_edges(&paf_edges)?;
        if keypoints.iter().any(|k| !k.iter().all(|c| c.is_finite())) {
            return Err(ModelError::Invariant("keypoints must be finite".into()));
        }
        let diameter = model_diameter(&mesh);
        let tolerance = symmetry_tolerance.unwrap_or(DEFAULT_SYMMETRY_TOLERANCE_FRACTION * diameter);
        let report = validate_symmetries(&mesh, &symmetries, tolerance);
        if !report.passed {
            let (worst, dev) = report
                .max_deviation
                .iter()
                .enumerate()
                .fold((0, 0.0), |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc });
            return Err(ModelError::Invariant(format!(
                "symmetry transform {worst} moves vertices up to {dev:.6} m off the mesh (tolerance {tolerance:.6} m)"
            )));
        }
        let eval_points = subsample_points(mesh.vertices(), MAX_EVAL_POINTS);
        Ok(Self {
            class_id,
            name: name.into(),
            mesh,
            keypoints,
            paf_edges,
            symmetries,
            diameter,
            eval_points,
        })
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn keypoints(&self) -> &[Vector3<f64>; NUM_KEYPOINTS] {
        &self.keypoints
    }

    pub fn paf_edges(&self) -> &[PafEdge; NUM_EDGES] {
        &self.paf_edges
    }

    pub fn symmetries(&self) -> &SymmetrySet {
        &self.symmetries
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetries.is_symmetric()
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Vertex subset used by the pose error metrics.
    pub fn eval_points(&self) -> &[Vector3<f64>] {
        &self.eval_points
    }
}

/// Deterministic stride subsampling to at most `max` points.
pub fn subsample_points(points: &[Vector3<f64>], max: usize) -> Vec<Vector3<f64>> {
    if points.len() <= max {
        return points.to_vec();
    }
    let stride = points.len().div_ceil(max);
    points.iter().step_by(stride).copied().collect()
}

fn validate_edges(edges: &[PafEdge; NUM_EDGES]) -> Result<(), ModelError> {
    let mut seen = std::collections::BTreeSet::new();
    for (i, &(a, b)) in edges.iter().enumerate() {
        if a >= NUM_KEYPOINTS || b >= NUM_KEYPOINTS {
            return Err(ModelError::Invariant(format!("paf_edges[{i}] = ({a}, {b}) references a keypoint outside 0..8")));
        }
        if a == b {
            return Err(ModelError::Invariant(format!("paf_edges[{i}] is a self-edge on keypoint {a}")));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(ModelError::Invariant(format!("paf_edges[{i}] duplicates the pair ({a}, {b})")));
        }
    }
    // connectivity: flood fill from keypoint 0
    let mut reached = [false; NUM_KEYPOINTS];
    reached[0] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for &(a, b) in edges {
            if reached[a] != reached[b] {
                reached[a] = true;
                reached[b] = true;
                changed = true;
            }
        }
    }
    if let Some(k) = reached.iter().position(|r| !r) {
        return Err(ModelError::Invariant(format!("paf edge graph is disconnected: keypoint {k} is unreachable from keypoint 0")));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KeypointSpec {
    Auto(String),
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformSpec {
    #[serde(rename = "R")]
    pub rotation: Vec<f64>,
    #[serde(rename = "t", default)]
    pub translation: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SymmetrySpec {
    None,
    Discrete { transforms: Vec<TransformSpec> },
    Continuous { axis: Vec<f64>, #[serde(default)] steps: Option<usize> },
}

/// On-disk model description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub class_id: u32,
    #[serde(default)]
    pub name: Option<String>,
    /// Relative paths resolve against the config file's directory.
    pub mesh_path: PathBuf,
    pub keypoints: KeypointSpec,
    pub paf_edges: Vec<Vec<usize>>,
    pub symmetries: SymmetrySpec,
    /// Meters; defaults to 0.5% of the model diameter.
    #[serde(default)]
    pub symmetry_tolerance: Option<f64>,
}

fn schema(path: &str, message: impl Into<String>) -> ModelError {
    ModelError::Schema { path: path.to_string(), message: message.into() }
}

fn fixed<const N: usize>(values: &[f64], path: &str) -> Result<[f64; N], ModelError> {
    values
        .try_into()
        .map_err(|_| schema(path, format!("expected {N} numbers, found {}", values.len())))
}

impl SymmetrySpec {
    pub fn build(&self) -> Result<SymmetrySet, ModelError> {
        match self {
            SymmetrySpec::None => Ok(SymmetrySet::identity()),
            SymmetrySpec::Discrete { transforms } => {
                let mut out = Vec::with_capacity(transforms.len());
                for (i, t) in transforms.iter().enumerate() {
                    let r = fixed::<9>(&t.rotation, &format!("symmetries.transforms[{i}].R"))?;
                    let tr = match &t.translation {
                        Some(v) => fixed::<3>(v, &format!("symmetries.transforms[{i}].t"))?,
                        None => [0.0; 3],
                    };
                    out.push(
                        Pose::from_row_major(&r, &tr)
                            .map_err(|e| schema(&format!("symmetries.transforms[{i}]"), e.to_string()))?,
                    );
                }
                Ok(SymmetrySet::discrete(out))
            }
            SymmetrySpec::Continuous { axis, steps } => {
                let a = fixed::<3>(axis, "symmetries.axis")?;
                SymmetrySet::continuous(Vector3::from(a), steps.unwrap_or(DEFAULT_CONTINUOUS_STEPS))
            }
        }
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| schema(&e.path().to_string(), e.inner().to_string()))
    }

    /// Loads the mesh and validates everything. `base_dir` anchors a relative `mesh_path`.
    pub fn build(&self, base_dir: &Path) -> Result<ObjectModel, ModelError> {
        let mesh_path = if self.mesh_path.is_absolute() { self.mesh_path.clone() } else { base_dir.join(&self.mesh_path) };
        let mesh = load_mesh(&mesh_path)?;

        let keypoints: [Vector3<f64>; NUM_KEYPOINTS] = match &self.keypoints {
            KeypointSpec::Auto(flag) if flag == "auto" => {
                let kps = farthest_point_keypoints(&mesh, NUM_KEYPOINTS)?;
                kps.try_into().expect("farthest_point_keypoints returns k points")
            }
            KeypointSpec::Auto(other) => {
                return Err(schema("keypoints", format!("expected \"auto\" or a list of 8 points, found \"{other}\"")))
            }
            KeypointSpec::Explicit(list) => {
                if list.len() != NUM_KEYPOINTS {
                    return Err(schema("keypoints", format!("expected {NUM_KEYPOINTS} keypoints, found {}", list.len())));
                }
                let mut out = [Vector3::zeros(); NUM_KEYPOINTS];
                for (i, k) in list.iter().enumerate() {
                    out[i] = Vector3::from(fixed::<3>(k, &format!("keypoints[{i}]"))?);
                }
                out
            }
        };

        if self.paf_edges.len() != NUM_EDGES {
            return Err(schema("paf_edges", format!("expected {NUM_EDGES} edges, found {}", self.paf_edges.len())));
        }
        let mut edges = [(0, 0); NUM_EDGES];
        for (i, e) in self.paf_edges.iter().enumerate() {
            match e.as_slice() {
                [a, b] => edges[i] = (*a, *b),
                _ => return Err(schema(&format!("paf_edges[{i}]"), format!("expected a pair, found {} entries", e.len()))),
            }
        }

        let symmetries = self.symmetries.build()?;
        let name = self.name.clone().unwrap_or_else(|| format!("obj_{:02}", self.class_id));
        ObjectModel::new(self.class_id, name, mesh, keypoints, edges, symmetries, self.symmetry_tolerance)
    }
}

/// Reads a model config file and builds the model.
pub fn load_model_config(path: &Path) -> Result<ObjectModel, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::io(path, e))?;
    let cfg = ModelConfig::from_json(&text)?;
    cfg.build(path.parent().unwrap_or(Path::new(".")))
}

/// All object models of a run, keyed by class id.
#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    models: BTreeMap<u32, ObjectModel>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, model: ObjectModel) -> Result<(), ModelError> {
        let id = model.class_id();
        if self.models.contains_key(&id) {
            return Err(ModelError::Invariant(format!("class id {id} registered twice")));
        }
        self.models.insert(id, model);
        Ok(())
    }

    /// Loads every `*.json` model config in `dir` (sorted by file name).
    pub fn load_dir(dir: &Path) -> Result<Self, ModelError> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| ModelError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut reg = Self::new();
        for p in paths {
            reg.insert(load_model_config(&p)?)?;
        }
        if reg.models.is_empty() {
            return Err(ModelError::Invariant(format!("no model configs found in {}", dir.display())));
        }
        Ok(reg)
    }

    pub fn get(&self, class_id: u32) -> Result<&ObjectModel, ModelError> {
        self.models.get(&class_id).ok_or(ModelError::UnknownClass(class_id))
    }

    pub fn class_ids(&self) -> Vec<u32> {
        self.models.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ObjectModel> {
        self.models.values()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

/// Keypoint pairs forming an upper and lower square joined by four
/// vertical edges, for keypoints ordered as two rings of four.
pub const CUBOID_EDGES: [PafEdge; NUM_EDGES] =
    [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4), (0, 4), (1, 5), (2, 6), (3, 7)];
