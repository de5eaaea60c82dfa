//! Tensor → skeletons → poses for a single image.

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, Pose};
use crate::label_synth::LabelTensor;
use crate::model_registry::ModelRegistry;
use crate::paf_parse::{parse, InstanceSkeleton, ParseConfig, ParseError, ParseMode};
use crate::pnp_solver::{estimate_poses, PoseBatch, RansacConfig};
use crate::tensor_io::PoseRecord;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub parse: ParseConfig,
    pub ransac: RansacConfig,
}

impl PipelineConfig {
    pub fn with_mode(mut self, mode: ParseMode) -> Self {
        self.parse.mode = mode;
        self
    }
}

#[derive(Debug, Clone)]
pub struct ImageResult {
    pub skeletons: Vec<InstanceSkeleton>,
    pub batch: PoseBatch,
}

impl ImageResult {
    pub fn pose_records(&self) -> Vec<PoseRecord> {
        self.batch.poses.iter().map(PoseRecord::from).collect()
    }

    /// `(class_id, pose)` for every successful estimate.
    pub fn estimates(&self) -> Vec<(u32, Pose)> {
        self.batch.poses.iter().map(|p| (p.class_id, p.estimate.pose)).collect()
    }

    pub fn skeleton_count(&self, class_id: u32) -> usize {
        self.skeletons.iter().filter(|s| s.class_id() == class_id).count()
    }
}

/// Parses `tensor` and solves a pose for each skeleton. Skeleton `i`
/// uses RANSAC seed `seed + i`.
pub fn run_image(
    tensor: &LabelTensor,
    models: &ModelRegistry,
    camera: &CameraIntrinsics,
    config: &PipelineConfig,
    seed: u64,
) -> Result<ImageResult, ParseError> {
    let skeletons = parse(tensor, models, &config.parse)?;
    let batch = estimate_poses(&skeletons, models, camera, &config.ransac, seed);
    Ok(ImageResult { skeletons, batch })
}
