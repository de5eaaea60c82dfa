//! Keypoint and part-affinity-field based 6D object pose estimation.
//!
//! The pipeline runs from per-class object models through ground-truth
//! label tensors, keypoint grouping and PnP-RANSAC to symmetry-aware
//! evaluation. Tensors come either from files (for example exported by a
//! network) or from the built-in simulator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fixtures;
pub mod geometry;
pub mod keypoint_select;
pub mod label_synth;
pub mod metrics;
pub mod model_registry;
pub mod paf_parse;
pub mod pipeline;
pub mod pnp_solver;
pub mod simulator;
pub mod spatial;
pub mod tensor_io;

pub use geometry::{project, CameraIntrinsics, Pose};
pub use model_registry::{ModelRegistry, ObjectModel};
