//! PNG overlays of keypoints, skeletons and projected bounding boxes.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use image::{Rgb, RgbImage};
use imageproc::drawing::{draw_filled_circle_mut, draw_hollow_circle_mut, draw_line_segment_mut};
use nalgebra::{Vector2, Vector3};

use pafpose::geometry::{project, CameraIntrinsics, Pose};
use pafpose::label_synth::{LabelTensor, SceneAnnotation};
use pafpose::model_registry::{ModelRegistry, ObjectModel, CUBOID_EDGES};
use pafpose::tensor_io::{read_annotations, read_camera, read_poses, read_skeletons, read_tensor};

#[derive(Args, Debug)]
pub struct OverlayArgs {
    #[arg(long)]
    models: PathBuf,
    /// Ground-truth annotation JSON; supplies the camera when --camera is absent
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    camera: Option<PathBuf>,
    /// Estimated poses to draw as red boxes
    #[arg(long)]
    poses: Option<PathBuf>,
    /// Skeletons to draw as colored parts joined by their PAF edges
    #[arg(long)]
    skeletons: Option<PathBuf>,
    /// Background image (PNG); defaults to one minus the background channel
    /// of --tensor, or a dark canvas
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    tensor: Option<PathBuf>,
    /// Output PNG
    #[arg(long)]
    out: PathBuf,
}

const GT_COLOR: Rgb<u8> = Rgb([60, 220, 90]);
const EST_COLOR: Rgb<u8> = Rgb([235, 60, 50]);
const PART_COLORS: [Rgb<u8>; 8] = [
    Rgb([255, 215, 0]),
    Rgb([255, 140, 0]),
    Rgb([0, 191, 255]),
    Rgb([186, 85, 211]),
    Rgb([50, 205, 50]),
    Rgb([255, 105, 180]),
    Rgb([64, 224, 208]),
    Rgb([245, 245, 245]),
];

fn bbox_corners(model: &ObjectModel) -> [Vector3<f64>; 8] {
    let (lo, hi) = model.mesh().bounding_box();
    let ring = [(lo.x, lo.y), (hi.x, lo.y), (hi.x, hi.y), (lo.x, hi.y)];
    let mut out = [Vector3::zeros(); 8];
    for (k, &(x, y)) in ring.iter().enumerate() {
        out[k] = Vector3::new(x, y, lo.z);
        out[k + 4] = Vector3::new(x, y, hi.z);
    }
    out
}

fn line(img: &mut RgbImage, a: &Vector2<f64>, b: &Vector2<f64>, color: Rgb<u8>) {
    draw_line_segment_mut(img, (a.x as f32, a.y as f32), (b.x as f32, b.y as f32), color);
}

fn draw_box(img: &mut RgbImage, model: &ObjectModel, pose: &Pose, k: &CameraIntrinsics, color: Rgb<u8>) {
    let pts: Vec<Option<Vector2<f64>>> = bbox_corners(model).iter().map(|c| project(c, pose, k)).collect();
    for &(a, b) in &CUBOID_EDGES {
        if let (Some(pa), Some(pb)) = (pts[a], pts[b]) {
            line(img, &pa, &pb, color);
        }
    }
}

fn draw_keypoints(img: &mut RgbImage, model: &ObjectModel, pose: &Pose, k: &CameraIntrinsics, color: Rgb<u8>) {
    for kp in model.keypoints() {
        if let Some(p) = project(kp, pose, k) {
            draw_hollow_circle_mut(img, (p.x.round() as i32, p.y.round() as i32), 4, color);
        }
    }
}

fn heatmap_background(tensor: &LabelTensor, width: u32, height: u32) -> RgbImage {
    let view = tensor.background_view();
    let s = tensor.stride() as u32;
    RgbImage::from_fn(width, height, |x, y| {
        let (i, j) = ((y / s) as usize, (x / s) as usize);
        let v = if i < view.height && j < view.width { 1.0 - view.get(i, j) } else { 0.0 };
        let g = (v.clamp(0.0, 1.0) * 200.0) as u8 + 20;
        Rgb([g, g, g])
    })
}

pub fn run(a: &OverlayArgs) -> Result<()> {
    let models = ModelRegistry::load_dir(&a.models).with_context(|| format!("loading models from {}", a.models.display()))?;
    let scene: Option<SceneAnnotation> = a.annotations.as_deref().map(read_annotations).transpose()?;
    let camera = match (&a.camera, &scene) {
        (Some(p), _) => read_camera(p)?,
        (None, Some(s)) => s.camera,
        (None, None) => bail!("overlay needs --camera or --annotations"),
    };
    let mut img = match (&a.image, &a.tensor) {
        (Some(p), _) => image::open(p).with_context(|| format!("reading {}", p.display()))?.to_rgb8(),
        (None, Some(p)) => heatmap_background(&read_tensor(p, None)?, camera.width, camera.height),
        (None, None) => RgbImage::from_pixel(camera.width, camera.height, Rgb([24, 24, 28])),
    };
    if let Some(scene) = &scene {
        for inst in &scene.instances {
            let model = models.get(inst.class_id)?;
            draw_box(&mut img, model, &inst.pose, &camera, GT_COLOR);
            draw_keypoints(&mut img, model, &inst.pose, &camera, GT_COLOR);
        }
    }
    if let Some(p) = &a.poses {
        for rec in read_poses(p)? {
            let model = models.get(rec.class_id)?;
            draw_box(&mut img, model, &rec.pose()?, &camera, EST_COLOR);
        }
    }
    if let Some(p) = &a.skeletons {
        for sk in read_skeletons(p)? {
            let model = models.get(sk.class_id())?;
            let parts = sk.parts();
            for &(ea, eb) in model.paf_edges() {
                if let (Some(ca), Some(cb)) = (parts.get(&ea), parts.get(&eb)) {
                    line(&mut img, &ca.position, &cb.position, Rgb([200, 200, 200]));
                }
            }
            for (&part, c) in parts {
                let center = (c.position.x.round() as i32, c.position.y.round() as i32);
                draw_filled_circle_mut(&mut img, center, 3, PART_COLORS[part % PART_COLORS.len()]);
            }
        }
    }
    img.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(())
}
