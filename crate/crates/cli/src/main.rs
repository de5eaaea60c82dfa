//! `pafpose` command line tool.

mod config;
mod overlay;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use pafpose::keypoint_select::{farthest_point_keypoints, keypoint_spread_report, SpreadReport};
use pafpose::label_synth::{synthesize_labels, LabelParams};
use pafpose::metrics::{evaluate_dataset, EvalConfig, ImageInput};
use pafpose::model_registry::{load_mesh, load_model_config, ModelConfig, ModelRegistry, NUM_KEYPOINTS};
use pafpose::paf_parse::{parse, ParseConfig, ParseMode};
use pafpose::pipeline::PipelineConfig;
use pafpose::pnp_solver::{estimate_poses, RansacConfig};
use pafpose::simulator::{run_trial, summarize_trials, trial_id, NoiseSpec, PoseRanges, TrialConfig};
use pafpose::tensor_io::{
    read_annotations, read_camera, read_json, read_poses, read_skeletons, read_tensor, write_annotations, write_json,
    write_poses, write_skeletons, write_tensor, PoseRecord, to_json_string,
};

#[derive(Parser, Debug)]
#[command(name = "pafpose", version, about = "Keypoint and PAF based object pose estimation tools", args_override_self = true)]
pub struct Cli {
    /// JSON file supplying values for any flag; command-line flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for per-image stages (default: logical cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Base random seed
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// off, error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Select keypoints automatically or audit a model's keypoint set
    #[command(args_override_self = true)]
    Keypoints(KeypointsArgs),
    /// Synthesize ground-truth heatmap and PAF tensors from annotations
    #[command(args_override_self = true)]
    Labels(LabelsArgs),
    /// Group tensor peaks into instance skeletons
    #[command(args_override_self = true)]
    Parse(ParseArgs),
    /// Estimate poses from skeletons with RANSAC PnP
    #[command(args_override_self = true)]
    Pose(PoseArgs),
    /// Evaluate estimated poses against ground truth
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Run end-to-end synthetic trials
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Draw keypoints, skeletons and projected bounding boxes into a PNG
    #[command(args_override_self = true)]
    Overlay(overlay::OverlayArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KeypointMode {
    Auto,
    Audit,
}

#[derive(Args, Debug)]
struct KeypointsArgs {
    /// Model config JSON
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    mode: KeypointMode,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LabelParamArgs {
    /// Output stride in pixels
    #[arg(long)]
    stride: Option<usize>,
    /// Heatmap Gaussian standard deviation in pixels (default: 2 cells)
    #[arg(long)]
    sigma: Option<f64>,
    /// PAF half-width in pixels (default: 1.5 cells)
    #[arg(long)]
    paf_half_width: Option<f64>,
    /// Keypoints farther than this many cells outside the image are dropped
    #[arg(long)]
    margin_cells: Option<f64>,
}

impl LabelParamArgs {
    fn build(&self) -> LabelParams {
        let mut p = LabelParams::default();
        if let Some(s) = self.stride {
            p = LabelParams::with_stride(s);
        }
        p.sigma = self.sigma.unwrap_or(p.sigma);
        p.paf_half_width = self.paf_half_width.unwrap_or(p.paf_half_width);
        p.margin_cells = self.margin_cells.unwrap_or(p.margin_cells);
        p
    }
}

#[derive(Args, Debug)]
struct LabelsArgs {
    /// Annotation JSON file, or a directory of them
    #[arg(long)]
    annotations: PathBuf,
    /// Directory of model configs
    #[arg(long)]
    models: PathBuf,
    /// Output tensor file, or a directory when --annotations is a directory
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    params: LabelParamArgs,
}

#[derive(Args, Debug)]
struct ParseArgs {
    /// Tensor file, or a directory of `*.tensor` files
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long)]
    models: PathBuf,
    #[arg(long, default_value = "paf")]
    mode: ParseMode,
    /// Skeleton JSON file, or a directory when --tensor is a directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    detection_threshold: Option<f64>,
    #[arg(long)]
    nms_radius: Option<usize>,
    /// Samples along each candidate segment
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    paf_threshold: Option<f64>,
    #[arg(long)]
    align_threshold: Option<f64>,
    #[arg(long)]
    min_valid_fraction: Option<f64>,
    #[arg(long)]
    endpoint_inset_cells: Option<f64>,
    #[arg(long)]
    max_instances: Option<usize>,
}

impl ParseArgs {
    fn build(&self) -> ParseConfig {
        let d = ParseConfig::default();
        ParseConfig {
            mode: self.mode,
            detection_threshold: self.detection_threshold.unwrap_or(d.detection_threshold),
            nms_radius: self.nms_radius.unwrap_or(d.nms_radius),
            n_samples: self.samples.unwrap_or(d.n_samples),
            paf_threshold: self.paf_threshold.unwrap_or(d.paf_threshold),
            align_threshold: self.align_threshold.unwrap_or(d.align_threshold),
            min_valid_fraction: self.min_valid_fraction.unwrap_or(d.min_valid_fraction),
            endpoint_inset_cells: self.endpoint_inset_cells.unwrap_or(d.endpoint_inset_cells),
            max_instances_per_class: self.max_instances.or(d.max_instances_per_class),
        }
    }
}

#[derive(Args, Debug)]
struct PoseArgs {
    /// Skeleton JSON file, or a directory of them
    #[arg(long)]
    skeletons: PathBuf,
    #[arg(long)]
    models: PathBuf,
    /// Camera intrinsics JSON
    #[arg(long)]
    camera: PathBuf,
    /// Pose JSON file, or a directory when --skeletons is a directory
    #[arg(long)]
    out: PathBuf,
    /// RANSAC inlier threshold in pixels
    #[arg(long)]
    inlier_threshold: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    confidence: Option<f64>,
}

impl PoseArgs {
    fn build(&self) -> RansacConfig {
        let d = RansacConfig::default();
        RansacConfig {
            inlier_threshold: self.inlier_threshold.unwrap_or(d.inlier_threshold),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            confidence: self.confidence.unwrap_or(d.confidence),
            refine: d.refine,
        }
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory of pose JSON files named like the ground-truth files
    #[arg(long)]
    poses: PathBuf,
    /// Directory of annotation JSON files
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    models: PathBuf,
    /// Report JSON
    #[arg(long)]
    out: PathBuf,
    /// Per-class CSV summary; printed to stdout when omitted
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Maximum threshold for 3D metrics, meters
    #[arg(long)]
    max_threshold_3d: Option<f64>,
    /// Maximum threshold for 2D metrics, pixels
    #[arg(long)]
    max_threshold_2d: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    camera: PathBuf,
    /// Noise spec JSON; noiseless when omitted
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Instances per scene with randomly drawn classes
    #[arg(long, default_value_t = 1)]
    instances: usize,
    /// Fixed comma-separated class list per scene (overrides --instances)
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<u32>>,
    #[arg(long)]
    depth_min: Option<f64>,
    #[arg(long)]
    depth_max: Option<f64>,
    /// Minimum instance separation in object diameters
    #[arg(long)]
    min_separation: Option<f64>,
    /// Pipeline config JSON with `parse` and `ransac` sections
    #[arg(long)]
    pipeline: Option<PathBuf>,
    /// Do not write per-trial tensor files
    #[arg(long)]
    skip_tensors: bool,
    #[command(flatten)]
    params: LabelParamArgs,
}

fn load_models(dir: &Path) -> Result<ModelRegistry> {
    ModelRegistry::load_dir(dir).with_context(|| format!("loading models from {}", dir.display()))
}

/// `(stem, path)` of files in `dir` with extension `ext`, sorted by name.
fn list_files(dir: &Path, ext: &str) -> Result<Vec<(String, PathBuf)>> {
    let mut out: Vec<(String, PathBuf)> = fs::read_dir(dir)
        .with_context(|| format!("reading directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == ext))
        .filter_map(|p| Some((p.file_stem()?.to_str()?.to_string(), p)))
        .collect();
    out.sort();
    Ok(out)
}

/// Single file → single output, or directory → directory of outputs.
fn file_pairs(input: &Path, in_ext: &str, out: &Path, out_ext: &str) -> Result<Vec<(PathBuf, PathBuf)>> {
    if input.is_dir() {
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let files = list_files(input, in_ext)?;
        if files.is_empty() {
            bail!("no *.{in_ext} files in {}", input.display());
        }
        Ok(files.into_iter().map(|(stem, p)| (p, out.join(format!("{stem}.{out_ext}")))).collect())
    } else {
        Ok(vec![(input.to_path_buf(), out.to_path_buf())])
    }
}

#[derive(Serialize)]
struct KeypointReport {
    class_id: u32,
    name: String,
    mode: &'static str,
    keypoints: Vec<[f64; 3]>,
    spread: SpreadReport,
}

fn cmd_keypoints(a: &KeypointsArgs) -> Result<()> {
    let text = fs::read_to_string(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let cfg = ModelConfig::from_json(&text)?;
    let base = a.model.parent().unwrap_or(Path::new("."));
    let name = cfg.name.clone().unwrap_or_else(|| format!("obj_{:02}", cfg.class_id));
    let (mode, mesh, keypoints) = match a.mode {
        KeypointMode::Auto => {
            let path = if cfg.mesh_path.is_absolute() { cfg.mesh_path.clone() } else { base.join(&cfg.mesh_path) };
            let mesh = load_mesh(&path)?;
            let kps = farthest_point_keypoints(&mesh, NUM_KEYPOINTS)?;
            ("auto", mesh, kps)
        }
        KeypointMode::Audit => {
            let model = load_model_config(&a.model)?;
            let kps = model.keypoints().to_vec();
            ("audit", model.mesh().clone(), kps)
        }
    };
    let spread = keypoint_spread_report(&keypoints, &mesh)?;
    if !spread.off_surface.is_empty() {
        log::warn!("keypoints {:?} are not mesh vertices", spread.off_surface);
    }
    let report = KeypointReport {
        class_id: cfg.class_id,
        name,
        mode,
        keypoints: keypoints.iter().map(|k| [k.x, k.y, k.z]).collect(),
        spread,
    };
    write_json(&report, &a.out)?;
    Ok(())
}

fn cmd_labels(a: &LabelsArgs) -> Result<()> {
    let models = load_models(&a.models)?;
    let params = a.params.build();
    let pairs = file_pairs(&a.annotations, "json", &a.out, "tensor")?;
    pairs.par_iter().try_for_each(|(input, output)| -> Result<()> {
        let scene = read_annotations(input)?;
        let tensor = synthesize_labels(&scene, &models, &params).with_context(|| format!("labels for {}", input.display()))?;
        write_tensor(&tensor, output)?;
        Ok(())
    })
}

fn cmd_parse(a: &ParseArgs) -> Result<()> {
    let models = load_models(&a.models)?;
    let config = a.build();
    config.validate()?;
    let pairs = file_pairs(&a.tensor, "tensor", &a.out, "json")?;
    pairs.par_iter().try_for_each(|(input, output)| -> Result<()> {
        let tensor = read_tensor(input, None)?;
        let skeletons = parse(&tensor, &models, &config).with_context(|| format!("parsing {}", input.display()))?;
        log::info!("{}: {} skeletons", input.display(), skeletons.len());
        write_skeletons(&skeletons, output)?;
        Ok(())
    })
}

fn cmd_pose(a: &PoseArgs, seed: u64) -> Result<()> {
    let models = load_models(&a.models)?;
    let camera = read_camera(&a.camera)?;
    let config = a.build();
    let pairs = file_pairs(&a.skeletons, "json", &a.out, "json")?;
    pairs.par_iter().try_for_each(|(input, output)| -> Result<()> {
        let skeletons = read_skeletons(input)?;
        let batch = estimate_poses(&skeletons, &models, &camera, &config, seed);
        for f in &batch.failures {
            log::warn!("{}: skeleton {} (class {}): {}", input.display(), f.skeleton_index, f.class_id, f.error);
        }
        let records: Vec<PoseRecord> = batch.poses.iter().map(PoseRecord::from).collect();
        write_poses(&records, output)?;
        Ok(())
    })
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let models = load_models(&a.models)?;
    let d = EvalConfig::default();
    let config = EvalConfig {
        max_threshold_3d: a.max_threshold_3d.unwrap_or(d.max_threshold_3d),
        max_threshold_2d: a.max_threshold_2d.unwrap_or(d.max_threshold_2d),
        n_steps: a.steps.unwrap_or(d.n_steps),
    };
    let gt_files = list_files(&a.gt, "json")?;
    if gt_files.is_empty() {
        bail!("no annotation files in {}", a.gt.display());
    }
    let pose_files = list_files(&a.poses, "json")?;
    if let Some((stem, _)) = pose_files.iter().find(|(s, _)| !gt_files.iter().any(|(g, _)| g == s)) {
        bail!("pose file {stem}.json has no ground truth in {}", a.gt.display());
    }
    let images: Vec<ImageInput> = gt_files
        .par_iter()
        .map(|(stem, gt_path)| -> Result<ImageInput> {
            let ground_truth = read_annotations(gt_path)?;
            let pose_path = a.poses.join(format!("{stem}.json"));
            let estimates = if pose_path.exists() {
                read_poses(&pose_path)?.iter().map(|r| Ok((r.class_id, r.pose()?))).collect::<Result<Vec<_>>>()?
            } else {
                log::warn!("no pose file for {stem}; all instances count as missed");
                Vec::new()
            };
            Ok(ImageInput { image_id: stem.clone(), estimates, ground_truth })
        })
        .collect::<Result<_>>()?;
    let report = evaluate_dataset(&images, &models, &config)?;
    write_json(&report, &a.out)?;
    match &a.csv {
        Some(p) => fs::write(p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{}", report.to_csv()),
    }
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs, seed: u64) -> Result<()> {
    let models = load_models(&a.models)?;
    let camera = read_camera(&a.camera)?;
    let noise: NoiseSpec = match &a.noise {
        Some(p) => read_json(p)?,
        None => NoiseSpec::default(),
    };
    noise.validate()?;
    let pipeline: PipelineConfig = match &a.pipeline {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    let labels = a.params.build();
    let dr = PoseRanges { keypoint_margin_px: 3.0 * labels.sigma, ..PoseRanges::default() };
    let config = TrialConfig {
        n_instances: a.instances,
        classes: a.classes.clone(),
        ranges: PoseRanges {
            depth_min: a.depth_min.unwrap_or(dr.depth_min),
            depth_max: a.depth_max.unwrap_or(dr.depth_max),
            min_separation_diameters: a.min_separation.unwrap_or(dr.min_separation_diameters),
            ..dr
        },
        labels,
        pipeline,
        eval: EvalConfig::default(),
        seed,
    };
    let dirs = ["gt", "poses", "poses_heatmap", "skeleton_counts"].map(|d| a.out.join(d));
    for d in &dirs {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let tensor_dir = a.out.join("tensors");
    if !a.skip_tensors {
        fs::create_dir_all(&tensor_dir).with_context(|| format!("creating {}", tensor_dir.display()))?;
    }
    let outcomes = (0..a.trials)
        .into_par_iter()
        .map(|i| -> Result<_> {
            let (outcome, tensor) = run_trial(&models, &camera, &noise, &config, i)?;
            let id = trial_id(i);
            write_annotations(&outcome.scene, &dirs[0].join(format!("{id}.json")))?;
            write_poses(&outcome.paf.poses, &dirs[1].join(format!("{id}.json")))?;
            write_poses(&outcome.heatmap.poses, &dirs[2].join(format!("{id}.json")))?;
            let counts = serde_json::json!({
                "paf": outcome.paf.skeletons_per_class,
                "heatmap": outcome.heatmap.skeletons_per_class,
            });
            write_json(&counts, &dirs[3].join(format!("{id}.json")))?;
            if !a.skip_tensors {
                write_tensor(&tensor, &tensor_dir.join(format!("{id}.tensor")))?;
            }
            Ok(outcome)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = summarize_trials(&outcomes, &models, &noise, &config)?;
    fs::write(a.out.join("report.json"), to_json_string(&report)).context("writing report.json")?;
    fs::write(a.out.join("report_paf.csv"), report.paf.to_csv()).context("writing report_paf.csv")?;
    fs::write(a.out.join("report_heatmap.csv"), report.heatmap.to_csv()).context("writing report_heatmap.csv")?;
    println!("mode,class_id,headline_metric,auc_headline,n_missed");
    for (mode, r) in [("paf", &report.paf), ("heatmap", &report.heatmap)] {
        for c in &r.classes {
            println!("{mode},{},{},{:.1},{}", c.class_id, c.headline_metric, c.auc_headline, c.n_missed);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().context("configuring worker pool")?;
    }
    match &cli.command {
        Command::Keypoints(a) => cmd_keypoints(a),
        Command::Labels(a) => cmd_labels(a),
        Command::Parse(a) => cmd_parse(a),
        Command::Pose(a) => cmd_pose(a, cli.seed),
        Command::Eval(a) => cmd_eval(a),
        Command::Simulate(a) => cmd_simulate(a, cli.seed),
        Command::Overlay(a) => overlay::run(a),
    }
}

fn command_name(cli: &Cli) -> &'static str {
    match cli.command {
        Command::Keypoints(_) => "keypoints",
        Command::Labels(_) => "labels",
        Command::Parse(_) => "parse",
        Command::Pose(_) => "pose",
        Command::Eval(_) => "eval",
        Command::Simulate(_) => "simulate",
        Command::Overlay(_) => "overlay",
    }
}

fn report_error(command: Option<&str>, kind: &str, err: &anyhow::Error) {
    let mut chain: Vec<String> = Vec::new();
    for e in err.chain() {
        let msg = e.to_string();
        if !chain.last().is_some_and(|prev| prev.contains(&msg)) {
            chain.push(msg);
        }
    }
    let line = serde_json::json!({
        "error": chain.join(": "),
        "kind": kind,
        "command": command,
    });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let args = match config::merge_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            report_error(None, "config", &e);
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    return ExitCode::SUCCESS;
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    return ExitCode::from(2);
                }
                _ => {}
            }
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ").to_string();
            report_error(None, "usage", &anyhow::anyhow!(first));
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::new().filter_level(cli.log_level).target(env_logger::Target::Stderr).init();
    let name = command_name(&cli);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(Some(name), "runtime", &e);
            ExitCode::FAILURE
        }
    }
}
