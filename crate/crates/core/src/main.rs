use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use gapart::config::{load_config, RunConfig};
use gapart::error::{Error, Result};
use gapart::ingest::{back_project, farthest_point_sample, PinholeIntrinsics};
use gapart::io::{self, blob, ply, png};
use gapart::manip::{DrawerIntent, GraspOptions};
use gapart::pipeline::{self, PartsDoc, ProposalsDoc};
use gapart::adversarial::demo::adv_demo_train;
use gapart::types::JointKind;

/// Part segmentation post-processing, pose fitting, evaluation and
/// manipulation planning.
#[derive(Parser)]
#[command(name = "gapart", version, propagate_version = true)]
struct Cli {
    /// TOML run configuration; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Back-project a depth PNG (and optional colour PNG) to a PLY cloud.
    Ingest(IngestArgs),
    /// Farthest point sampling of a PLY cloud.
    Fps(FpsArgs),
    /// Group per-point predictions into part proposals.
    Segment(SegmentArgs),
    /// Fit a pose and joint to every proposal from NPCS predictions.
    FitPose(FitPoseArgs),
    /// Instance segmentation AP against a labelled PLY cloud.
    EvalSeg(EvalSegArgs),
    /// Pose and joint errors against ground-truth parts.
    EvalPose(EvalPoseArgs),
    /// Grasp and actuation trajectory for one fitted part.
    Plan(PlanArgs),
    /// Train the synthetic domain-adversarial demo and report probe accuracy.
    AdvDemo(AdvDemoArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// 16-bit greyscale depth PNG.
    #[arg(long)]
    depth: Option<PathBuf>,
    /// 8-bit colour PNG of the same size.
    #[arg(long)]
    color: Option<PathBuf>,
    /// JSON {fx, fy, cx, cy, width, height}.
    #[arg(long)]
    intrinsics: Option<PathBuf>,
    /// Metres per raw depth unit.
    #[arg(long)]
    depth_scale: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FpsArgs {
    #[arg(long)]
    cloud: Option<PathBuf>,
    #[arg(long)]
    num_points: usize,
    /// Index of the first sample.
    #[arg(long, default_value_t = 0)]
    start: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the selected indices as JSON.
    #[arg(long)]
    indices_out: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// float32 prediction blob; its sidecar defaults to the same path with
    /// a .json extension.
    #[arg(long)]
    pred: Option<PathBuf>,
    #[arg(long)]
    pred_meta: Option<PathBuf>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    min_points: Option<usize>,
    #[arg(long)]
    fg_thresh: Option<f64>,
    #[arg(long)]
    score_thresh: Option<f64>,
    #[arg(long)]
    nms_iou: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitPoseArgs {
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// float32 NPCS blob with channels npcs_x, npcs_y, npcs_z.
    #[arg(long)]
    npcs: Option<PathBuf>,
    #[arg(long)]
    npcs_meta: Option<PathBuf>,
    #[arg(long)]
    proposals: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalSegArgs {
    #[arg(long)]
    proposals: Option<PathBuf>,
    /// PLY cloud with semantic_label and instance_label.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalPoseArgs {
    /// Predicted parts, as written by fit-pose.
    #[arg(long)]
    parts: Option<PathBuf>,
    /// Ground-truth parts in the same format.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Intent {
    Open,
    Fetch,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    parts: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    part_id: usize,
    /// Motion range: metres for prismatic joints, degrees for revolute ones.
    #[arg(long)]
    range: f64,
    /// Drawer strategy.
    #[arg(long, value_enum, default_value = "open")]
    intent: Intent,
    /// Id of a handle part to grasp instead of the part itself.
    #[arg(long)]
    handle_id: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AdvDemoArgs {
    #[arg(long)]
    domains: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn need(flag: Option<PathBuf>, from_config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| from_config.clone())
        .ok_or_else(|| Error::Config(format!("no {name} path given (flag --{name} or [paths] {name})")))
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn write_doc<T: Serialize>(path: &Path, doc: &T) -> Result<()> {
    io::write_json(path, doc)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    let paths = cfg.paths.clone();
    match cli.command {
        Command::Ingest(a) => {
            set(&mut cfg.ingest.depth_scale, a.depth_scale);
            cfg.validate()?;
            let depth_path = need(a.depth, &paths.depth, "depth")?;
            let intr: PinholeIntrinsics = io::read_plain_json(&need(a.intrinsics, &paths.intrinsics, "intrinsics")?)?;
            let out = need(a.out, &paths.out, "out")?;
            let depth = png::load_depth_png(&depth_path, cfg.ingest.depth_scale)?;
            let color = match a.color.or(paths.color) {
                Some(p) => Some(png::load_color_png(&p)?),
                None => None,
            };
            let cloud = back_project(&depth, &intr, color.as_ref())?;
            ply::write_ply(&out, &cloud)
        }
        Command::Fps(a) => {
            let cloud = ply::read_ply(&need(a.cloud, &paths.cloud, "cloud")?)?;
            let out = need(a.out, &paths.out, "out")?;
            let (sampled, indices) = farthest_point_sample(&cloud, a.num_points, a.start)?;
            if let Some(p) = a.indices_out {
                #[derive(Serialize)]
                struct Indices<'a> {
                    indices: &'a [usize],
                }
                write_doc(&p, &Indices { indices: &indices })?;
            }
            ply::write_ply(&out, &sampled)
        }
        Command::Segment(a) => {
            set(&mut cfg.grouping.radius, a.radius);
            set(&mut cfg.grouping.min_points, a.min_points);
            set(&mut cfg.filter.min_points, a.min_points);
            set(&mut cfg.filter.fg_thresh, a.fg_thresh);
            set(&mut cfg.filter.score_thresh, a.score_thresh);
            set(&mut cfg.filter.nms_iou, a.nms_iou);
            cfg.validate()?;
            let cloud = ply::read_ply(&need(a.cloud, &paths.cloud, "cloud")?)?;
            let pred_path = need(a.pred, &paths.pred, "pred")?;
            let meta = a.pred_meta.unwrap_or_else(|| blob::sidecar_path(&pred_path));
            let out = need(a.out, &paths.out, "out")?;
            let pred = blob::prediction_from_blob(&blob::read_blob(&pred_path, &meta)?)?;
            let doc = pipeline::segment(&cloud, &pred, &cfg.grouping, &cfg.filter)?;
            info!("{} proposals", doc.proposals.len());
            write_doc(&out, &doc)
        }
        Command::FitPose(a) => {
            set(&mut cfg.ransac.iterations, a.iterations);
            set(&mut cfg.ransac.seed, a.seed);
            cfg.validate()?;
            let cloud = ply::read_ply(&need(a.cloud, &paths.cloud, "cloud")?)?;
            let npcs_path = need(a.npcs, &paths.npcs, "npcs")?;
            let meta = a.npcs_meta.unwrap_or_else(|| blob::sidecar_path(&npcs_path));
            let proposals: ProposalsDoc = io::read_json(&need(a.proposals, &paths.proposals, "proposals")?)?;
            let out = need(a.out, &paths.out, "out")?;
            let npcs = blob::npcs_from_blob(&blob::read_blob(&npcs_path, &meta)?)?;
            let doc = pipeline::fit_poses(&cloud, &npcs, &proposals, &cfg.ransac)?;
            write_doc(&out, &doc)
        }
        Command::EvalSeg(a) => {
            let proposals: ProposalsDoc = io::read_json(&need(a.proposals, &paths.proposals, "proposals")?)?;
            let gt = ply::read_ply(&need(a.gt, &paths.gt, "gt")?)?;
            let out = need(a.out, &paths.out, "out")?;
            write_doc(&out, &pipeline::eval_segmentation(&proposals, &gt)?)
        }
        Command::EvalPose(a) => {
            let pred: PartsDoc = io::read_json(&need(a.parts, &paths.parts, "parts")?)?;
            let gt: PartsDoc = io::read_json(&need(a.gt, &paths.gt, "gt")?)?;
            let out = need(a.out, &paths.out, "out")?;
            write_doc(&out, &pipeline::eval_poses(&pred, &gt)?)
        }
        Command::Plan(a) => {
            cfg.validate()?;
            let parts: PartsDoc = io::read_json(&need(a.parts, &paths.parts, "parts")?)?;
            let out = need(a.out, &paths.out, "out")?;
            let find = |id: usize| {
                parts
                    .parts
                    .iter()
                    .find(|p| p.id == id)
                    .ok_or_else(|| Error::Input(format!("no part with id {id}")))
            };
            let part = find(a.part_id)?;
            let handle = match a.handle_id {
                Some(h) => {
                    let h = find(h)?;
                    Some((h.pose, h.label))
                }
                None => None,
            };
            let opts = GraspOptions {
                drawer_intent: match a.intent {
                    Intent::Open => DrawerIntent::Open,
                    Intent::Fetch => DrawerIntent::Fetch,
                },
                handle,
                ..GraspOptions::default()
            };
            let range = match part.joint.kind {
                JointKind::Revolute => a.range.to_radians(),
                _ => a.range,
            };
            write_doc(&out, &pipeline::plan(part, range, &opts, &cfg.trajectory)?)
        }
        Command::AdvDemo(a) => {
            let demo = &mut cfg.adversarial;
            set(&mut demo.domains, a.domains);
            set(&mut demo.classes, a.classes);
            set(&mut demo.lambda, a.lambda);
            set(&mut demo.gamma, a.gamma);
            set(&mut demo.epochs, a.epochs);
            set(&mut demo.seed, a.seed);
            cfg.validate()?;
            let out = need(a.out, &paths.out, "out")?;
            let report = adv_demo_train(&cfg.adversarial)?;
            info!(
                "probe domain accuracy {:.3}, task accuracy {:.3}",
                report.probe_domain_acc, report.task_acc
            );
            write_doc(&out, &report)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
