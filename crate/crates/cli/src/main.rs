//! Command-line surface of the flowvo pipeline: pose recovery, triangulated
//! point clouds, visual odometry over sequence manifests, evaluation
//! metrics, synthetic scene generation and loss reports.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use flowvo_core::epipolar::recover_pose;
use flowvo_core::geometry::CameraIntrinsics;
use flowvo_core::io::{
    load_sequence, read_flow, read_intrinsics, read_pfm_depth, read_pfm_image, read_png16_depth,
    read_trajectory, write_flow, write_intrinsics, write_pfm_depth, write_pfm_image, write_ply,
    write_trajectory, SequenceManifest, TrajectoryFormat,
};
use flowvo_core::metrics::{
    ate_rmse, depth_metrics, flow_metrics, kitti_odometry_errors, sim3_align, DEFAULT_MAX_DT,
    ODOMETRY_LENGTHS,
};
use flowvo_core::pipeline::{analyze_pair, evaluate_pair_losses};
use flowvo_core::synthetic::{generate_scene, SceneConfig, SceneKind, Texture};
use flowvo_core::triangulation::Validity;
use flowvo_core::vo::{run_sequence, Trajectory};
use flowvo_core::{DepthMap, FlowField, PipelineConfig};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "flowvo",
    version,
    about = "Two-view geometry from dense flow: pose, triangulation, visual odometry and evaluation"
)]
struct Cli {
    /// Seed for every stochastic stage.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Intrinsics file: "fx fy cx cy [width height]".
    #[arg(long, global = true)]
    intrinsics: Option<PathBuf>,
    /// key=value configuration file overriding pipeline defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (or directory for `synth`).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrajFormatArg {
    Kitti,
    Tum,
}

impl From<TrajFormatArg> for TrajectoryFormat {
    fn from(v: TrajFormatArg) -> Self {
        match v {
            TrajFormatArg::Kitti => TrajectoryFormat::Kitti,
            TrajFormatArg::Tum => TrajectoryFormat::Tum,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthPreset {
    /// Bumpy height-field surface.
    Surface,
    /// Flat surface under in-plane motion (fully consistent observations).
    Plane,
}

#[derive(Subcommand)]
enum Command {
    /// Recover the relative pose of one flow pair.
    Pose {
        #[arg(long)]
        flow_fwd: PathBuf,
        #[arg(long)]
        flow_bwd: PathBuf,
    },
    /// Triangulate accurate correspondences of one pair into a PLY cloud.
    Triangulate {
        #[arg(long)]
        flow_fwd: PathBuf,
        #[arg(long)]
        flow_bwd: PathBuf,
    },
    /// Run visual odometry over a sequence manifest.
    Vo {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "kitti")]
        format: TrajFormatArg,
    },
    /// Segment-based odometry errors between two trajectories.
    EvalOdom {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum, default_value = "kitti")]
        format: TrajFormatArg,
    },
    /// Absolute trajectory error after 7DoF alignment.
    EvalAte {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum, default_value = "kitti")]
        format: TrajFormatArg,
    },
    /// Monocular depth metrics between two depth maps.
    EvalDepth {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Flow end-point error and bad-pixel fraction.
    EvalFlow {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Optional non-occluded mask (PFM, nonzero = non-occluded).
        #[arg(long)]
        noc: Option<PathBuf>,
    },
    /// Generate a synthetic scene as flow/depth/image/trajectory files.
    Synth {
        #[arg(long, value_enum, default_value = "surface")]
        preset: SynthPreset,
        #[arg(long, default_value_t = 2)]
        frames: usize,
        #[arg(long, default_value_t = 400)]
        n_points: usize,
        #[arg(long, default_value_t = 0.0)]
        noise_px: f64,
        #[arg(long, default_value_t = 0.0)]
        outlier_frac: f64,
        #[arg(long, default_value_t = 0.35)]
        baseline: f64,
        #[arg(long, default_value_t = 0.01)]
        rotation: f64,
    },
    /// Evaluate every training-loss term for one pair.
    Losses {
        #[arg(long)]
        flow_fwd: PathBuf,
        #[arg(long)]
        flow_bwd: PathBuf,
        #[arg(long)]
        image_a: PathBuf,
        #[arg(long)]
        image_b: PathBuf,
        #[arg(long)]
        depth_a: PathBuf,
        #[arg(long)]
        depth_b: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = path {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text)?;
    }
    Ok(cfg)
}

fn resolve_intrinsics(
    path: Option<&Path>,
    width: usize,
    height: usize,
) -> Result<CameraIntrinsics> {
    let path = path.ok_or_else(|| anyhow!("this subcommand requires --intrinsics"))?;
    let spec = read_intrinsics(path)?;
    Ok(spec.with_size(width, height)?)
}

fn read_depth_any(path: &Path) -> Result<DepthMap> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => Ok(read_pfm_depth(path)?),
        Some("png") => Ok(read_png16_depth(path)?),
        other => bail!("unsupported depth extension {other:?} (expected .pfm or .png)"),
    }
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    print!("{text}");
    if let Some(path) = output {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Prints metric rows as CSV followed by an aligned table; the CSV alone is
/// written to `--output` when given.
fn emit_metrics(output: Option<&Path>, rows: &[(&str, String)]) -> Result<()> {
    let mut csv = String::from("metric,value\n");
    for (name, value) in rows {
        let _ = writeln!(csv, "{name},{value}");
    }
    emit(output, &csv)?;
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
    println!();
    for (name, value) in rows {
        println!("{name:width$}  {value}");
    }
    Ok(())
}

fn load_pair(
    flow_fwd: &Path,
    flow_bwd: &Path,
    intrinsics: Option<&Path>,
) -> Result<(FlowField, FlowField, CameraIntrinsics)> {
    let fwd = read_flow(flow_fwd)?;
    let bwd = read_flow(flow_bwd)?;
    let k = resolve_intrinsics(intrinsics, fwd.width(), fwd.height())?;
    Ok((fwd, bwd, k))
}

fn main() -> Result<()> {
    // die quietly when a downstream pipe closes instead of panicking
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Pose { flow_fwd, flow_bwd } => {
            let (fwd, bwd, k) = load_pair(&flow_fwd, &flow_bwd, cli.intrinsics.as_deref())?;
            let rec = recover_pose(&fwd, &bwd, &k, cli.seed, &cfg)?;
            let pose = &rec.hypothesis.pose;
            let r = pose.rotation();
            let t = pose.translation();
            let mut text = String::new();
            let _ = writeln!(
                text,
                "rotation={} {} {} {} {} {} {} {} {}",
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)]
            );
            let _ = writeln!(text, "translation={} {} {}", t.x, t.y, t.z);
            let _ = writeln!(text, "support={}", rec.hypothesis.support);
            let _ = writeln!(
                text,
                "ransac_inliers={}",
                rec.ransac_inliers.iter().filter(|&&v| v).count()
            );
            let _ = writeln!(text, "samples={}", rec.correspondences.len());
            emit(cli.output.as_deref(), &text)?;
        }
        Command::Triangulate { flow_fwd, flow_bwd } => {
            let (fwd, bwd, k) = load_pair(&flow_fwd, &flow_bwd, cli.intrinsics.as_deref())?;
            let analysis = analyze_pair(&fwd, &bwd, &k, cli.seed, &cfg)?;
            let points: Vec<_> = analysis.triangulated.valid().map(|s| s.point).collect();
            let out = cli
                .output
                .clone()
                .unwrap_or_else(|| PathBuf::from("triangulated.ply"));
            write_ply(&out, &points)?;
            let count = |v: Validity| {
                analysis
                    .triangulated
                    .samples
                    .iter()
                    .filter(|s| s.validity == v)
                    .count()
            };
            println!("cloud={}", out.display());
            println!("valid={}", count(Validity::Ok));
            println!("small_angle={}", count(Validity::SmallAngle));
            println!("negative_depth={}", count(Validity::NegativeDepth));
            println!("out_of_bounds={}", count(Validity::OutOfBounds));
        }
        Command::Vo { manifest, format } => {
            let manifest = SequenceManifest::load(&manifest)?;
            let (frames, k, _) = load_sequence(&manifest)?;
            let result = run_sequence(frames, &k, cli.seed, &cfg)?;
            let out = cli
                .output
                .clone()
                .unwrap_or_else(|| PathBuf::from("trajectory.txt"));
            write_trajectory(&out, &result.trajectory, format.into())?;
            println!("trajectory={}", out.display());
            println!("frames={}", result.trajectory.len());
            for pair in &result.pairs {
                let method = match pair.method {
                    Some(flowvo_core::vo::PairMethod::Epipolar) => "epipolar",
                    Some(flowvo_core::vo::PairMethod::Pnp) => "pnp",
                    None => "fallback",
                };
                let mut line = format!(
                    "pair={} method={} mean_flow={:.3} scale={:.6}",
                    pair.index, method, pair.mean_flow, pair.scale
                );
                if let Some(err) = &pair.error {
                    let _ = write!(line, " error={err:?}");
                }
                println!("{line}");
            }
        }
        Command::EvalOdom { est, gt, format } => {
            let est = read_trajectory(&est, format.into())?;
            let gt = read_trajectory(&gt, format.into())?;
            let err = kitti_odometry_errors(&est, &gt, &ODOMETRY_LENGTHS, cfg.metrics.kitti_step)?;
            emit_metrics(
                cli.output.as_deref(),
                &[
                    ("t_err_percent", err.t_err_percent.to_string()),
                    ("r_err_deg_per_100m", err.r_err_deg_per_100m.to_string()),
                    ("segments", err.segments.to_string()),
                ],
            )?;
        }
        Command::EvalAte { est, gt, format } => {
            let est = read_trajectory(&est, format.into())?;
            let gt = read_trajectory(&gt, format.into())?;
            let ate = ate_rmse(&est, &gt, DEFAULT_MAX_DT)?;
            let (sim, _) = sim3_align(&est, &gt, DEFAULT_MAX_DT)?;
            emit_metrics(
                cli.output.as_deref(),
                &[
                    ("ate_rmse", ate.to_string()),
                    ("alignment_scale", sim.scale.to_string()),
                    ("gt_span", gt.span().to_string()),
                ],
            )?;
        }
        Command::EvalDepth { pred, gt } => {
            let pred = read_depth_any(&pred)?;
            let gt = read_depth_any(&gt)?;
            let m = depth_metrics(
                &pred,
                &gt,
                cfg.metrics.min_depth,
                cfg.metrics.depth_cap,
                cfg.metrics.median_scaling,
            )?;
            emit_metrics(
                cli.output.as_deref(),
                &[
                    ("abs_rel", m.abs_rel.to_string()),
                    ("sq_rel", m.sq_rel.to_string()),
                    ("rms", m.rms.to_string()),
                    ("rms_log", m.rms_log.to_string()),
                    ("delta1", m.delta1.to_string()),
                    ("delta2", m.delta2.to_string()),
                    ("delta3", m.delta3.to_string()),
                    ("pixels", m.pixels.to_string()),
                    ("median_scale", m.scale.to_string()),
                ],
            )?;
        }
        Command::EvalFlow { pred, gt, noc } => {
            let pred = read_flow(&pred)?;
            let gt = read_flow(&gt)?;
            let noc_map = noc
                .as_deref()
                .map(|p| -> Result<_> {
                    let img = read_pfm_image(p)?;
                    let data = img.plane(0).iter().map(|&v| f64::from(v > 0.0)).collect();
                    Ok(flowvo_core::ScoreMap::from_data(
                        img.width(),
                        img.height(),
                        data,
                    )?)
                })
                .transpose()?;
            let m = flow_metrics(&pred, &gt, None, noc_map.as_ref())?;
            emit_metrics(
                cli.output.as_deref(),
                &[
                    ("epe_all", m.epe_all.to_string()),
                    ("epe_noc", m.epe_noc.to_string()),
                    ("fl_percent", m.fl_percent.to_string()),
                    ("valid_pixels", m.valid_pixels.to_string()),
                ],
            )?;
        }
        Command::Synth {
            preset,
            frames,
            n_points,
            noise_px,
            outlier_frac,
            baseline,
            rotation,
        } => {
            let out_dir = cli
                .output
                .clone()
                .ok_or_else(|| anyhow!("synth requires --output <directory>"))?;
            synth(
                &out_dir,
                preset,
                frames,
                n_points,
                noise_px,
                outlier_frac,
                baseline,
                rotation,
                cli.seed,
            )?;
        }
        Command::Losses {
            flow_fwd,
            flow_bwd,
            image_a,
            image_b,
            depth_a,
            depth_b,
        } => {
            let (fwd, bwd, k) = load_pair(&flow_fwd, &flow_bwd, cli.intrinsics.as_deref())?;
            let image_a = read_pfm_image(&image_a)?;
            let image_b = read_pfm_image(&image_b)?;
            let depth_a = read_depth_any(&depth_a)?;
            let depth_b = read_depth_any(&depth_b)?;
            let (report, analysis) = evaluate_pair_losses(
                &image_a, &image_b, &fwd, &bwd, &depth_a, &depth_b, &k, cli.seed, &cfg,
            )?;
            let mut text = report.to_kv_text();
            let _ = writeln!(
                text,
                "triangulated_valid={}",
                analysis.triangulated.valid_count()
            );
            emit(cli.output.as_deref(), &text)?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn synth(
    out_dir: &Path,
    preset: SynthPreset,
    frames: usize,
    n_points: usize,
    noise_px: f64,
    outlier_frac: f64,
    baseline: f64,
    rotation: f64,
    seed: u64,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut scfg = match preset {
        SynthPreset::Surface => SceneConfig::surface(seed, n_points),
        SynthPreset::Plane => {
            let mut c = SceneConfig::surface(seed, n_points);
            c.kind = SceneKind::Surface {
                amplitude: 0.0,
                texture: Texture::WorldAffine,
            };
            c.lateral_motion_only = true;
            c
        }
    };
    scfg.n_frames = frames.max(2);
    scfg.baseline = baseline;
    scfg.rotation = match preset {
        SynthPreset::Plane => 0.0,
        _ => rotation,
    };
    let scene = generate_scene(&scfg)?;
    write_intrinsics(&out_dir.join("intrinsics.txt"), &scene.intrinsics)?;
    let gt = Trajectory::from_poses(scene.trajectory());
    write_trajectory(
        &out_dir.join("groundtruth.kitti"),
        &gt,
        TrajectoryFormat::Kitti,
    )?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "intrinsics intrinsics.txt");
    let _ = writeln!(manifest, "groundtruth groundtruth.kitti kitti");
    let mut rng = flowvo_core::DetRng::new(seed, "synth-noise");
    for i in 0..scene.n_frames() {
        let j = if i + 1 < scene.n_frames() { i + 1 } else { i - 1 };
        let obs = scene.render_pair_dense(i, j)?;
        let obs = if noise_px > 0.0 || outlier_frac > 0.0 {
            obs.corrupt_flow(noise_px, outlier_frac, &mut rng)
        } else {
            obs
        };
        let depth_name = format!("depth_{i:04}.pfm");
        let image_name = format!("image_{i:04}.pfm");
        write_pfm_depth(&out_dir.join(&depth_name), &obs.depth_a)?;
        write_pfm_image(&out_dir.join(&image_name), &obs.image_a)?;
        if i + 1 < scene.n_frames() {
            let fwd_name = format!("flow_{i:04}_fwd.flo");
            let bwd_name = format!("flow_{i:04}_bwd.flo");
            write_flow(&out_dir.join(&fwd_name), &obs.flow_ab)?;
            write_flow(&out_dir.join(&bwd_name), &obs.flow_ba)?;
            let _ = writeln!(manifest, "frame {fwd_name} {bwd_name} {depth_name} {i}.0");
        } else {
            let _ = writeln!(manifest, "frame - - {depth_name} {i}.0");
        }
    }
    fs::write(out_dir.join("manifest.txt"), manifest)?;
    println!("scene={}", out_dir.display());
    println!("frames={}", scene.n_frames());
    Ok(())
}
