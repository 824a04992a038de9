//! Visual-odometry inference: per-pair relative pose from flow, scale
//! alignment of the translation to the monocular-depth scale, PnP fallback
//! for low-parallax pairs, and global trajectory accumulation.

use crate::config::PipelineConfig;
use crate::epipolar::EpipolarError;
use crate::flow::FlowError;
use crate::geometry::RigidPose;
use crate::grid::{DepthMap, FlowField};
use crate::loss::{fit_scale, paired_depth_samples, LossError};
use crate::pipeline::analyze_pair;
use crate::pnp::{solve_pnp_ransac, PnpError};
use crate::rng::DetRng;
use crate::triangulation::TriangulationError;
use crate::{geometry::unproject, CameraIntrinsics};
use nalgebra::{Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VoError {
    #[error("scale fit needs {need} valid triangulated samples, got {got}")]
    ScaleFitFailure { got: usize, need: usize },
    #[error("timestamps must be strictly increasing")]
    BadTimestamps,
    #[error("sequence needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("frame {0} is missing its forward/backward flow")]
    MissingFlow(usize),
    #[error(transparent)]
    Epipolar(#[from] EpipolarError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Triangulation(#[from] TriangulationError),
    #[error(transparent)]
    Pnp(#[from] PnpError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// One timestamped camera-to-world pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryNode {
    pub time: f64,
    pub pose: RigidPose,
}

/// Ordered, strictly increasing timestamped pose sequence. Trajectories
/// produced by [`run_sequence`] are anchored at the identity by convention.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    nodes: Vec<TrajectoryNode>,
}

impl Trajectory {
    pub fn from_nodes(nodes: Vec<TrajectoryNode>) -> Result<Self, VoError> {
        if nodes.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(VoError::BadTimestamps);
        }
        Ok(Self { nodes })
    }

    pub fn from_poses(poses: &[RigidPose]) -> Self {
        Self {
            nodes: poses
                .iter()
                .enumerate()
                .map(|(i, &pose)| TrajectoryNode {
                    time: i as f64,
                    pose,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TrajectoryNode] {
        &self.nodes
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.nodes.iter().map(|n| n.pose.translation()).collect()
    }

    /// Largest distance between any two positions.
    pub fn span(&self) -> f64 {
        let pos = self.positions();
        let mut best = 0.0f64;
        for i in 0..pos.len() {
            for j in (i + 1)..pos.len() {
                best = best.max((pos[i] - pos[j]).norm());
            }
        }
        best
    }

    /// Applies a similarity transform to every node (positions scaled and
    /// moved, orientations rotated).
    pub fn transformed(&self, sim: &crate::metrics::Sim3Transform) -> Self {
        Self {
            nodes: self
                .nodes
                .iter()
                .map(|n| TrajectoryNode {
                    time: n.time,
                    pose: RigidPose::from_parts_unchecked(
                        sim.rotation * n.pose.rotation(),
                        sim.apply(n.pose.translation()),
                    ),
                })
                .collect(),
        }
    }

    /// Keeps every `stride`-th node, starting at the first.
    pub fn strided(&self, stride: usize) -> Self {
        Self {
            nodes: self.nodes.iter().step_by(stride.max(1)).copied().collect(),
        }
    }
}

/// Which estimator produced a pair's relative pose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMethod {
    Epipolar,
    Pnp,
}

/// Relative pose of one frame pair with its translation expressed in the
/// monocular depth's scale, plus diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEstimate {
    /// Maps frame-a coordinates to frame-b coordinates.
    pub pose_ab: RigidPose,
    pub method: PairMethod,
    /// Factor applied to the unit-norm epipolar translation (1 for PnP).
    pub scale: f64,
    pub inliers: usize,
    pub valid_triangulated: usize,
    pub mean_flow: f64,
}

/// Epipolar route: recover the unit-scale pose from flow, triangulate
/// resampled inlier correspondences, fit the scale aligning predicted depth
/// onto the triangulated depths, and divide the translation by that fit so
/// the pose lives in the depth map's scale.
pub fn pair_pose_scaled(
    flow_ab: &FlowField,
    flow_ba: &FlowField,
    depth_a: &DepthMap,
    k: &CameraIntrinsics,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<PairEstimate, VoError> {
    let analysis = analyze_pair(flow_ab, flow_ba, k, seed, cfg)?;
    let (pred, tri_depths) = paired_depth_samples(depth_a, &analysis.triangulated);
    if pred.len() < cfg.vo.min_tri_samples {
        return Err(VoError::ScaleFitFailure {
            got: pred.len(),
            need: cfg.vo.min_tri_samples,
        });
    }
    let s_fit = fit_scale(&pred, &tri_depths)?;
    let scale = 1.0 / s_fit;
    let pose = analysis.recovery.hypothesis.pose.scaled_translation(scale);
    Ok(PairEstimate {
        pose_ab: pose,
        method: PairMethod::Epipolar,
        scale,
        inliers: analysis
            .recovery
            .ransac_inliers
            .iter()
            .filter(|&&v| v)
            .count(),
        valid_triangulated: analysis.triangulated.valid_count(),
        mean_flow: flow_ab.mean_magnitude(),
    })
}

/// PnP route for low-parallax pairs: lift valid-depth pixels to 3D, pair
/// them with their flow targets and solve the pose directly in metric scale.
pub fn pnp_pose(
    depth_a: &DepthMap,
    flow_ab: &FlowField,
    k: &CameraIntrinsics,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<PairEstimate, VoError> {
    let (w, h) = (depth_a.width(), depth_a.height());
    let mut candidates: Vec<(Vector3<f64>, Vector2<f64>)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let d = match depth_a.get(x, y) {
                Some(d) => d,
                None => continue,
            };
            let pix = Vector2::new(x as f64, y as f64);
            let f = flow_ab.at(x, y);
            let target = Vector2::new(pix.x + f[0], pix.y + f[1]);
            candidates.push((unproject(pix, d, k).expect("positive depth"), target));
        }
    }
    if candidates.len() > cfg.pnp.sample_n {
        let mut rng = DetRng::new(seed, "pnp-sampling");
        let idx = rng.sample_indices(candidates.len(), cfg.pnp.sample_n);
        candidates = idx.into_iter().map(|i| candidates[i]).collect();
    }
    let points: Vec<Vector3<f64>> = candidates.iter().map(|c| c.0).collect();
    let pixels: Vec<Vector2<f64>> = candidates.iter().map(|c| c.1).collect();
    let mut rng = DetRng::new(seed, "pnp-ransac");
    let result = solve_pnp_ransac(&points, &pixels, k, &cfg.pnp, &mut rng)?;
    Ok(PairEstimate {
        pose_ab: result.pose,
        method: PairMethod::Pnp,
        scale: 1.0,
        inliers: result.inliers.iter().filter(|&&v| v).count(),
        valid_triangulated: 0,
        mean_flow: flow_ab.mean_magnitude(),
    })
}

/// Per-frame input of a sequence: flow to the next frame (forward and
/// backward) and the frame's depth map. The final frame needs no flow.
#[derive(Debug, Clone)]
pub struct FrameInput {
    pub flow_fwd: Option<FlowField>,
    pub flow_bwd: Option<FlowField>,
    pub depth: DepthMap,
    pub time: f64,
}

/// Outcome of one consecutive pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairReport {
    pub index: usize,
    pub method: Option<PairMethod>,
    /// True when the pair failed and constant-velocity extrapolation was
    /// substituted.
    pub fallback: bool,
    pub error: Option<String>,
    pub scale: f64,
    pub mean_flow: f64,
}

#[derive(Debug, Clone)]
pub struct SequenceResult {
    pub trajectory: Trajectory,
    pub pairs: Vec<PairReport>,
}

/// Runs the full inference pipeline over a frame sequence: every consecutive
/// pair is estimated with the epipolar route, or with PnP when the mean flow
/// magnitude falls below `cfg.vo.min_flow_px`; relative poses are composed
/// into a camera-to-world trajectory anchored at the identity. Failed pairs
/// fall back to constant-velocity extrapolation and are flagged.
pub fn run_sequence(
    frames: impl IntoIterator<Item = FrameInput>,
    k: &CameraIntrinsics,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<SequenceResult, VoError> {
    let mut nodes: Vec<TrajectoryNode> = Vec::new();
    let mut pairs: Vec<PairReport> = Vec::new();
    let mut global = RigidPose::identity();
    let mut last_rel = RigidPose::identity();
    let mut prev: Option<FrameInput> = None;
    let mut count = 0usize;

    for frame in frames {
        count += 1;
        if let Some(prev_frame) = prev.take() {
            let index = pairs.len();
            if !nodes.is_empty() && frame.time <= nodes.last().expect("nonempty").time {
                return Err(VoError::BadTimestamps);
            }
            let flow_fwd = prev_frame
                .flow_fwd
                .as_ref()
                .ok_or(VoError::MissingFlow(index))?;
            let flow_bwd = prev_frame
                .flow_bwd
                .as_ref()
                .ok_or(VoError::MissingFlow(index))?;
            let pair_seed = crate::rng::derive_seed(seed, index as u64);
            let mean_flow = flow_fwd.mean_magnitude();
            let attempt = if mean_flow < cfg.vo.min_flow_px {
                pnp_pose(&prev_frame.depth, flow_fwd, k, pair_seed, cfg)
            } else {
                pair_pose_scaled(flow_fwd, flow_bwd, &prev_frame.depth, k, pair_seed, cfg)
            };
            let report = match attempt {
                Ok(est) => {
                    last_rel = est.pose_ab.invert();
                    PairReport {
                        index,
                        method: Some(est.method),
                        fallback: false,
                        error: None,
                        scale: est.scale,
                        mean_flow,
                    }
                }
                Err(err) => PairReport {
                    index,
                    method: None,
                    fallback: true,
                    error: Some(err.to_string()),
                    scale: 1.0,
                    mean_flow,
                },
            };
            pairs.push(report);
            global = global.compose(&last_rel);
            if global.orthonormality_drift() > 1e-7 {
                global = global.renormalized();
            }
        } else {
            nodes.push(TrajectoryNode {
                time: frame.time,
                pose: RigidPose::identity(),
            });
            prev = Some(frame);
            continue;
        }
        nodes.push(TrajectoryNode {
            time: frame.time,
            pose: global,
        });
        prev = Some(frame);
    }
    if count < 2 {
        return Err(VoError::TooFewFrames(count));
    }
    Ok(SequenceResult {
        trajectory: Trajectory { nodes },
        pairs,
    })
}
