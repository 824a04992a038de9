//! Pair-level orchestration shared by the VO pipeline and the loss
//! evaluation: pose recovery, inlier-weighted resampling and triangulation.

use crate::config::PipelineConfig;
use crate::epipolar::{recover_pose, PoseRecovery};
use crate::flow::{sample_correspondences, CorrespondenceSet};
use crate::geometry::CameraIntrinsics;
use crate::grid::{DepthMap, FlowField, Image};
use crate::loss::{total_loss, LossInputs, LossReport};
use crate::rng::DetRng;
use crate::triangulation::{midpoint_triangulate, TriangulatedSet};
use crate::vo::VoError;

/// Pose recovery plus the triangulated structure of the resampled accurate
/// correspondences (ranked by `Ms * Mr`, masked by occlusion).
#[derive(Debug, Clone)]
pub struct PairAnalysis {
    pub recovery: PoseRecovery,
    pub triangulation_samples: CorrespondenceSet,
    pub triangulated: TriangulatedSet,
}

/// Runs the correspondence → pose → triangulation chain for one pair.
pub fn analyze_pair(
    flow_ab: &FlowField,
    flow_ba: &FlowField,
    k: &CameraIntrinsics,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<PairAnalysis, VoError> {
    let recovery = recover_pose(flow_ab, flow_ba, k, seed, cfg)?;
    let tri_score = recovery.score.product(&recovery.inlier_score);
    let mut rng = DetRng::new(seed, "triangulation-sampling");
    let triangulation_samples = sample_correspondences(
        flow_ab,
        &tri_score,
        &recovery.occlusion,
        cfg.sampling.top_frac,
        cfg.sampling.n,
        &mut rng,
    )?;
    let triangulated = midpoint_triangulate(
        &triangulation_samples,
        &recovery.hypothesis.pose,
        k,
        &cfg.triangulation,
    )?;
    Ok(PairAnalysis {
        recovery,
        triangulation_samples,
        triangulated,
    })
}

/// Full training-objective evaluation for one pair: recovers the pose and
/// reliability maps from the flows, triangulates, and evaluates every loss
/// term against the given images and depth predictions.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_pair_losses(
    image_a: &Image,
    image_b: &Image,
    flow_ab: &FlowField,
    flow_ba: &FlowField,
    depth_a: &DepthMap,
    depth_b: &DepthMap,
    k: &CameraIntrinsics,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<(LossReport, PairAnalysis), VoError> {
    let analysis = analyze_pair(flow_ab, flow_ba, k, seed, cfg)?;
    let inputs = LossInputs {
        image_a,
        image_b,
        flow_ab,
        depth_a,
        depth_b,
        pose_ab: &analysis.recovery.hypothesis.pose,
        intrinsics: k,
        occlusion: &analysis.recovery.occlusion,
        inlier_score: &analysis.recovery.inlier_score,
        epipolar_distance: &analysis.recovery.epipolar_distance,
        triangulated: &analysis.triangulated,
    };
    let report = total_loss(&inputs, &cfg.loss)?;
    Ok((report, analysis))
}
