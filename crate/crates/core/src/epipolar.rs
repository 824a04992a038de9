//! Fundamental-matrix estimation from sampled flow correspondences and
//! relative-pose recovery.
//!
//! The estimation chain follows the classic recipe: Hartley-normalized
//! 8-point solves inside a RANSAC loop with symmetric epipolar distance,
//! rank-2 enforcement, then essential decomposition `E = K^T F K` into four
//! candidate poses disambiguated by the cheirality condition (triangulated
//! points must lie in front of both cameras).

use crate::config::{PipelineConfig, RansacConfig, TriangulationConfig};
use crate::flow::{
    fb_distance_and_score, occlusion_mask, sample_correspondences, CorrespondenceSet, FlowError,
};
use crate::geometry::{skew_symmetric, CameraIntrinsics, RigidPose};
use crate::grid::{FlowField, ScoreMap};
use crate::rng::DetRng;
use crate::triangulation::{midpoint_triangulate, TriangulationError};
use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpipolarError {
    #[error("need at least 8 correspondences, got {0}")]
    InsufficientCorrespondences(usize),
    #[error("correspondence configuration is degenerate (non-unique solution)")]
    DegenerateConfiguration,
    #[error("no RANSAC hypothesis reached 8 inliers within {iterations} iterations")]
    RansacFailure { iterations: usize },
    #[error("cheirality check ambiguous: best support {best}, runner-up {second}")]
    CheiralityAmbiguity { best: usize, second: usize },
    #[error("flow dimensions {0}x{1} do not match intrinsics {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Triangulation(#[from] TriangulationError),
}

/// Rank-2 fundamental matrix with unit Frobenius norm and a deterministic
/// sign (the entry of largest magnitude is positive).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalMatrix(Matrix3<f64>);

impl FundamentalMatrix {
    /// Enforces rank 2, unit norm and the sign convention on an arbitrary
    /// matrix.
    pub fn from_matrix(m: Matrix3<f64>) -> Self {
        let (u, s, v_t) = svd3_sorted(&m);
        let rank2 = u * Matrix3::from_diagonal(&Vector3::new(s[0], s[1], 0.0)) * v_t;
        Self::from_rank2_matrix(rank2)
    }

    /// Rescales and sign-fixes a matrix that is already rank 2. Skipping the
    /// SVD here matters for precision: a fundamental matrix in pixel units
    /// has entries spanning many orders of magnitude, and reconstructing it
    /// from a 3x3 SVD perturbs the small entries that carry the geometry.
    pub fn from_rank2_matrix(m: Matrix3<f64>) -> Self {
        let mut f = m / m.norm();
        let mut largest = 0.0f64;
        let mut sign = 1.0;
        for v in f.iter() {
            if v.abs() > largest {
                largest = v.abs();
                sign = v.signum();
            }
        }
        f *= sign;
        Self(f)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Algebraic residual `h(p_b)^T F h(p_a)`.
    pub fn algebraic_residual(&self, p_a: Vector2<f64>, p_b: Vector2<f64>) -> f64 {
        let line = self.0 * p_a.push(1.0);
        p_b.push(1.0).dot(&line)
    }

    /// Symmetric epipolar distance: the larger of the two point-to-line
    /// distances. Infinite when either epipolar line degenerates.
    pub fn symmetric_distance(&self, p_a: Vector2<f64>, p_b: Vector2<f64>) -> f64 {
        let ha = p_a.push(1.0);
        let hb = p_b.push(1.0);
        let l_b = self.0 * ha;
        let l_a = self.0.transpose() * hb;
        let val = hb.dot(&l_b).abs();
        let nb = l_b.x.hypot(l_b.y);
        let na = l_a.x.hypot(l_a.y);
        if nb < 1e-12 || na < 1e-12 {
            return f64::INFINITY;
        }
        (val / nb).max(val / na)
    }
}

/// Fundamental matrix implied by a relative pose and intrinsics:
/// `F = K^-T [t]x R K^-1`.
pub fn fundamental_from_pose(pose_ab: &RigidPose, k: &CameraIntrinsics) -> FundamentalMatrix {
    let e = skew_symmetric(pose_ab.translation()) * pose_ab.rotation();
    let k_inv = k.inverse_matrix();
    FundamentalMatrix::from_rank2_matrix(k_inv.transpose() * e * k_inv)
}

/// Candidate relative pose selected by cheirality, with unit-norm
/// translation. `inlier_mask[i]` records whether correspondence `i`
/// triangulated in front of both cameras under the winner.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseHypothesis {
    pub pose: RigidPose,
    pub support: usize,
    pub inlier_mask: Vec<bool>,
}

fn svd3_sorted(m: &Matrix3<f64>) -> (Matrix3<f64>, Vector3<f64>, Matrix3<f64>) {
    let svd = m.svd(true, true);
    let u = svd.u.expect("3x3 svd u");
    let v_t = svd.v_t.expect("3x3 svd v_t");
    let s = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
    let mut u_s = Matrix3::zeros();
    let mut vt_s = Matrix3::zeros();
    let mut s_s = Vector3::zeros();
    for (dst, &src) in order.iter().enumerate() {
        u_s.set_column(dst, &u.column(src));
        vt_s.set_row(dst, &v_t.row(src));
        s_s[dst] = s[src];
    }
    (u_s, s_s, vt_s)
}

struct Normalization {
    transform: Matrix3<f64>,
}

fn hartley_normalization(points: &[Vector2<f64>]) -> Option<Normalization> {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector2::zeros(), |acc, p| acc + p) / n;
    let mean_dist = points.iter().map(|p| (p - centroid).norm()).sum::<f64>() / n;
    if mean_dist < 1e-12 {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Some(Normalization {
        transform: Matrix3::new(
            s,
            0.0,
            -s * centroid.x,
            0.0,
            s,
            -s * centroid.y,
            0.0,
            0.0,
            1.0,
        ),
    })
}

/// Normalized 8-point solve over explicit pixel pairs.
fn solve_eight_point(
    pa: &[Vector2<f64>],
    pb: &[Vector2<f64>],
) -> Result<FundamentalMatrix, EpipolarError> {
    let n = pa.len();
    if n < 8 {
        return Err(EpipolarError::InsufficientCorrespondences(n));
    }
    let norm_a = hartley_normalization(pa).ok_or(EpipolarError::DegenerateConfiguration)?;
    let norm_b = hartley_normalization(pb).ok_or(EpipolarError::DegenerateConfiguration)?;
    let ta = norm_a.transform;
    let tb = norm_b.transform;

    // rows of the constraint matrix, padded to at least 9 so the full
    // right-singular basis (including the null direction) is available
    let rows = n.max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for i in 0..n {
        let qa = ta * pa[i].push(1.0);
        let qb = tb * pb[i].push(1.0);
        let (x, y) = (qa.x, qa.y);
        let (xp, yp) = (qb.x, qb.y);
        a[(i, 0)] = xp * x;
        a[(i, 1)] = xp * y;
        a[(i, 2)] = xp;
        a[(i, 3)] = yp * x;
        a[(i, 4)] = yp * y;
        a[(i, 5)] = yp;
        a[(i, 6)] = x;
        a[(i, 7)] = y;
        a[(i, 8)] = 1.0;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("svd v_t");
    let s = &svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap());
    // a rank gap at the second-smallest singular value means the nullspace
    // has more than one dimension: no unique solution
    let sigma_max = s[order[0]];
    if sigma_max <= 0.0 || s[order[7]] < 1e-10 * sigma_max {
        return Err(EpipolarError::DegenerateConfiguration);
    }
    let fvec = v_t.row(order[8]);
    let f_norm = Matrix3::new(
        fvec[0], fvec[1], fvec[2], fvec[3], fvec[4], fvec[5], fvec[6], fvec[7], fvec[8],
    );
    // rank-2 enforcement happens in the normalized frame; denormalization
    // preserves the rank exactly
    let (u, sv, v_t3) = svd3_sorted(&f_norm);
    let f_rank2 = u * Matrix3::from_diagonal(&Vector3::new(sv[0], sv[1], 0.0)) * v_t3;
    Ok(FundamentalMatrix::from_rank2_matrix(
        tb.transpose() * f_rank2 * ta,
    ))
}

/// Normalized 8-point least-squares fit over all correspondences.
pub fn eight_point(corrs: &CorrespondenceSet) -> Result<FundamentalMatrix, EpipolarError> {
    let pa: Vec<Vector2<f64>> = corrs.iter().map(|c| c.p_a).collect();
    let pb: Vec<Vector2<f64>> = corrs.iter().map(|c| c.p_b).collect();
    solve_eight_point(&pa, &pb)
}

/// Hypothesize-and-verify fundamental estimation: 8-point minimal samples,
/// inliers by symmetric epipolar distance below the threshold, adaptive
/// iteration count from the confidence target, and a final least-squares
/// refit on the best inlier set. Degenerate minimal samples are rejected
/// without consuming an iteration.
pub fn ransac_fundamental(
    corrs: &CorrespondenceSet,
    cfg: &RansacConfig,
    rng: &mut DetRng,
) -> Result<(FundamentalMatrix, Vec<bool>), EpipolarError> {
    let m = corrs.len();
    if m < 8 {
        return Err(EpipolarError::InsufficientCorrespondences(m));
    }
    let pa: Vec<Vector2<f64>> = corrs.iter().map(|c| c.p_a).collect();
    let pb: Vec<Vector2<f64>> = corrs.iter().map(|c| c.p_b).collect();

    let mut best_count = 0usize;
    let mut best_mask = vec![false; m];
    let mut best_f: Option<FundamentalMatrix> = None;
    let mut iterations = 0usize;
    let mut needed = cfg.max_iters;
    let mut draws = 0usize;
    let max_draws = cfg.max_iters.saturating_mul(10).max(100);

    let mut sample_a = [Vector2::zeros(); 8];
    let mut sample_b = [Vector2::zeros(); 8];
    while iterations < needed.min(cfg.max_iters) && draws < max_draws {
        draws += 1;
        let idx = rng.sample_indices(m, 8);
        for (slot, &i) in idx.iter().enumerate() {
            sample_a[slot] = pa[i];
            sample_b[slot] = pb[i];
        }
        let f = match solve_eight_point(&sample_a, &sample_b) {
            Ok(f) => f,
            Err(_) => continue, // degenerate draw, iteration not consumed
        };
        iterations += 1;

        let mut count = 0usize;
        let mut mask = vec![false; m];
        for i in 0..m {
            if f.symmetric_distance(pa[i], pb[i]) < cfg.threshold {
                mask[i] = true;
                count += 1;
            }
        }
        if count > best_count {
            best_count = count;
            best_mask = mask;
            best_f = Some(f);
            // adaptive bound: iterations needed to hit the confidence target
            let w = count as f64 / m as f64;
            let p_all_inlier = w.powi(8);
            if p_all_inlier >= 1.0 {
                needed = 1;
            } else if p_all_inlier > 0.0 {
                let est = (1.0 - cfg.confidence).ln() / (1.0 - p_all_inlier).ln();
                needed = if est.is_finite() && est >= 0.0 {
                    (est.ceil() as usize).max(1)
                } else {
                    cfg.max_iters
                };
            }
        }
    }

    if best_count < 8 {
        return if iterations == 0 {
            Err(EpipolarError::DegenerateConfiguration)
        } else {
            Err(EpipolarError::RansacFailure { iterations })
        };
    }

    // Final least-squares refit. A consensus set truncated at a threshold
    // finer than the data noise is biased toward the winning hypothesis, so
    // the refit anneals: first re-estimate while shrinking a wide collection
    // window toward the nominal threshold (robustness against outliers),
    // then estimate the residual noise scale robustly and fit once more at
    // that scale. On data whose noise is below the threshold the extra pass
    // degenerates to the plain refit on the nominal inlier set.
    let fit_within = |f: &FundamentalMatrix, thr: f64| -> (Vec<bool>, usize) {
        let mut mask = vec![false; m];
        let mut count = 0;
        for i in 0..m {
            if f.symmetric_distance(pa[i], pb[i]) < thr {
                mask[i] = true;
                count += 1;
            }
        }
        (mask, count)
    };
    let ls_fit = |mask: &[bool]| -> Option<FundamentalMatrix> {
        let ia: Vec<Vector2<f64>> = (0..m).filter(|&i| mask[i]).map(|i| pa[i]).collect();
        let ib: Vec<Vector2<f64>> = (0..m).filter(|&i| mask[i]).map(|i| pb[i]).collect();
        solve_eight_point(&ia, &ib).ok()
    };
    let mut f = best_f.expect("a best hypothesis exists");
    for mult in [32.0, 16.0, 8.0, 4.0, 2.0, 1.0] {
        let (wide, count) = fit_within(&f, cfg.threshold * mult);
        if count >= 8 {
            if let Some(refit) = ls_fit(&wide) {
                f = refit;
            }
        }
    }
    // robust residual scale from the wide inlier region, then fixed-point
    // iteration gated at four sigma: nearly every inlier is collected, so
    // threshold-truncation bias cannot survive (the median of a half-normal
    // distribution is 0.6745 sigma)
    for _ in 0..3 {
        let window = cfg.threshold * 32.0;
        let mut resid: Vec<f64> = (0..m)
            .map(|i| f.symmetric_distance(pa[i], pb[i]))
            .filter(|d| *d < window)
            .collect();
        if resid.len() < 8 {
            break;
        }
        resid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let sigma = resid[resid.len() / 2] / 0.6745;
        let final_thr = cfg.threshold.max(4.0 * sigma);
        let (wide, count) = fit_within(&f, final_thr);
        if count >= 8 {
            if let Some(refit) = ls_fit(&wide) {
                f = refit;
            }
        }
    }
    // report inliers at the nominal threshold around the final model; if
    // refinement wandered off the consensus, fall back to the hypothesis
    let (final_mask, final_count) = fit_within(&f, cfg.threshold);
    if final_count >= 8 {
        Ok((f, final_mask))
    } else {
        Ok((best_f.expect("a best hypothesis exists"), best_mask))
    }
}

/// Inlier score from an epipolar distance: `(d < 0.5) / (1 + d)`, with a
/// strict inequality at the cutoff.
pub fn inlier_score(d_epi: f64) -> f64 {
    if d_epi < 0.5 {
        1.0 / (1.0 + d_epi)
    } else {
        0.0
    }
}

/// Distance of every pixel's flow target to its epipolar line, and the
/// derived inlier score map `Mr = (Depi < 0.5) / (1 + Depi)`.
///
/// Pixels whose epipolar line degenerates get `Depi = cap`, `Mr = 0`.
pub fn epipolar_residual_maps(
    f: &FundamentalMatrix,
    flow_ab: &FlowField,
    cap: f64,
) -> (ScoreMap, ScoreMap) {
    let (w, h) = (flow_ab.width(), flow_ab.height());
    let mut d_epi = ScoreMap::zeros(w, h);
    let mut m_r = ScoreMap::zeros(w, h);
    let fm = f.matrix();
    for y in 0..h {
        for x in 0..w {
            let line = fm * Vector3::new(x as f64, y as f64, 1.0);
            let norm = line.x.hypot(line.y);
            let (d, score) = if norm < 1e-12 {
                (cap, 0.0)
            } else {
                let fl = flow_ab.at(x, y);
                let target = Vector3::new(x as f64 + fl[0], y as f64 + fl[1], 1.0);
                let d = target.dot(&line).abs() / norm;
                (d, inlier_score(d))
            };
            d_epi.set(x, y, d);
            m_r.set(x, y, score);
        }
    }
    (d_epi, m_r)
}

/// Decomposes `E = K^T F K` into the four candidate poses and keeps the one
/// with the largest count of correspondences triangulating in front of both
/// cameras. The winner's translation has unit norm.
pub fn decompose_and_select(
    f: &FundamentalMatrix,
    k: &CameraIntrinsics,
    corrs: &CorrespondenceSet,
    tri_cfg: &TriangulationConfig,
) -> Result<PoseHypothesis, EpipolarError> {
    if corrs.is_empty() {
        return Err(EpipolarError::InsufficientCorrespondences(0));
    }
    let km = k.matrix();
    let e = km.transpose() * f.matrix() * km;
    let (u, _s, v_t) = svd3_sorted(&e);
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let fix_det = |m: Matrix3<f64>| if m.determinant() < 0.0 { -m } else { m };
    let r1 = fix_det(u * w * v_t);
    let r2 = fix_det(u * w.transpose() * v_t);
    let t: Vector3<f64> = u.column(2).into_owned();
    let t = t / t.norm();

    let candidates = [
        RigidPose::from_parts_unchecked(r1, t),
        RigidPose::from_parts_unchecked(r1, -t),
        RigidPose::from_parts_unchecked(r2, t),
        RigidPose::from_parts_unchecked(r2, -t),
    ];

    let mut best: Option<(usize, usize, Vec<bool>)> = None; // (candidate, support, mask)
    let mut second_support = 0usize;
    for (ci, cand) in candidates.iter().enumerate() {
        let tri = midpoint_triangulate(corrs, cand, k, tri_cfg)?;
        let mask: Vec<bool> = tri
            .samples
            .iter()
            .map(|s| {
                s.depth_a.is_finite()
                    && s.depth_b.is_finite()
                    && s.depth_a > 0.0
                    && s.depth_b > 0.0
                    && s.depth_a <= tri_cfg.max_depth
                    && s.depth_b <= tri_cfg.max_depth
            })
            .collect();
        let support = mask.iter().filter(|&&v| v).count();
        match &best {
            Some((_, best_support, _)) if support <= *best_support => {
                second_support = second_support.max(support);
            }
            _ => {
                if let Some((_, prev, _)) = &best {
                    second_support = second_support.max(*prev);
                }
                best = Some((ci, support, mask));
            }
        }
    }
    let (ci, support, mask) = best.expect("four candidates evaluated");
    if support == 0 || (second_support as f64) >= 0.95 * support as f64 {
        return Err(EpipolarError::CheiralityAmbiguity {
            best: support,
            second: second_support,
        });
    }
    Ok(PoseHypothesis {
        pose: candidates[ci],
        support,
        inlier_mask: mask,
    })
}

/// Everything produced on the way from a flow pair to a relative pose; the
/// maps feed the loss terms downstream.
#[derive(Debug, Clone)]
pub struct PoseRecovery {
    pub hypothesis: PoseHypothesis,
    pub fundamental: FundamentalMatrix,
    /// The sampled correspondences fed to RANSAC.
    pub correspondences: CorrespondenceSet,
    /// RANSAC inlier flags, aligned with `correspondences`.
    pub ransac_inliers: Vec<bool>,
    /// Forward-backward distance map.
    pub fb_distance: ScoreMap,
    /// Forward-backward score map `Ms`.
    pub score: ScoreMap,
    /// Occlusion mask `Mo` (1 = visible).
    pub occlusion: ScoreMap,
    /// Epipolar inlier score map `Mr`.
    pub inlier_score: ScoreMap,
    /// Epipolar distance map `Depi`.
    pub epipolar_distance: ScoreMap,
}

/// Full pose pipeline for one frame pair: reliability maps, top-score
/// sampling, robust fundamental estimation, residual maps, decomposition
/// with cheirality selection.
pub fn recover_pose(
    flow_ab: &FlowField,
    flow_ba: &FlowField,
    k: &CameraIntrinsics,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<PoseRecovery, EpipolarError> {
    if flow_ab.width() != k.width || flow_ab.height() != k.height {
        return Err(EpipolarError::DimensionMismatch(
            flow_ab.width(),
            flow_ab.height(),
            k.width,
            k.height,
        ));
    }
    let (fb_distance, score) = fb_distance_and_score(flow_ab, flow_ba, cfg.distance_cap)?;
    let occlusion = occlusion_mask(flow_ba, cfg.occlusion_threshold);
    let mut sample_rng = DetRng::new(seed, "pose-sampling");
    let correspondences = sample_correspondences(
        flow_ab,
        &score,
        &occlusion,
        cfg.sampling.top_frac,
        cfg.sampling.n,
        &mut sample_rng,
    )?;
    let mut ransac_rng = DetRng::new(seed, "ransac");
    let (fundamental, ransac_inliers) =
        ransac_fundamental(&correspondences, &cfg.ransac, &mut ransac_rng)?;
    let (epipolar_distance, inlier_score) =
        epipolar_residual_maps(&fundamental, flow_ab, cfg.distance_cap);
    let inlier_corrs = correspondences.filter_by_mask(&ransac_inliers);
    let hypothesis = decompose_and_select(&fundamental, k, &inlier_corrs, &cfg.triangulation)?;
    Ok(PoseRecovery {
        hypothesis,
        fundamental,
        correspondences,
        ransac_inliers,
        fb_distance,
        score,
        occlusion,
        inlier_score,
        epipolar_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::Correspondence;
    use crate::geometry::{angle_between, project, rotation_from_axis_angle};

    fn k_unit() -> CameraIntrinsics {
        CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 4, 4).unwrap()
    }

    fn k_vga() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 480.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn scene_correspondences(
        pose: &RigidPose,
        k: &CameraIntrinsics,
        n: usize,
        seed: u64,
    ) -> CorrespondenceSet {
        let mut rng = DetRng::new(seed, "scene");
        let mut items = Vec::new();
        while items.len() < n {
            let p = Vector3::new(
                rng.range_f64(-2.0, 2.0),
                rng.range_f64(-1.5, 1.5),
                rng.range_f64(3.0, 10.0),
            );
            let q = pose.transform_point(p);
            if q.z <= 0.1 {
                continue;
            }
            let pa = project(p, k).unwrap();
            let pb = project(q, k).unwrap();
            if !k.contains(pa) || !k.contains(pb) {
                continue;
            }
            items.push(Correspondence {
                p_a: pa,
                p_b: pb,
                weight: 1.0,
            });
        }
        CorrespondenceSet {
            width: k.width,
            height: k.height,
            items,
        }
    }

    fn random_pose(rng: &mut DetRng, baseline: f64, max_angle: f64) -> RigidPose {
        let axis = Vector3::new(rng.normal(), rng.normal(), rng.normal()).normalize();
        let rot = rotation_from_axis_angle(axis * rng.range_f64(0.0, max_angle));
        let dir = Vector3::new(rng.normal(), rng.normal(), 0.3 * rng.normal()).normalize();
        let center = dir * baseline;
        RigidPose::from_parts_unchecked(rot, -(rot * center))
    }

    fn f_distance(a: &FundamentalMatrix, b: &FundamentalMatrix) -> f64 {
        let d1 = (a.matrix() - b.matrix()).norm();
        let d2 = (a.matrix() + b.matrix()).norm();
        d1.min(d2)
    }

    #[test]
    fn pure_translation_gives_skew_form() {
        // R = I, camera B at -x so t = (1, 0, 0): F ~ [t]x
        let pose = RigidPose::from_parts_unchecked(Matrix3::identity(), Vector3::new(1.0, 0.0, 0.0));
        let k = k_unit();
        let corrs = scene_correspondences(&pose, &k, 40, 1);
        let f = eight_point(&corrs).unwrap();
        let expected = FundamentalMatrix::from_matrix(Matrix3::new(
            0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0,
        ));
        assert!(
            f_distance(&f, &expected) < 1e-9,
            "distance {}",
            f_distance(&f, &expected)
        );
    }

    #[test]
    fn noiseless_scene_residuals_vanish() {
        let mut rng = DetRng::new(3, "pose");
        let k = k_vga();
        for _ in 0..5 {
            let pose = random_pose(&mut rng, 0.5, 0.1);
            let corrs = scene_correspondences(&pose, &k, 120, rng.next_u64());
            let f = eight_point(&corrs).unwrap();
            let max_resid = corrs
                .iter()
                .map(|c| f.algebraic_residual(c.p_a, c.p_b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_resid < 1e-9, "max residual {max_resid}");
        }
    }

    #[test]
    fn minimal_and_overdetermined_agree() {
        let mut rng = DetRng::new(11, "pose");
        let k = k_vga();
        let pose = random_pose(&mut rng, 0.4, 0.05);
        let corrs = scene_correspondences(&pose, &k, 50, 7);
        let full = eight_point(&corrs).unwrap();
        let minimal = CorrespondenceSet {
            width: corrs.width,
            height: corrs.height,
            items: corrs.items[..8].to_vec(),
        };
        let f8 = eight_point(&minimal).unwrap();
        assert!(f_distance(&full, &f8) < 1e-6, "{}", f_distance(&full, &f8));
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let items = vec![
            Correspondence {
                p_a: Vector2::new(10.0, 10.0),
                p_b: Vector2::new(10.0, 10.0),
                weight: 1.0,
            };
            12
        ];
        let corrs = CorrespondenceSet {
            width: 64,
            height: 64,
            items,
        };
        assert!(matches!(
            eight_point(&corrs),
            Err(EpipolarError::DegenerateConfiguration)
        ));
    }

    #[test]
    fn identity_flow_constraints_are_degenerate() {
        // p_b == p_a for all: every skew-symmetric matrix fits, so the
        // nullspace is three-dimensional
        let mut rng = DetRng::new(2, "pts");
        let items: Vec<Correspondence> = (0..30)
            .map(|_| {
                let p = Vector2::new(rng.range_f64(0.0, 600.0), rng.range_f64(0.0, 400.0));
                Correspondence {
                    p_a: p,
                    p_b: p,
                    weight: 1.0,
                }
            })
            .collect();
        let corrs = CorrespondenceSet {
            width: 640,
            height: 480,
            items,
        };
        assert!(matches!(
            eight_point(&corrs),
            Err(EpipolarError::DegenerateConfiguration)
        ));
    }

    #[test]
    fn ransac_all_inlier_matches_full_solve() {
        let mut rng = DetRng::new(17, "pose");
        let k = k_vga();
        let pose = random_pose(&mut rng, 0.5, 0.08);
        let corrs = scene_correspondences(&pose, &k, 200, 23);
        let cfg = RansacConfig {
            threshold: 0.1,
            confidence: 0.99,
            max_iters: 2000,
        };
        let (f, mask) = ransac_fundamental(&corrs, &cfg, &mut DetRng::new(0, "ransac")).unwrap();
        assert!(mask.iter().all(|&m| m));
        let full = eight_point(&corrs).unwrap();
        assert!(f_distance(&f, &full) < 1e-9);
    }

    #[test]
    fn ransac_is_deterministic() {
        let mut rng = DetRng::new(29, "pose");
        let k = k_vga();
        let pose = random_pose(&mut rng, 0.5, 0.08);
        let corrs = scene_correspondences(&pose, &k, 150, 31);
        let cfg = RansacConfig {
            threshold: 0.1,
            confidence: 0.99,
            max_iters: 500,
        };
        let (f1, m1) = ransac_fundamental(&corrs, &cfg, &mut DetRng::new(5, "r")).unwrap();
        let (f2, m2) = ransac_fundamental(&corrs, &cfg, &mut DetRng::new(5, "r")).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(f1.matrix(), f2.matrix());
    }

    #[test]
    fn residual_map_boundary_cases() {
        // F ~ [t]x for t = (1,0,0): the epipolar line of (x, y) is v = y, so
        // Depi equals |flow.v|
        let f = FundamentalMatrix::from_matrix(Matrix3::new(
            0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0,
        ));
        let mk_flow = |v: f64| {
            FlowField::from_data(4, 3, vec![[1.0, v]; 12]).unwrap()
        };
        let (d, m) = epipolar_residual_maps(&f, &mk_flow(0.0), 1e3);
        assert!(d.at(1, 1) < 1e-14);
        assert!((m.at(1, 1) - 1.0).abs() < 1e-14);
        let (d, m) = epipolar_residual_maps(&f, &mk_flow(0.25), 1e3);
        assert!((d.at(2, 1) - 0.25).abs() < 1e-12);
        assert!((m.at(2, 1) - 1.0 / 1.25).abs() < 1e-12);
        // exactly at the 0.5 cutoff the strict inequality zeroes the score
        assert_eq!(inlier_score(0.5), 0.0);
        assert!(inlier_score(0.4999999999999999) > 0.0);
        assert_eq!(inlier_score(0.0), 1.0);
    }

    #[test]
    fn moving_region_scores_below_static() {
        let k = k_vga();
        let pose = RigidPose::from_parts_unchecked(Matrix3::identity(), Vector3::new(0.5, 0.0, 0.0));
        let f = fundamental_from_pose(&pose, &k);
        // rigid flow for constant depth 5 plus an inconsistent moving block
        let (w, h) = (64, 48);
        let mut data = vec![[0.5 * 500.0 / 5.0, 0.0]; w * h];
        for y in 10..20 {
            for x in 10..20 {
                data[y * w + x] = [30.0, 17.0];
            }
        }
        let flow = FlowField::from_data(w, h, data).unwrap();
        let (_, m_r) = epipolar_residual_maps(&f, &flow, 1e3);
        let mut inside = 0.0;
        let mut outside = 0.0;
        let mut n_in = 0.0;
        let mut n_out = 0.0;
        for y in 0..h {
            for x in 0..w {
                if (10..20).contains(&x) && (10..20).contains(&y) {
                    inside += m_r.at(x, y);
                    n_in += 1.0;
                } else {
                    outside += m_r.at(x, y);
                    n_out += 1.0;
                }
            }
        }
        assert!(inside / n_in < outside / n_out);
    }

    fn default_tri_cfg() -> TriangulationConfig {
        TriangulationConfig {
            min_ray_cos: 0.001,
            max_depth: 1e4,
        }
    }

    #[test]
    fn decompose_recovers_known_pose() {
        let mut rng = DetRng::new(41, "pose");
        let k = k_vga();
        for _ in 0..10 {
            let pose = random_pose(&mut rng, 0.6, 0.1);
            let corrs = scene_correspondences(&pose, &k, 100, rng.next_u64());
            let f = fundamental_from_pose(&pose, &k);
            let hyp = decompose_and_select(&f, &k, &corrs, &default_tri_cfg()).unwrap();
            let rot_err = hyp.pose.rotation_angle_to(&pose);
            let t_err = angle_between(hyp.pose.translation(), pose.translation());
            assert!(rot_err < 1e-7, "rotation error {rot_err}");
            assert!(t_err < 1e-7, "translation direction error {t_err}");
            assert!(hyp.support > 90);
        }
    }

    #[test]
    fn pure_forward_translation_selected() {
        // camera B behind A: t = (0,0,1), R = I
        let pose = RigidPose::from_parts_unchecked(Matrix3::identity(), Vector3::new(0.0, 0.0, 1.0));
        let k = k_vga();
        let corrs = scene_correspondences(&pose, &k, 120, 9);
        let f = fundamental_from_pose(&pose, &k);
        let hyp = decompose_and_select(&f, &k, &corrs, &default_tri_cfg()).unwrap();
        assert!(hyp.pose.rotation_angle_to(&pose) < 1e-7);
        assert!(angle_between(hyp.pose.translation(), pose.translation()) < 1e-7);
    }

    #[test]
    fn sign_flip_of_f_selects_same_pose() {
        let mut rng = DetRng::new(55, "pose");
        let k = k_vga();
        let pose = random_pose(&mut rng, 0.5, 0.1);
        let corrs = scene_correspondences(&pose, &k, 80, 3);
        let f = fundamental_from_pose(&pose, &k);
        let f_neg = FundamentalMatrix::from_matrix(-f.matrix());
        let a = decompose_and_select(&f, &k, &corrs, &default_tri_cfg()).unwrap();
        let b = decompose_and_select(&f_neg, &k, &corrs, &default_tri_cfg()).unwrap();
        assert!(a.pose.rotation_angle_to(&b.pose) < 1e-9);
        assert!(angle_between(a.pose.translation(), b.pose.translation()) < 1e-9);
    }

    #[test]
    fn zero_flow_pair_fails_cleanly() {
        let k = CameraIntrinsics::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap();
        let flow = FlowField::zeros(64, 48);
        let cfg = PipelineConfig::default();
        let err = recover_pose(&flow, &flow, &k, 0, &cfg).unwrap_err();
        assert!(matches!(
            err,
            EpipolarError::DegenerateConfiguration | EpipolarError::RansacFailure { .. }
        ));
    }
}
