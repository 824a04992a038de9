//! Trajectory, depth and flow evaluation metrics: 7DoF (Sim(3)) alignment,
//! absolute trajectory error, the segment-based odometry error protocol,
//! monocular-depth error/accuracy numbers and flow end-point errors.

use crate::grid::{DepthMap, FlowField, ScoreMap};
use crate::vo::Trajectory;
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("need at least {need} associated points, got {got}")]
    InsufficientPoints { got: usize, need: usize },
    #[error("point configuration is degenerate (collinear or coincident)")]
    DegenerateGeometry,
    #[error("no subsequence reaches the shortest evaluation length {min_length} m")]
    SequenceTooShort { min_length: f64 },
    #[error("no overlapping valid pixels")]
    EmptyOverlap,
    #[error("trajectories must have per-frame correspondence ({0} vs {1} poses)")]
    LengthMismatch(usize, usize),
}

/// Similarity transform `p -> s R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sim3Transform {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Sim3Transform {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.scale * (self.rotation * p) + self.translation
    }
}

/// Closed-form similarity (or rigid, with `with_scale = false`) alignment
/// minimizing `sum || dst_i - (s R src_i + t) ||^2`.
pub fn umeyama_alignment(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    with_scale: bool,
) -> Result<Sim3Transform, MetricError> {
    let n = src.len();
    if n < 3 || dst.len() != n {
        return Err(MetricError::InsufficientPoints { got: n.min(dst.len()), need: 3 });
    }
    let nf = n as f64;
    let mu_s = src.iter().sum::<Vector3<f64>>() / nf;
    let mu_d = dst.iter().sum::<Vector3<f64>>() / nf;
    let mut var_s = 0.0;
    let mut cov = Matrix3::zeros();
    for i in 0..n {
        let cs = src[i] - mu_s;
        let cd = dst[i] - mu_d;
        var_s += cs.norm_squared();
        cov += cd * cs.transpose();
    }
    var_s /= nf;
    cov /= nf;
    let svd = cov.svd(true, true);
    let u = svd.u.expect("3x3 svd");
    let v_t = svd.v_t.expect("3x3 svd");
    let mut d = svd.singular_values;
    // sort descending for the rank test
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| d[b].partial_cmp(&d[a]).unwrap());
    let (d0, d1) = (d[idx[0]], d[idx[1]]);
    if d0 <= 0.0 || d0.is_nan() || d1 < 1e-12 * d0 || var_s <= 0.0 {
        return Err(MetricError::DegenerateGeometry);
    }
    let mut s_sign = Matrix3::identity();
    if (u.determinant() * v_t.determinant()) < 0.0 {
        // flip along the smallest singular value
        let min_i = idx[2];
        s_sign[(min_i, min_i)] = -1.0;
        d[min_i] = -d[min_i];
    }
    let rotation = u * s_sign * v_t;
    let scale = if with_scale {
        (d[0] + d[1] + d[2]) / var_s
    } else {
        1.0
    };
    let translation = mu_d - scale * (rotation * mu_s);
    Ok(Sim3Transform {
        scale,
        rotation,
        translation,
    })
}

/// Pairs of node indices `(est, gt)` associated by nearest timestamp within
/// `max_dt`, each ground-truth node used at most once.
pub fn associate(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let mut j_start = 0usize;
    for (i, node) in est.nodes().iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (j, gnode) in gt.nodes().iter().enumerate().skip(j_start) {
            let dt = (gnode.time - node.time).abs();
            match best {
                Some((_, bd)) if dt > bd => break, // times increase, gap grows
                _ => {}
            }
            if dt <= max_dt {
                best = Some((j, dt));
            } else if gnode.time > node.time {
                break;
            }
        }
        if let Some((j, _)) = best {
            pairs.push((i, j));
            j_start = j + 1;
        }
    }
    pairs
}

/// Default timestamp association window in seconds.
pub const DEFAULT_MAX_DT: f64 = 0.02;

/// Aligns the estimated trajectory to the ground truth with a similarity
/// transform fitted on associated positions; returns the transform and the
/// transformed estimate.
pub fn sim3_align(
    est: &Trajectory,
    gt: &Trajectory,
    max_dt: f64,
) -> Result<(Sim3Transform, Trajectory), MetricError> {
    let pairs = associate(est, gt, max_dt);
    if pairs.len() < 3 {
        return Err(MetricError::InsufficientPoints {
            got: pairs.len(),
            need: 3,
        });
    }
    let src: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|&(i, _)| est.nodes()[i].pose.translation())
        .collect();
    let dst: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|&(_, j)| gt.nodes()[j].pose.translation())
        .collect();
    let sim = umeyama_alignment(&src, &dst, true)?;
    Ok((sim, est.transformed(&sim)))
}

fn rmse_between(est: &Trajectory, gt: &Trajectory, pairs: &[(usize, usize)]) -> f64 {
    let acc: f64 = pairs
        .iter()
        .map(|&(i, j)| {
            (est.nodes()[i].pose.translation() - gt.nodes()[j].pose.translation()).norm_squared()
        })
        .sum();
    (acc / pairs.len() as f64).sqrt()
}

/// Absolute trajectory error: RMSE of position residuals after 7DoF
/// alignment, in the ground-truth length unit.
pub fn ate_rmse(est: &Trajectory, gt: &Trajectory, max_dt: f64) -> Result<f64, MetricError> {
    ate_rmse_aligned(est, gt, max_dt, true)
}

/// ATE with either 7DoF (`with_scale`) or 6DoF alignment.
pub fn ate_rmse_aligned(
    est: &Trajectory,
    gt: &Trajectory,
    max_dt: f64,
    with_scale: bool,
) -> Result<f64, MetricError> {
    let pairs = associate(est, gt, max_dt);
    if pairs.len() < 3 {
        return Err(MetricError::InsufficientPoints {
            got: pairs.len(),
            need: 3,
        });
    }
    let src: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|&(i, _)| est.nodes()[i].pose.translation())
        .collect();
    let dst: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|&(_, j)| gt.nodes()[j].pose.translation())
        .collect();
    let sim = umeyama_alignment(&src, &dst, with_scale)?;
    let aligned = est.transformed(&sim);
    Ok(rmse_between(&aligned, gt, &pairs))
}

/// Average segment errors of the odometry protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryErrors {
    /// Mean translational error in percent of segment length.
    pub t_err_percent: f64,
    /// Mean rotational error in degrees per 100 m.
    pub r_err_deg_per_100m: f64,
    /// Number of (start frame, length) segments evaluated.
    pub segments: usize,
}

/// Standard evaluation lengths in meters.
pub const ODOMETRY_LENGTHS: [f64; 8] = [100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0];

/// Segment-based odometry errors: for every start frame (striding by `step`)
/// and every target length, the relative-pose discrepancy over the segment is
/// divided by the traveled ground-truth arc length.
pub fn kitti_odometry_errors(
    est: &Trajectory,
    gt: &Trajectory,
    lengths: &[f64],
    step: usize,
) -> Result<OdometryErrors, MetricError> {
    let n = gt.len();
    if est.len() != n {
        return Err(MetricError::LengthMismatch(est.len(), n));
    }
    let min_length = lengths.iter().copied().fold(f64::INFINITY, f64::min);
    if n < 2 {
        return Err(MetricError::SequenceTooShort { min_length });
    }
    // cumulative ground-truth arc length
    let mut dist = vec![0.0; n];
    for i in 1..n {
        dist[i] = dist[i - 1]
            + (gt.nodes()[i].pose.translation() - gt.nodes()[i - 1].pose.translation()).norm();
    }
    let mut t_sum = 0.0;
    let mut r_sum = 0.0;
    let mut count = 0usize;
    let step = step.max(1);
    for first in (0..n).step_by(step) {
        for &len in lengths {
            let target = dist[first] + len;
            let j = match dist[first..].iter().position(|&d| d >= target) {
                Some(off) => first + off,
                None => break,
            };
            let seg = dist[j] - dist[first];
            if seg <= 0.0 {
                continue;
            }
            let delta_gt = gt.nodes()[first].pose.invert().compose(&gt.nodes()[j].pose);
            let delta_est = est.nodes()[first].pose.invert().compose(&est.nodes()[j].pose);
            let err = delta_est.invert().compose(&delta_gt);
            t_sum += err.translation().norm() / seg;
            r_sum += crate::geometry::rotation_angle(err.rotation()) / seg;
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricError::SequenceTooShort { min_length });
    }
    Ok(OdometryErrors {
        t_err_percent: 100.0 * t_sum / count as f64,
        r_err_deg_per_100m: (r_sum / count as f64).to_degrees() * 100.0,
        segments: count,
    })
}

/// Monocular-depth evaluation numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthMetrics {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rms: f64,
    pub rms_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub pixels: usize,
    /// Median scale applied to the prediction (1 when scaling is off).
    pub scale: f64,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Depth error/accuracy metrics over the overlapping valid pixels. Ground
/// truth outside `[min_depth, cap]` is excluded; predictions are clamped to
/// that range after optional median scaling.
pub fn depth_metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    min_depth: f64,
    cap: f64,
    median_scaling: bool,
) -> Result<DepthMetrics, MetricError> {
    if !pred.same_size(gt) {
        return Err(MetricError::EmptyOverlap);
    }
    let mut ps = Vec::new();
    let mut gs = Vec::new();
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            let (p, g) = match (pred.get(x, y), gt.get(x, y)) {
                (Some(p), Some(g)) => (p, g),
                _ => continue,
            };
            if !(min_depth..=cap).contains(&g) {
                continue;
            }
            ps.push(p);
            gs.push(g);
        }
    }
    if ps.is_empty() {
        return Err(MetricError::EmptyOverlap);
    }
    let scale = if median_scaling {
        let med_g = median(&mut gs.clone());
        let med_p = median(&mut ps.clone());
        med_g / med_p
    } else {
        1.0
    };
    let n = ps.len() as f64;
    let mut abs_rel = 0.0;
    let mut sq_rel = 0.0;
    let mut rms = 0.0;
    let mut rms_log = 0.0;
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    let mut d3 = 0.0;
    for i in 0..ps.len() {
        let p = (ps[i] * scale).clamp(min_depth, cap);
        let g = gs[i];
        let diff = p - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        rms += diff * diff;
        let dl = p.ln() - g.ln();
        rms_log += dl * dl;
        let ratio = (p / g).max(g / p);
        if ratio < 1.25 {
            d1 += 1.0;
        }
        if ratio < 1.25 * 1.25 {
            d2 += 1.0;
        }
        if ratio < 1.25 * 1.25 * 1.25 {
            d3 += 1.0;
        }
    }
    Ok(DepthMetrics {
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        rms: (rms / n).sqrt(),
        rms_log: (rms_log / n).sqrt(),
        delta1: d1 / n,
        delta2: d2 / n,
        delta3: d3 / n,
        pixels: ps.len(),
        scale,
    })
}

/// Flow end-point errors and the bad-pixel fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMetrics {
    pub epe_all: f64,
    /// End-point error over non-occluded pixels (equals `epe_all` when no
    /// non-occluded mask is supplied).
    pub epe_noc: f64,
    /// Percentage of valid pixels with error > 3 px and > 5% of the
    /// ground-truth magnitude.
    pub fl_percent: f64,
    pub valid_pixels: usize,
}

pub fn flow_metrics(
    pred: &FlowField,
    gt: &FlowField,
    valid: Option<&ScoreMap>,
    noc: Option<&ScoreMap>,
) -> Result<FlowMetrics, MetricError> {
    if !pred.same_size(gt) {
        return Err(MetricError::EmptyOverlap);
    }
    let (w, h) = (pred.width(), pred.height());
    if let Some(v) = valid {
        if v.width() != w || v.height() != h {
            return Err(MetricError::EmptyOverlap);
        }
    }
    if let Some(m) = noc {
        if m.width() != w || m.height() != h {
            return Err(MetricError::EmptyOverlap);
        }
    }
    let mut sum_all = 0.0;
    let mut n_all = 0usize;
    let mut sum_noc = 0.0;
    let mut n_noc = 0usize;
    let mut n_bad = 0usize;
    for y in 0..h {
        for x in 0..w {
            if let Some(v) = valid {
                if v.at(x, y) <= 0.0 {
                    continue;
                }
            }
            let p = pred.at(x, y);
            let g = gt.at(x, y);
            let epe = (p[0] - g[0]).hypot(p[1] - g[1]);
            sum_all += epe;
            n_all += 1;
            let mag = g[0].hypot(g[1]);
            if epe > 3.0 && epe > 0.05 * mag {
                n_bad += 1;
            }
            if noc.is_none_or(|m| m.at(x, y) > 0.0) {
                sum_noc += epe;
                n_noc += 1;
            }
        }
    }
    if n_all == 0 {
        return Err(MetricError::EmptyOverlap);
    }
    Ok(FlowMetrics {
        epe_all: sum_all / n_all as f64,
        epe_noc: if n_noc > 0 {
            sum_noc / n_noc as f64
        } else {
            f64::NAN
        },
        fl_percent: 100.0 * n_bad as f64 / n_all as f64,
        valid_pixels: n_all,
    })
}
