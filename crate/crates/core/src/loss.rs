//! Training-objective terms as pure, checkable functions.
//!
//! The total objective combines a photometric flow loss, a triangulation
//! depth loss after a closed-form scale fit, flow/depth reprojection
//! consistency terms and an edge-aware smoothness regularizer:
//!
//! ```text
//! L = w1*Lf + w2*Ld + w3*(w31*Lpf + w32*Lpd) + w4*Ls
//! ```
//!
//! The scale fit aligns predicted depth to the triangulated structure, so
//! every depth-dependent term is invariant to jointly rescaling depths and
//! translation.

use crate::config::LossWeights;
use crate::geometry::{project, unproject, CameraIntrinsics, RigidPose};
use crate::grid::{DepthMap, FlowField, Image, ScoreMap};
use crate::triangulation::TriangulatedSet;
use nalgebra::{Vector2, Vector3};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("no samples available for the requested term")]
    EmptySamples,
    #[error("depth samples must be strictly positive")]
    NonPositiveDepth,
    #[error("mask support is empty")]
    EmptyMask,
    #[error("disparity mean must be positive")]
    ZeroMeanDisparity,
    #[error("inputs have mismatched dimensions")]
    DimensionMismatch,
}

/// SSIM stability constants (for images in `[0, 1]`).
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Maps a unit-range disparity code to a depth in `[0.1, 100]` length units:
/// `D = 1 / (a + b * sigma)` with `a = 0.01`, `b = 9.99`.
pub fn disparity_to_depth(sigma: f64) -> f64 {
    1.0 / (0.01 + 9.99 * sigma)
}

/// Closed-form minimizer of `mean(((T - s*D)/T)^2)` over the scale `s`:
/// with `r_i = D_i / T_i`, the optimum is `s = sum(r) / sum(r^2)`.
pub fn fit_scale(depth_pred: &[f64], depth_tri: &[f64]) -> Result<f64, LossError> {
    if depth_pred.is_empty() || depth_pred.len() != depth_tri.len() {
        return Err(LossError::EmptySamples);
    }
    let mut sum_r = 0.0;
    let mut sum_r2 = 0.0;
    for (&d, &t) in depth_pred.iter().zip(depth_tri) {
        if d <= 0.0 || t <= 0.0 || !d.is_finite() || !t.is_finite() {
            return Err(LossError::NonPositiveDepth);
        }
        let r = d / t;
        sum_r += r;
        sum_r2 += r * r;
    }
    Ok(sum_r / sum_r2)
}

/// Depth loss after the scale fit: `mean((1 - s * D/T)^2)`. Returns the loss
/// and the fitted scale.
pub fn scale_aligned_depth_loss(
    depth_pred: &[f64],
    depth_tri: &[f64],
) -> Result<(f64, f64), LossError> {
    let s = fit_scale(depth_pred, depth_tri)?;
    let n = depth_pred.len() as f64;
    let loss = depth_pred
        .iter()
        .zip(depth_tri)
        .map(|(&d, &t)| {
            let e = 1.0 - s * d / t;
            e * e
        })
        .sum::<f64>()
        / n;
    Ok((loss, s))
}

/// Gradient of [`scale_aligned_depth_loss`] with respect to each predicted
/// depth. The scale is re-fitted for every evaluation, but at the optimum the
/// derivative through `s` vanishes, leaving
/// `dL/dD_j = -2 s (1 - s r_j) / (N T_j)`.
pub fn scale_aligned_depth_loss_gradient(
    depth_pred: &[f64],
    depth_tri: &[f64],
) -> Result<Vec<f64>, LossError> {
    let s = fit_scale(depth_pred, depth_tri)?;
    let n = depth_pred.len() as f64;
    Ok(depth_pred
        .iter()
        .zip(depth_tri)
        .map(|(&d, &t)| {
            let r = d / t;
            -2.0 * s * (1.0 - s * r) / (n * t)
        })
        .collect())
}

/// Extracts the paired (predicted depth, triangulated depth) samples at the
/// valid triangulated pixels. The predicted depth is read at the rounded
/// source pixel.
pub fn paired_depth_samples(depth_pred: &DepthMap, tri: &TriangulatedSet) -> (Vec<f64>, Vec<f64>) {
    let mut pred = Vec::new();
    let mut gt = Vec::new();
    for s in tri.valid() {
        let x = s.p_a.x.round();
        let y = s.p_a.y.round();
        if x < 0.0 || y < 0.0 || x as usize >= depth_pred.width() || y as usize >= depth_pred.height()
        {
            continue;
        }
        if let Some(d) = depth_pred.get(x as usize, y as usize) {
            pred.push(d);
            gt.push(s.depth_a);
        }
    }
    (pred, gt)
}

/// Triangulation-supervised depth loss over a depth map: fits the scale on
/// the valid samples and returns `(loss, scale)`.
pub fn depth_loss(depth_pred: &DepthMap, tri: &TriangulatedSet) -> Result<(f64, f64), LossError> {
    let (pred, gt) = paired_depth_samples(depth_pred, tri);
    scale_aligned_depth_loss(&pred, &gt)
}

/// Dense displacement induced by camera motion and scene depth. Pixels with
/// invalid depth or nonpositive reprojected depth are flagged 0 in the
/// validity map and carry zero flow.
pub fn rigid_flow(
    depth_a: &DepthMap,
    pose_ab: &RigidPose,
    k: &CameraIntrinsics,
) -> (FlowField, ScoreMap) {
    let (w, h) = (depth_a.width(), depth_a.height());
    let mut flow = FlowField::zeros(w, h);
    let mut valid = ScoreMap::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let d = match depth_a.get(x, y) {
                Some(d) => d,
                None => continue,
            };
            let pix = Vector2::new(x as f64, y as f64);
            let cam = unproject(pix, d, k).expect("positive depth");
            let moved = pose_ab.transform_point(cam);
            if moved.z <= 0.0 {
                continue;
            }
            let target = project(moved, k).expect("positive depth");
            flow.set(x, y, [target.x - pix.x, target.y - pix.y]);
            valid.set(x, y, 1.0);
        }
    }
    (flow, valid)
}

/// Flow reprojection loss: weighted L1 gap between the rigid flow target and
/// the estimated flow target, normalized by the inlier-score mass, plus the
/// epipolar-distance regularizer averaged over all pixels.
///
/// Both the numerator and the normalizing mass run over pixels where the
/// rigid reprojection is defined (valid depth, positive reprojected depth).
pub fn flow_reprojection_loss(
    flow_ab: &FlowField,
    depth_a: &DepthMap,
    pose_ab: &RigidPose,
    k: &CameraIntrinsics,
    inlier_score: &ScoreMap,
    epipolar_distance: &ScoreMap,
) -> Result<f64, LossError> {
    let (w, h) = (flow_ab.width(), flow_ab.height());
    if depth_a.width() != w
        || depth_a.height() != h
        || inlier_score.width() != w
        || inlier_score.height() != h
        || epipolar_distance.width() != w
        || epipolar_distance.height() != h
    {
        return Err(LossError::DimensionMismatch);
    }
    let mut numer = 0.0;
    let mut mass = 0.0;
    for y in 0..h {
        for x in 0..w {
            let weight = inlier_score.at(x, y);
            let d = match depth_a.get(x, y) {
                Some(d) => d,
                None => continue,
            };
            let pix = Vector2::new(x as f64, y as f64);
            let cam = unproject(pix, d, k).expect("positive depth");
            let moved = pose_ab.transform_point(cam);
            if moved.z <= 0.0 {
                continue;
            }
            let rigid_target = project(moved, k).expect("positive depth");
            let f = flow_ab.at(x, y);
            let flow_target = Vector2::new(pix.x + f[0], pix.y + f[1]);
            let gap = rigid_target - flow_target;
            numer += weight * (gap.x.abs() + gap.y.abs());
            mass += weight;
        }
    }
    if mass <= 0.0 {
        return Err(LossError::EmptyMask);
    }
    let reg = epipolar_distance.data().iter().map(|v| v.abs()).sum::<f64>()
        / epipolar_distance.len() as f64;
    Ok(numer / mass + reg)
}

/// Per-pixel gradient of [`flow_reprojection_loss`] with respect to the depth
/// values (zero where the pixel does not contribute). The regularizer does
/// not depend on depth.
pub fn flow_reprojection_loss_depth_gradient(
    flow_ab: &FlowField,
    depth_a: &DepthMap,
    pose_ab: &RigidPose,
    k: &CameraIntrinsics,
    inlier_score: &ScoreMap,
) -> Result<Vec<f64>, LossError> {
    let (w, h) = (flow_ab.width(), flow_ab.height());
    let mut grads = vec![0.0; w * h];
    let mut mass = 0.0;
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let weight = inlier_score.at(x, y);
            let d = match depth_a.get(x, y) {
                Some(d) => d,
                None => continue,
            };
            let pix = Vector2::new(x as f64, y as f64);
            let ray = k.pixel_ray(pix);
            let cam = ray * d;
            let moved = pose_ab.transform_point(cam);
            if moved.z <= 0.0 {
                continue;
            }
            mass += weight;
            if weight == 0.0 {
                continue;
            }
            let rigid_target = project(moved, k).expect("positive depth");
            let f = flow_ab.at(x, y);
            let flow_target = Vector2::new(pix.x + f[0], pix.y + f[1]);
            let gap = rigid_target - flow_target;
            // d(moved)/dD = R * ray; chain through the projection
            let dm: Vector3<f64> = pose_ab.rotation() * ray;
            let z = moved.z;
            let dpx = k.fx * (dm.x / z - moved.x * dm.z / (z * z));
            let dpy = k.fy * (dm.y / z - moved.y * dm.z / (z * z));
            let dterm = weight * (gap.x.signum() * dpx + gap.y.signum() * dpy);
            entries.push((y * w + x, dterm));
        }
    }
    if mass <= 0.0 {
        return Err(LossError::EmptyMask);
    }
    for (idx, dterm) in entries {
        grads[idx] = dterm / mass;
    }
    Ok(grads)
}

/// Depth reprojection loss: compares the depth of each reprojected point
/// against the second depth map interpolated at the reprojected pixel,
/// weighted by occlusion and inlier masks:
/// `mean |1 - D_b^a(p_bd) / D_b^s(p_bd)|` over the weighted support.
pub fn depth_reprojection_loss(
    depth_a: &DepthMap,
    depth_b: &DepthMap,
    pose_ab: &RigidPose,
    k: &CameraIntrinsics,
    occlusion: &ScoreMap,
    inlier_score: &ScoreMap,
) -> Result<f64, LossError> {
    let (w, h) = (depth_a.width(), depth_a.height());
    if depth_b.width() != w
        || depth_b.height() != h
        || occlusion.width() != w
        || occlusion.height() != h
        || inlier_score.width() != w
        || inlier_score.height() != h
    {
        return Err(LossError::DimensionMismatch);
    }
    let mut numer = 0.0;
    let mut mass = 0.0;
    for y in 0..h {
        for x in 0..w {
            let weight = occlusion.at(x, y) * inlier_score.at(x, y);
            if weight <= 0.0 {
                continue;
            }
            let d = match depth_a.get(x, y) {
                Some(d) => d,
                None => continue,
            };
            let pix = Vector2::new(x as f64, y as f64);
            let cam = unproject(pix, d, k).expect("positive depth");
            let moved = pose_ab.transform_point(cam);
            if moved.z <= 0.0 {
                continue;
            }
            let target = project(moved, k).expect("positive depth");
            let sampled = match depth_b.sample(target.x, target.y) {
                Some(v) if v > 0.0 => v,
                _ => continue,
            };
            numer += weight * (1.0 - moved.z / sampled).abs();
            mass += weight;
        }
    }
    if mass <= 0.0 {
        return Err(LossError::EmptyMask);
    }
    Ok(numer / mass)
}

fn channel_mean_grad_x(image: &Image, x: usize, y: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..image.channels() {
        acc += (image.at(c, x + 1, y) - image.at(c, x, y)).abs();
    }
    acc / image.channels() as f64
}

fn channel_mean_grad_y(image: &Image, x: usize, y: usize) -> f64 {
    let mut acc = 0.0;
    for c in 0..image.channels() {
        acc += (image.at(c, x, y + 1) - image.at(c, x, y)).abs();
    }
    acc / image.channels() as f64
}

/// Edge-aware smoothness of a mean-normalized disparity map:
/// `mean(|dx d_n| e^{-|dx I|}) + mean(|dy d_n| e^{-|dy I|})`, forward
/// differences, image gradients averaged over channels.
pub fn smoothness_loss(disparity: &ScoreMap, image: &Image) -> Result<f64, LossError> {
    let (w, h) = (disparity.width(), disparity.height());
    if image.width() != w || image.height() != h {
        return Err(LossError::DimensionMismatch);
    }
    let mean = disparity.sum() / disparity.len() as f64;
    if mean <= 0.0 || mean.is_nan() {
        return Err(LossError::ZeroMeanDisparity);
    }
    let dn = |x: usize, y: usize| disparity.at(x, y) / mean;
    let mut acc_x = 0.0;
    for y in 0..h {
        for x in 0..w - 1 {
            acc_x += (dn(x + 1, y) - dn(x, y)).abs() * (-channel_mean_grad_x(image, x, y)).exp();
        }
    }
    let mut acc_y = 0.0;
    for y in 0..h - 1 {
        for x in 0..w {
            acc_y += (dn(x, y + 1) - dn(x, y)).abs() * (-channel_mean_grad_y(image, x, y)).exp();
        }
    }
    let nx = (h * (w - 1)) as f64;
    let ny = ((h - 1) * w) as f64;
    Ok(acc_x / nx + acc_y / ny)
}

/// Edge-aware smoothness of a raw flow field (no normalization), summed over
/// the two components.
pub fn flow_smoothness(flow: &FlowField, image: &Image) -> Result<f64, LossError> {
    let (w, h) = (flow.width(), flow.height());
    if image.width() != w || image.height() != h {
        return Err(LossError::DimensionMismatch);
    }
    let mut acc_x = 0.0;
    for y in 0..h {
        for x in 0..w - 1 {
            let a = flow.at(x, y);
            let b = flow.at(x + 1, y);
            let weight = (-channel_mean_grad_x(image, x, y)).exp();
            acc_x += ((b[0] - a[0]).abs() + (b[1] - a[1]).abs()) * weight;
        }
    }
    let mut acc_y = 0.0;
    for y in 0..h - 1 {
        for x in 0..w {
            let a = flow.at(x, y);
            let b = flow.at(x, y + 1);
            let weight = (-channel_mean_grad_y(image, x, y)).exp();
            acc_y += ((b[0] - a[0]).abs() + (b[1] - a[1]).abs()) * weight;
        }
    }
    let nx = (h * (w - 1)) as f64;
    let ny = ((h - 1) * w) as f64;
    Ok(acc_x / nx + acc_y / ny)
}

/// Per-pixel SSIM between two images over full 3x3 windows (interior
/// pixels), averaged across channels. Returns `(w-2)*(h-2)` values in
/// row-major order.
pub fn ssim_map(a: &Image, b: &Image) -> Result<Vec<f64>, LossError> {
    if !a.same_size(b) || a.channels() != b.channels() || a.width() < 3 || a.height() < 3 {
        return Err(LossError::DimensionMismatch);
    }
    let (w, h) = (a.width(), a.height());
    let mut out = Vec::with_capacity((w - 2) * (h - 2));
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let mut acc = 0.0;
            for c in 0..a.channels() {
                acc += ssim_window(a, b, c, x, y);
            }
            out.push(acc / a.channels() as f64);
        }
    }
    Ok(out)
}

fn ssim_window(a: &Image, b: &Image, c: usize, x: usize, y: usize) -> f64 {
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    let mut sum_aa = 0.0;
    let mut sum_bb = 0.0;
    let mut sum_ab = 0.0;
    for dy in 0..3 {
        for dx in 0..3 {
            let va = a.at(c, x + dx - 1, y + dy - 1);
            let vb = b.at(c, x + dx - 1, y + dy - 1);
            sum_a += va;
            sum_b += vb;
            sum_aa += va * va;
            sum_bb += vb * vb;
            sum_ab += va * vb;
        }
    }
    let n = 9.0;
    let mu_a = sum_a / n;
    let mu_b = sum_b / n;
    let var_a = sum_aa / n - mu_a * mu_a;
    let var_b = sum_bb / n - mu_b * mu_b;
    let cov = sum_ab / n - mu_a * mu_b;
    ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2))
}

/// Photometric flow loss: warps the second image to the first along the
/// flow, then combines L1 and SSIM dissimilarity over non-occluded pixels
/// with full warp support, plus edge-aware flow smoothness:
/// `(1-alpha) L1 + (alpha/2)(1 - SSIM) + beta * Lfs`.
pub fn flow_photometric_loss(
    image_a: &Image,
    image_b: &Image,
    flow_ab: &FlowField,
    occlusion: &ScoreMap,
    alpha: f64,
    beta: f64,
) -> Result<f64, LossError> {
    let (w, h) = (image_a.width(), image_a.height());
    if image_b.width() != w
        || image_b.height() != h
        || flow_ab.width() != w
        || flow_ab.height() != h
        || occlusion.width() != w
        || occlusion.height() != h
        || image_a.channels() != image_b.channels()
    {
        return Err(LossError::DimensionMismatch);
    }
    let ch = image_a.channels();
    // warp and validity
    let mut warped = Image::zeros(w, h, ch);
    let mut warp_ok = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let f = flow_ab.at(x, y);
            let tx = x as f64 + f[0];
            let ty = y as f64 + f[1];
            let mut ok = true;
            for c in 0..ch {
                match image_b.sample(c, tx, ty) {
                    Some(v) => warped.set(c, x, y, v),
                    None => {
                        ok = false;
                        break;
                    }
                }
            }
            warp_ok[y * w + x] = ok;
        }
    }
    let window_ok = |x: usize, y: usize| -> bool {
        for dy in 0..3 {
            for dx in 0..3 {
                if !warp_ok[(y + dy - 1) * w + (x + dx - 1)] {
                    return false;
                }
            }
        }
        true
    };
    let mut acc = 0.0;
    let mut count = 0usize;
    if w >= 3 && h >= 3 {
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                if occlusion.at(x, y) <= 0.0 || !window_ok(x, y) {
                    continue;
                }
                let mut l1 = 0.0;
                let mut ssim = 0.0;
                for c in 0..ch {
                    l1 += (image_a.at(c, x, y) - warped.at(c, x, y)).abs();
                    ssim += ssim_window(image_a, &warped, c, x, y);
                }
                l1 /= ch as f64;
                ssim /= ch as f64;
                acc += (1.0 - alpha) * l1 + (alpha / 2.0) * (1.0 - ssim);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(LossError::EmptyMask);
    }
    let lfs = flow_smoothness(flow_ab, image_a)?;
    Ok(acc / count as f64 + beta * lfs)
}

/// All inputs of the combined objective for one image pair. The depth maps
/// are the raw network predictions; the scale fit against the triangulated
/// structure happens inside [`total_loss`].
#[derive(Debug, Clone, Copy)]
pub struct LossInputs<'a> {
    pub image_a: &'a Image,
    pub image_b: &'a Image,
    pub flow_ab: &'a FlowField,
    pub depth_a: &'a DepthMap,
    pub depth_b: &'a DepthMap,
    pub pose_ab: &'a RigidPose,
    pub intrinsics: &'a CameraIntrinsics,
    pub occlusion: &'a ScoreMap,
    pub inlier_score: &'a ScoreMap,
    pub epipolar_distance: &'a ScoreMap,
    pub triangulated: &'a TriangulatedSet,
}

/// Per-term values and the exact weighted combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub flow_photometric: f64,
    pub depth: f64,
    pub flow_reprojection: f64,
    pub depth_reprojection: f64,
    pub smoothness: f64,
    pub total: f64,
    /// Scale fitted from predicted depth to the triangulated structure, when
    /// a depth-dependent term was evaluated.
    pub scale: Option<f64>,
    pub depth_samples: usize,
    pub photometric_pixels: usize,
}

impl LossReport {
    /// Flat `key=value` text used by the CLI.
    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "loss.flow_photometric={:.17e}", self.flow_photometric);
        let _ = writeln!(s, "loss.depth={:.17e}", self.depth);
        let _ = writeln!(s, "loss.flow_reprojection={:.17e}", self.flow_reprojection);
        let _ = writeln!(s, "loss.depth_reprojection={:.17e}", self.depth_reprojection);
        let _ = writeln!(s, "loss.smoothness={:.17e}", self.smoothness);
        let _ = writeln!(s, "loss.total={:.17e}", self.total);
        match self.scale {
            Some(scale) => {
                let _ = writeln!(s, "scale={scale:.17e}");
            }
            None => {
                let _ = writeln!(s, "scale=none");
            }
        }
        let _ = writeln!(s, "depth_samples={}", self.depth_samples);
        let _ = writeln!(s, "photometric_pixels={}", self.photometric_pixels);
        s
    }
}

/// Evaluates every weighted term once and combines them exactly as
/// `w1*Lf + w2*Ld + w3*(w31*Lpf + w32*Lpd) + w4*Ls`. Terms whose effective
/// weight is zero are skipped and reported as zero, so a zero-weight
/// configuration never fails on unrelated inputs.
pub fn total_loss(inputs: &LossInputs, weights: &LossWeights) -> Result<LossReport, LossError> {
    let mut report = LossReport {
        flow_photometric: 0.0,
        depth: 0.0,
        flow_reprojection: 0.0,
        depth_reprojection: 0.0,
        smoothness: 0.0,
        total: 0.0,
        scale: None,
        depth_samples: 0,
        photometric_pixels: 0,
    };
    let need_pf = weights.w3 > 0.0 && weights.w31 > 0.0;
    let need_pd = weights.w3 > 0.0 && weights.w32 > 0.0;
    let need_scale = weights.w2 > 0.0 || need_pf || need_pd;

    let mut depth_t_a = None;
    let mut depth_t_b = None;
    if need_scale {
        let (pred, gt) = paired_depth_samples(inputs.depth_a, inputs.triangulated);
        report.depth_samples = pred.len();
        let (loss_d, s) = scale_aligned_depth_loss(&pred, &gt)?;
        report.scale = Some(s);
        if weights.w2 > 0.0 {
            report.depth = loss_d;
        }
        depth_t_a = Some(inputs.depth_a.scaled(s));
        depth_t_b = Some(inputs.depth_b.scaled(s));
    }
    if need_pf {
        report.flow_reprojection = flow_reprojection_loss(
            inputs.flow_ab,
            depth_t_a.as_ref().expect("scale fitted"),
            inputs.pose_ab,
            inputs.intrinsics,
            inputs.inlier_score,
            inputs.epipolar_distance,
        )?;
    }
    if need_pd {
        report.depth_reprojection = depth_reprojection_loss(
            depth_t_a.as_ref().expect("scale fitted"),
            depth_t_b.as_ref().expect("scale fitted"),
            inputs.pose_ab,
            inputs.intrinsics,
            inputs.occlusion,
            inputs.inlier_score,
        )?;
    }
    if weights.w4 > 0.0 {
        let mut disparity = ScoreMap::zeros(inputs.depth_a.width(), inputs.depth_a.height());
        for y in 0..inputs.depth_a.height() {
            for x in 0..inputs.depth_a.width() {
                if let Some(d) = inputs.depth_a.get(x, y) {
                    disparity.set(x, y, 1.0 / d);
                }
            }
        }
        report.smoothness = smoothness_loss(&disparity, inputs.image_a)?;
    }
    if weights.w1 > 0.0 {
        report.flow_photometric = flow_photometric_loss(
            inputs.image_a,
            inputs.image_b,
            inputs.flow_ab,
            inputs.occlusion,
            weights.alpha,
            weights.beta,
        )?;
        // photometric support for diagnostics
        report.photometric_pixels = inputs
            .occlusion
            .data()
            .iter()
            .filter(|&&v| v > 0.0)
            .count();
    }
    report.total = weights.w1 * report.flow_photometric
        + weights.w2 * report.depth
        + weights.w3 * (weights.w31 * report.flow_reprojection + weights.w32 * report.depth_reprojection)
        + weights.w4 * report.smoothness;
    Ok(report)
}
