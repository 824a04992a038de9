//! Pose from 3D-2D correspondences: EPnP-style linear initialization with a
//! Gauss-Newton reprojection refinement, wrapped in a RANSAC loop.
//!
//! The linear stage expresses the scene points as barycentric combinations
//! of four control points, recovers the camera-frame control points from the
//! null direction of the projection constraints, fixes the scale and sign by
//! distance consistency and depth positivity, and reads the pose off a rigid
//! 3D-3D alignment. Gauss-Newton then minimizes the reprojection error on
//! the inlier set.

use crate::config::PnpConfig;
use crate::geometry::{project, rotation_from_axis_angle, skew_symmetric, CameraIntrinsics, RigidPose};
use crate::metrics::umeyama_alignment;
use crate::rng::DetRng;
use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PnpError {
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { got: usize, need: usize },
    #[error("no pose reached {need} inliers (best {best})")]
    PnpFailure { best: usize, need: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpResult {
    /// Pose mapping world (first-camera) coordinates into the observing
    /// camera's frame.
    pub pose: RigidPose,
    pub inliers: Vec<bool>,
    pub iterations: usize,
}

const MIN_SAMPLE: usize = 6;

/// EPnP-style linear pose estimate from 3D points and their pixel
/// observations. Uses four control points in general position and drops to
/// three for coplanar point sets. Returns `None` for degenerate
/// configurations.
fn epnp_linear(
    points: &[Vector3<f64>],
    pixels: &[Vector2<f64>],
    k: &CameraIntrinsics,
) -> Option<RigidPose> {
    let n = points.len();
    if n < 4 {
        return None;
    }
    let nf = n as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / nf;
    let mut cov = Matrix3::zeros();
    for p in points {
        let c = p - centroid;
        cov += c * c.transpose();
    }
    cov /= nf;
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let axes: Vec<Vector3<f64>> = order
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned() * eig.eigenvalues[i].max(0.0).sqrt())
        .collect();
    if axes[1].norm() < 1e-9 {
        return None; // collinear points
    }
    let coplanar = axes[2].norm_squared() < 1e-6 * axes[0].norm_squared();

    // control points: centroid plus the significant principal axes
    let mut control: Vec<Vector3<f64>> = vec![centroid];
    let n_axes = if coplanar { 2 } else { 3 };
    for axis in axes.iter().take(n_axes) {
        control.push(centroid + axis);
    }
    let nc = control.len();

    // barycentric coordinates (alpha_0 = 1 - sum of the rest)
    let alphas: Vec<Vec<f64>> = if coplanar {
        let b1 = control[1] - centroid;
        let b2 = control[2] - centroid;
        let g11 = b1.dot(&b1);
        let g12 = b1.dot(&b2);
        let g22 = b2.dot(&b2);
        let det = g11 * g22 - g12 * g12;
        if det.abs() < 1e-300 {
            return None;
        }
        points
            .iter()
            .map(|p| {
                let d = p - centroid;
                let r1 = b1.dot(&d);
                let r2 = b2.dot(&d);
                let u = (g22 * r1 - g12 * r2) / det;
                let v = (g11 * r2 - g12 * r1) / det;
                vec![1.0 - u - v, u, v]
            })
            .collect()
    } else {
        let basis = Matrix3::from_columns(&[
            control[1] - centroid,
            control[2] - centroid,
            control[3] - centroid,
        ]);
        let basis_inv = basis.try_inverse()?;
        points
            .iter()
            .map(|p| {
                let b = basis_inv * (p - centroid);
                vec![1.0 - b.x - b.y - b.z, b.x, b.y, b.z]
            })
            .collect()
    };

    // constraint matrix: each observation pins two rows over the 3*nc
    // camera-frame control-point coordinates
    let cols = 3 * nc;
    let rows = (2 * n).max(cols);
    let mut m = DMatrix::<f64>::zeros(rows, cols);
    for (i, (alpha, pix)) in alphas.iter().zip(pixels).enumerate() {
        for (j, &a) in alpha.iter().enumerate() {
            m[(2 * i, 3 * j)] = a * k.fx;
            m[(2 * i, 3 * j + 2)] = a * (k.cx - pix.x);
            m[(2 * i + 1, 3 * j + 1)] = a * k.fy;
            m[(2 * i + 1, 3 * j + 2)] = a * (k.cy - pix.y);
        }
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t?;
    let s = &svd.singular_values;
    let mut sv_order: Vec<usize> = (0..s.len()).collect();
    sv_order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
    let null = v_t.row(sv_order[cols - 1]);
    let mut cam_control: Vec<Vector3<f64>> = (0..nc)
        .map(|j| Vector3::new(null[3 * j], null[3 * j + 1], null[3 * j + 2]))
        .collect();

    // scale from pairwise distance consistency
    let mut num = 0.0;
    let mut den = 0.0;
    for a in 0..nc {
        for b in (a + 1)..nc {
            let dc = (cam_control[a] - cam_control[b]).norm();
            let dw = (control[a] - control[b]).norm();
            num += dc * dw;
            den += dc * dc;
        }
    }
    if den < 1e-300 {
        return None;
    }
    let beta = num / den;
    for c in &mut cam_control {
        *c *= beta;
    }

    // sign: scene points must sit in front of the camera
    let mean_z: f64 = alphas
        .iter()
        .map(|a| a.iter().zip(&cam_control).map(|(&w, c)| w * c.z).sum::<f64>())
        .sum::<f64>()
        / nf;
    if mean_z < 0.0 {
        for c in &mut cam_control {
            *c = -*c;
        }
    }

    if coplanar {
        // three correspondences do not pin the alignment; add the plane
        // normal as a fourth virtual pair (rigid transforms preserve it)
        let n_world = (control[1] - centroid).cross(&(control[2] - centroid));
        let n_cam = (cam_control[1] - cam_control[0]).cross(&(cam_control[2] - cam_control[0]));
        let scale = n_world.norm();
        if scale < 1e-300 || n_cam.norm() < 1e-300 {
            return None;
        }
        let n_cam = n_cam / n_cam.norm() * scale;
        let mut world = vec![control[0], control[1], control[2]];
        let mut cam = cam_control.clone();
        world.push(centroid + n_world);
        cam.push(cam_control[0] + n_cam);
        let sim = umeyama_alignment(&world, &cam, false).ok()?;
        return Some(RigidPose::from_parts_unchecked(sim.rotation, sim.translation));
    }

    let sim = umeyama_alignment(&control, &cam_control, false).ok()?;
    Some(RigidPose::from_parts_unchecked(
        sim.rotation,
        sim.translation,
    ))
}

fn reprojection_error(
    pose: &RigidPose,
    point: Vector3<f64>,
    pixel: Vector2<f64>,
    k: &CameraIntrinsics,
) -> f64 {
    let cam = pose.transform_point(point);
    if cam.z <= 0.0 {
        return f64::INFINITY;
    }
    let proj = project(cam, k).expect("positive depth");
    (proj - pixel).norm()
}

/// Gauss-Newton refinement of the reprojection error over the selected
/// points. Left-multiplicative so(3) updates on the rotation.
fn gauss_newton_refine(
    mut pose: RigidPose,
    points: &[Vector3<f64>],
    pixels: &[Vector2<f64>],
    selection: &[usize],
    k: &CameraIntrinsics,
    iterations: usize,
) -> RigidPose {
    for _ in 0..iterations {
        let mut h = SMatrix::<f64, 6, 6>::zeros();
        let mut g = SVector::<f64, 6>::zeros();
        let mut used = 0usize;
        for &i in selection {
            let cam = pose.transform_point(points[i]);
            if cam.z <= 1e-9 {
                continue;
            }
            let proj = project(cam, k).expect("positive depth");
            let r = proj - pixels[i];
            let z_inv = 1.0 / cam.z;
            // d(project)/d(cam)
            let mut j_proj = SMatrix::<f64, 2, 3>::zeros();
            j_proj[(0, 0)] = k.fx * z_inv;
            j_proj[(0, 2)] = -k.fx * cam.x * z_inv * z_inv;
            j_proj[(1, 1)] = k.fy * z_inv;
            j_proj[(1, 2)] = -k.fy * cam.y * z_inv * z_inv;
            // d(cam)/d(omega, dt) for cam' = exp(omega) cam + dt
            let mut j_cam = SMatrix::<f64, 3, 6>::zeros();
            j_cam
                .fixed_view_mut::<3, 3>(0, 0)
                .copy_from(&(-skew_symmetric(cam)));
            j_cam
                .fixed_view_mut::<3, 3>(0, 3)
                .copy_from(&Matrix3::identity());
            let j = j_proj * j_cam;
            h += j.transpose() * j;
            g += j.transpose() * r;
            used += 1;
        }
        if used < 3 {
            break;
        }
        let delta = match h.cholesky() {
            Some(ch) => ch.solve(&(-g)),
            None => break,
        };
        let omega = Vector3::new(delta[0], delta[1], delta[2]);
        let dt = Vector3::new(delta[3], delta[4], delta[5]);
        let dr = rotation_from_axis_angle(omega);
        pose = RigidPose::from_parts_unchecked(
            dr * pose.rotation(),
            dr * pose.translation() + dt,
        )
        .renormalized();
        if delta.norm() < 1e-14 {
            break;
        }
    }
    pose
}

/// Robust PnP: EPnP hypotheses on minimal samples, inlier counting by
/// reprojection error, adaptive iteration bound, and Gauss-Newton refinement
/// on the best inlier set.
pub fn solve_pnp_ransac(
    points: &[Vector3<f64>],
    pixels: &[Vector2<f64>],
    k: &CameraIntrinsics,
    cfg: &PnpConfig,
    rng: &mut DetRng,
) -> Result<PnpResult, PnpError> {
    let n = points.len();
    if n < MIN_SAMPLE || pixels.len() != n {
        return Err(PnpError::TooFewPoints {
            got: n.min(pixels.len()),
            need: MIN_SAMPLE,
        });
    }
    let mut best_count = 0usize;
    let mut best_mask = vec![false; n];
    let mut best_pose: Option<RigidPose> = None;
    let mut needed = cfg.max_iters.max(1);
    let mut iterations = 0usize;
    while iterations < needed.min(cfg.max_iters.max(1)) {
        iterations += 1;
        let idx = rng.sample_indices(n, MIN_SAMPLE);
        let sample_pts: Vec<Vector3<f64>> = idx.iter().map(|&i| points[i]).collect();
        let sample_pix: Vec<Vector2<f64>> = idx.iter().map(|&i| pixels[i]).collect();
        let Some(rough) = epnp_linear(&sample_pts, &sample_pix, k) else {
            continue;
        };
        let sel: Vec<usize> = (0..MIN_SAMPLE).collect();
        let hypo = gauss_newton_refine(rough, &sample_pts, &sample_pix, &sel, k, 5);

        let mut count = 0usize;
        let mut mask = vec![false; n];
        for i in 0..n {
            if reprojection_error(&hypo, points[i], pixels[i], k) < cfg.threshold {
                mask[i] = true;
                count += 1;
            }
        }
        if count > best_count {
            best_count = count;
            best_mask = mask;
            best_pose = Some(hypo);
            let w = count as f64 / n as f64;
            let p_good = w.powi(MIN_SAMPLE as i32);
            if p_good >= 1.0 {
                needed = 1;
            } else if p_good > 0.0 {
                let est = (1.0 - 0.99f64).ln() / (1.0 - p_good).ln();
                needed = if est.is_finite() && est >= 0.0 {
                    (est.ceil() as usize).max(1)
                } else {
                    cfg.max_iters
                };
            }
        }
    }
    if best_count < cfg.min_inliers.max(MIN_SAMPLE) {
        return Err(PnpError::PnpFailure {
            best: best_count,
            need: cfg.min_inliers.max(MIN_SAMPLE),
        });
    }
    let inlier_idx: Vec<usize> = (0..n).filter(|&i| best_mask[i]).collect();
    let inlier_pts: Vec<Vector3<f64>> = inlier_idx.iter().map(|&i| points[i]).collect();
    let inlier_pix: Vec<Vector2<f64>> = inlier_idx.iter().map(|&i| pixels[i]).collect();
    let init = epnp_linear(&inlier_pts, &inlier_pix, k)
        .unwrap_or_else(|| best_pose.expect("a best hypothesis exists"));
    let sel: Vec<usize> = (0..inlier_pts.len()).collect();
    let refined = gauss_newton_refine(init, &inlier_pts, &inlier_pix, &sel, k, 20);
    Ok(PnpResult {
        pose: refined,
        inliers: best_mask,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::angle_between;

    fn k_test() -> CameraIntrinsics {
        CameraIntrinsics::new(480.0, 470.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn make_scene(
        rng: &mut DetRng,
        pose: &RigidPose,
        k: &CameraIntrinsics,
        n: usize,
    ) -> (Vec<Vector3<f64>>, Vec<Vector2<f64>>) {
        let mut pts = Vec::new();
        let mut pix = Vec::new();
        while pts.len() < n {
            let p = Vector3::new(
                rng.range_f64(-2.0, 2.0),
                rng.range_f64(-1.5, 1.5),
                rng.range_f64(3.0, 9.0),
            );
            let cam = pose.transform_point(p);
            if cam.z <= 0.1 {
                continue;
            }
            let proj = project(cam, k).unwrap();
            if !k.contains(proj) {
                continue;
            }
            pts.push(p);
            pix.push(proj);
        }
        (pts, pix)
    }

    fn default_cfg() -> PnpConfig {
        PnpConfig {
            threshold: 1.0,
            min_inliers: 6,
            sample_n: 6000,
            max_iters: 300,
        }
    }

    #[test]
    fn recovers_known_pose_exactly() {
        let k = k_test();
        let mut rng = DetRng::new(1, "pnp");
        for trial in 0..10 {
            let axis = Vector3::new(rng.normal(), rng.normal(), rng.normal()).normalize();
            let rot = rotation_from_axis_angle(axis * rng.range_f64(0.0, 0.2));
            let center = Vector3::new(rng.normal(), rng.normal(), rng.normal()) * 0.5;
            let pose = RigidPose::from_parts_unchecked(rot, -(rot * center));
            let (pts, pix) = make_scene(&mut rng, &pose, &k, 80);
            let res =
                solve_pnp_ransac(&pts, &pix, &k, &default_cfg(), &mut DetRng::new(trial, "r"))
                    .unwrap();
            let rot_err = res.pose.rotation_angle_to(&pose);
            let t_err = (res.pose.translation() - pose.translation()).norm()
                / pose.translation().norm().max(1e-9);
            assert!(rot_err < 1e-6, "trial {trial} rotation error {rot_err}");
            assert!(t_err < 1e-6, "trial {trial} translation error {t_err}");
            assert!(res.inliers.iter().all(|&m| m));
        }
    }

    #[test]
    fn identity_motion_recovers_identity() {
        let k = k_test();
        let mut rng = DetRng::new(2, "pnp");
        let pose = RigidPose::identity();
        let (pts, pix) = make_scene(&mut rng, &pose, &k, 60);
        let res =
            solve_pnp_ransac(&pts, &pix, &k, &default_cfg(), &mut DetRng::new(0, "r")).unwrap();
        assert!(res.pose.rotation_angle_to(&pose) < 1e-9);
        assert!(res.pose.translation().norm() < 1e-9);
    }

    #[test]
    fn robust_to_outliers() {
        let k = k_test();
        let mut successes = 0;
        for seed in 0..100u64 {
            let mut rng = DetRng::new(seed, "scene");
            let axis = Vector3::new(rng.normal(), rng.normal(), rng.normal()).normalize();
            let rot = rotation_from_axis_angle(axis * 0.1);
            let pose = RigidPose::from_parts_unchecked(rot, Vector3::new(0.3, -0.1, 0.15));
            let (pts, mut pix) = make_scene(&mut rng, &pose, &k, 200);
            // 30% outliers: uniform in-bounds targets
            let n_out = 60;
            let idx = rng.sample_indices(pix.len(), n_out);
            for i in idx {
                pix[i] = Vector2::new(rng.range_f64(0.0, 639.0), rng.range_f64(0.0, 479.0));
            }
            let res = match solve_pnp_ransac(&pts, &pix, &k, &default_cfg(), &mut DetRng::new(seed, "r"))
            {
                Ok(r) => r,
                Err(_) => continue,
            };
            let rot_err = res.pose.rotation_angle_to(&pose).to_degrees();
            let t_dir_err =
                angle_between(res.pose.translation(), pose.translation()).to_degrees();
            if rot_err < 0.5 && t_dir_err < 2.0 {
                successes += 1;
            }
        }
        assert!(successes >= 95, "only {successes}/100 seeds succeeded");
    }

    #[test]
    fn too_few_points_rejected() {
        let k = k_test();
        let pts = vec![Vector3::new(0.0, 0.0, 5.0); 5];
        let pix = vec![Vector2::new(320.0, 240.0); 5];
        assert!(matches!(
            solve_pnp_ransac(&pts, &pix, &k, &default_cfg(), &mut DetRng::new(0, "r")),
            Err(PnpError::TooFewPoints { got: 5, need: 6 })
        ));
    }

    #[test]
    fn deterministic_given_seed() {
        let k = k_test();
        let mut rng = DetRng::new(3, "pnp");
        let pose = RigidPose::from_parts_unchecked(Matrix3::identity(), Vector3::new(0.2, 0.0, 0.1));
        let (pts, pix) = make_scene(&mut rng, &pose, &k, 50);
        let a = solve_pnp_ransac(&pts, &pix, &k, &default_cfg(), &mut DetRng::new(9, "r")).unwrap();
        let b = solve_pnp_ransac(&pts, &pix, &k, &default_cfg(), &mut DetRng::new(9, "r")).unwrap();
        assert_eq!(a, b);
    }
}
