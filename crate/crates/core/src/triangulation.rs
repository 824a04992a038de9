//! Closed-form midpoint triangulation of pixel correspondences with
//! per-sample validity filtering and analytic Jacobians.
//!
//! For rays `c_i + lambda_i * n_i` the midpoint solution minimizes the sum of
//! squared distances to both rays. Setting the derivative with respect to the
//! point to zero places it halfway between the closest ray points, and the
//! stationarity conditions in `lambda` form the 2x2 system
//!
//! ```text
//! [  |n1|^2   -n1.n2 ] [l1]   [ n1.(c2-c1) ]
//! [ -n1.n2    |n2|^2 ] [l2] = [ n2.(c1-c2) ]
//! ```
//!
//! solved here with the explicit adjugate-over-determinant inverse. The
//! solver is smooth in the pixel coordinates, which gives the closed-form
//! Jacobians below.

use crate::config::TriangulationConfig;
use crate::flow::CorrespondenceSet;
use crate::geometry::{project, CameraIntrinsics, Ray, RigidPose};
use nalgebra::{Matrix3, SMatrix, Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TriangulationError {
    #[error("relative pose has near-zero translation (norm {0:.3e})")]
    PoseDegenerate(f64),
    #[error("rays are too close to parallel for a defined gradient")]
    GradientUndefined,
    #[error("rays are too close to parallel to intersect")]
    ParallelRays,
}

/// Why a triangulated sample was accepted or rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    Ok,
    /// Ray angle statistic below the cutoff (epipole neighborhood) or rays
    /// numerically parallel.
    SmallAngle,
    /// Negative depth in either camera.
    NegativeDepth,
    /// Reprojection outside either image or depth beyond the cap.
    OutOfBounds,
}

/// One triangulated correspondence. `point` is expressed in the first
/// camera's frame; depths may be NaN when the rays were numerically parallel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangulatedSample {
    pub p_a: Vector2<f64>,
    pub p_b: Vector2<f64>,
    pub point: Vector3<f64>,
    pub depth_a: f64,
    pub depth_b: f64,
    pub validity: Validity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriangulatedSet {
    pub samples: Vec<TriangulatedSample>,
}

impl TriangulatedSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn valid(&self) -> impl Iterator<Item = &TriangulatedSample> {
        self.samples.iter().filter(|s| s.validity == Validity::Ok)
    }

    pub fn valid_count(&self) -> usize {
        self.valid().count()
    }

    /// Rescales every triangulated point and depth by `factor`, keeping the
    /// validity flags. Scaling the translation of the generating pose by the
    /// same factor produces exactly this set.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .map(|s| TriangulatedSample {
                    point: s.point * factor,
                    depth_a: s.depth_a * factor,
                    depth_b: s.depth_b * factor,
                    ..*s
                })
                .collect(),
        }
    }

    /// Samples whose depths are positive in both cameras and within the cap;
    /// this is the support notion used by the cheirality check.
    pub fn front_count(&self, max_depth: f64) -> usize {
        self.samples
            .iter()
            .filter(|s| {
                s.depth_a.is_finite()
                    && s.depth_b.is_finite()
                    && s.depth_a > 0.0
                    && s.depth_b > 0.0
                    && s.depth_a <= max_depth
                    && s.depth_b <= max_depth
            })
            .count()
    }
}

/// Closed-form midpoint of two rays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayMidpoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub point: Vector3<f64>,
}

/// Solves the stationarity system for two rays. Fails when the determinant
/// `|n1|^2 |n2|^2 - (n1.n2)^2` vanishes relative to its terms (parallel rays).
pub fn midpoint_of_rays(ray1: &Ray, ray2: &Ray) -> Result<RayMidpoint, TriangulationError> {
    let n1 = ray1.direction;
    let n2 = ray2.direction;
    let d = ray2.origin - ray1.origin;
    let a11 = n1.norm_squared();
    let a22 = n2.norm_squared();
    let a12 = n1.dot(&n2);
    let det = a11 * a22 - a12 * a12;
    if det <= 1e-20 * a11 * a22 {
        return Err(TriangulationError::ParallelRays);
    }
    let b1 = n1.dot(&d);
    let b2 = -n2.dot(&d);
    let lambda1 = (a22 * b1 + a12 * b2) / det;
    let lambda2 = (a12 * b1 + a11 * b2) / det;
    let point = (ray1.point_at(lambda1) + ray2.point_at(lambda2)) * 0.5;
    Ok(RayMidpoint {
        lambda1,
        lambda2,
        point,
    })
}

/// Residuals of the two stationarity conditions at `(lambda1, lambda2)`;
/// both vanish at the exact solution.
pub fn stationarity_residuals(ray1: &Ray, ray2: &Ray, lambda1: f64, lambda2: f64) -> (f64, f64) {
    let n1 = ray1.direction;
    let n2 = ray2.direction;
    let gap = n1 * lambda1 - n2 * lambda2 + ray1.origin - ray2.origin;
    (n1.dot(&gap), -n2.dot(&gap))
}

/// Angle statistic from the supplementary filtering rule: with unit ray
/// directions, `v` is the perpendicular from `c1` onto the second ray's line
/// and the statistic is `cos(angle(v, n1))`. Near-parallel rays drive it to
/// zero. Returns 0 when the perpendicular degenerates.
pub fn ray_angle_statistic(ray1: &Ray, ray2: &Ray) -> f64 {
    let n1 = ray1.direction.normalize();
    let n2 = ray2.direction.normalize();
    let c1c2 = ray1.origin - ray2.origin;
    let v = ray2.origin + n2 * c1c2.dot(&n2) - ray1.origin;
    let norm = v.norm();
    if norm == 0.0 {
        return 0.0;
    }
    v.dot(&n1) / norm
}

/// Builds the camera-A-frame ray pair for a correspondence under `pose_ab`
/// (which maps camera-A coordinates to camera-B coordinates).
pub fn correspondence_rays(
    p_a: Vector2<f64>,
    p_b: Vector2<f64>,
    pose_ab: &RigidPose,
    k: &CameraIntrinsics,
) -> (Ray, Ray) {
    let rt = pose_ab.rotation().transpose();
    let ray_a = Ray::new(Vector3::zeros(), k.pixel_ray(p_a));
    let ray_b = Ray::new(-(rt * pose_ab.translation()), rt * k.pixel_ray(p_b));
    (ray_a, ray_b)
}

/// Triangulates every correspondence, flagging samples that fail the ray
/// angle filter, have negative depth in either camera, reproject outside
/// either image, or exceed the depth cap.
pub fn midpoint_triangulate(
    corrs: &CorrespondenceSet,
    pose_ab: &RigidPose,
    k: &CameraIntrinsics,
    cfg: &TriangulationConfig,
) -> Result<TriangulatedSet, TriangulationError> {
    let t_norm = pose_ab.translation().norm();
    if t_norm < 1e-12 {
        return Err(TriangulationError::PoseDegenerate(t_norm));
    }
    let samples = corrs
        .iter()
        .map(|c| triangulate_one(c.p_a, c.p_b, pose_ab, k, cfg))
        .collect();
    Ok(TriangulatedSet { samples })
}

fn triangulate_one(
    p_a: Vector2<f64>,
    p_b: Vector2<f64>,
    pose_ab: &RigidPose,
    k: &CameraIntrinsics,
    cfg: &TriangulationConfig,
) -> TriangulatedSample {
    let (ray_a, ray_b) = correspondence_rays(p_a, p_b, pose_ab, k);
    let mut sample = TriangulatedSample {
        p_a,
        p_b,
        point: Vector3::new(f64::NAN, f64::NAN, f64::NAN),
        depth_a: f64::NAN,
        depth_b: f64::NAN,
        validity: Validity::SmallAngle,
    };
    let mid = match midpoint_of_rays(&ray_a, &ray_b) {
        Ok(m) => m,
        Err(_) => return sample,
    };
    sample.point = mid.point;
    sample.depth_a = mid.point.z;
    sample.depth_b = pose_ab.transform_point(mid.point).z;

    if ray_angle_statistic(&ray_a, &ray_b) < cfg.min_ray_cos {
        sample.validity = Validity::SmallAngle;
        return sample;
    }
    if sample.depth_a <= 0.0 || sample.depth_b <= 0.0 {
        sample.validity = Validity::NegativeDepth;
        return sample;
    }
    if sample.depth_a > cfg.max_depth || sample.depth_b > cfg.max_depth {
        sample.validity = Validity::OutOfBounds;
        return sample;
    }
    let reproj_a = project(sample.point, k);
    let reproj_b = project(pose_ab.transform_point(sample.point), k);
    let in_bounds = match (reproj_a, reproj_b) {
        (Ok(pa), Ok(pb)) => k.contains(pa) && k.contains(pb),
        _ => false,
    };
    sample.validity = if in_bounds {
        Validity::Ok
    } else {
        Validity::OutOfBounds
    };
    sample
}

/// Jacobian of the triangulated point with respect to `(p_a, p_b)`, columns
/// ordered `[d/dp_a.x, d/dp_a.y, d/dp_b.x, d/dp_b.y]`.
pub fn triangulation_gradient(
    sample: &TriangulatedSample,
    pose_ab: &RigidPose,
    k: &CameraIntrinsics,
) -> Result<SMatrix<f64, 3, 4>, TriangulationError> {
    let (ray_a, ray_b) = correspondence_rays(sample.p_a, sample.p_b, pose_ab, k);
    let n1 = ray_a.direction;
    let n2 = ray_b.direction;
    let d = ray_b.origin - ray_a.origin;
    let a11 = n1.norm_squared();
    let a22 = n2.norm_squared();
    let a12 = n1.dot(&n2);
    let det = a11 * a22 - a12 * a12;
    if det < 1e-12 {
        return Err(TriangulationError::GradientUndefined);
    }
    let b1 = n1.dot(&d);
    let b2 = -n2.dot(&d);
    let lambda1 = (a22 * b1 + a12 * b2) / det;
    let lambda2 = (a12 * b1 + a11 * b2) / det;

    // derivatives of the determinant and the two numerators in ray space
    let ddet_dn1 = n1 * (2.0 * a22) - n2 * (2.0 * a12);
    let ddet_dn2 = n2 * (2.0 * a11) - n1 * (2.0 * a12);
    let dn1_num1 = d * a22 + n2 * b2;
    let dn1_num2 = n2 * b1 + d * a12 + n1 * (2.0 * b2);
    let dn2_num1 = n2 * (2.0 * b1) + n1 * b2 - d * a12;
    let dn2_num2 = n1 * b1 - d * a11;

    let dl1_dn1 = (dn1_num1 - ddet_dn1 * lambda1) / det;
    let dl2_dn1 = (dn1_num2 - ddet_dn1 * lambda2) / det;
    let dl1_dn2 = (dn2_num1 - ddet_dn2 * lambda1) / det;
    let dl2_dn2 = (dn2_num2 - ddet_dn2 * lambda2) / det;

    // x* = (c1 + l1 n1 + c2 + l2 n2) / 2
    let dx_dn1 = (n1 * dl1_dn1.transpose()
        + Matrix3::identity() * lambda1
        + n2 * dl2_dn1.transpose())
        * 0.5;
    let dx_dn2 = (n1 * dl1_dn2.transpose()
        + n2 * dl2_dn2.transpose()
        + Matrix3::identity() * lambda2)
        * 0.5;

    // pixel-to-ray maps: n1 = K^-1 h(p_a), n2 = R^T K^-1 h(p_b)
    let mut j_pix = SMatrix::<f64, 3, 2>::zeros();
    j_pix[(0, 0)] = 1.0 / k.fx;
    j_pix[(1, 1)] = 1.0 / k.fy;
    let dn2_dpb = pose_ab.rotation().transpose() * j_pix;

    let da = dx_dn1 * j_pix;
    let db = dx_dn2 * dn2_dpb;
    let mut out = SMatrix::<f64, 3, 4>::zeros();
    out.fixed_view_mut::<3, 2>(0, 0).copy_from(&da);
    out.fixed_view_mut::<3, 2>(0, 2).copy_from(&db);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TriangulationConfig;
    use crate::flow::{Correspondence, CorrespondenceSet};
    use crate::geometry::rotation_from_axis_angle;
    use crate::rng::DetRng;

    fn default_filter() -> TriangulationConfig {
        TriangulationConfig {
            min_ray_cos: 0.001,
            max_depth: 1e4,
        }
    }

    #[test]
    fn hand_verified_ray_pair() {
        let r1 = Ray::new(Vector3::zeros(), Vector3::new(0.5, 0.0, 1.0));
        let r2 = Ray::new(Vector3::new(1.0, 0.0, 0.0), Vector3::new(-0.5, 0.0, 1.0));
        let m = midpoint_of_rays(&r1, &r2).unwrap();
        assert!((m.lambda1 - 1.0).abs() < 1e-12);
        assert!((m.lambda2 - 1.0).abs() < 1e-12);
        assert!((m.point - Vector3::new(0.5, 0.0, 1.0)).norm() < 1e-12);
        let (s1, s2) = stationarity_residuals(&r1, &r2, m.lambda1, m.lambda2);
        assert!(s1.abs() < 1e-12 && s2.abs() < 1e-12);
    }

    #[test]
    fn skew_rays_match_grid_minimization() {
        // skew ray pair with no exact intersection
        let r1 = Ray::new(Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.3, 0.1, 1.0));
        let r2 = Ray::new(Vector3::new(1.0, 0.2, -0.1), Vector3::new(-0.4, 0.05, 0.9));
        let m = midpoint_of_rays(&r1, &r2).unwrap();

        // brute-force minimization of the substituted objective over a
        // two-stage lambda grid
        let phi = |l1: f64, l2: f64| {
            let gap = r1.point_at(l1) - r2.point_at(l2);
            0.5 * gap.norm_squared()
        };
        let mut best = (0.0, 0.0, f64::INFINITY);
        let mut lo1 = -5.0;
        let mut hi1 = 5.0;
        let mut lo2 = -5.0;
        let mut hi2 = 5.0;
        for _ in 0..6 {
            best = (best.0, best.1, f64::INFINITY);
            let n = 200;
            for i in 0..=n {
                let l1 = lo1 + (hi1 - lo1) * i as f64 / n as f64;
                for j in 0..=n {
                    let l2 = lo2 + (hi2 - lo2) * j as f64 / n as f64;
                    let v = phi(l1, l2);
                    if v < best.2 {
                        best = (l1, l2, v);
                    }
                }
            }
            let span1 = (hi1 - lo1) / n as f64 * 4.0;
            let span2 = (hi2 - lo2) / n as f64 * 4.0;
            lo1 = best.0 - span1;
            hi1 = best.0 + span1;
            lo2 = best.1 - span2;
            hi2 = best.1 + span2;
        }
        assert!((m.lambda1 - best.0).abs() < 1e-6);
        assert!((m.lambda2 - best.1).abs() < 1e-6);
        let oracle_point = (r1.point_at(best.0) + r2.point_at(best.1)) * 0.5;
        assert!((m.point - oracle_point).norm() < 1e-6);
    }

    #[test]
    fn midpoint_is_equidistant() {
        let r1 = Ray::new(Vector3::new(0.0, -0.3, 0.0), Vector3::new(0.2, 0.3, 1.0));
        let r2 = Ray::new(Vector3::new(0.8, 0.1, 0.0), Vector3::new(-0.1, 0.25, 1.1));
        let m = midpoint_of_rays(&r1, &r2).unwrap();
        let d1 = (r1.point_at(m.lambda1) - m.point).norm();
        let d2 = (r2.point_at(m.lambda2) - m.point).norm();
        assert!((d1 - d2).abs() < 1e-12);
    }

    #[test]
    fn parallel_rays_rejected() {
        let r1 = Ray::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 1.0));
        let r2 = Ray::new(Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 0.0, 2.0));
        assert!(matches!(
            midpoint_of_rays(&r1, &r2),
            Err(TriangulationError::ParallelRays)
        ));
    }

    fn lateral_pose(baseline: f64) -> RigidPose {
        // camera B sits at +x: points move -x in B coordinates
        RigidPose::from_parts_unchecked(Matrix3::identity(), Vector3::new(-baseline, 0.0, 0.0))
    }

    fn k_test() -> CameraIntrinsics {
        CameraIntrinsics::new(120.0, 110.0, 64.0, 48.0, 128, 96).unwrap()
    }

    fn project_pair(
        point: Vector3<f64>,
        pose: &RigidPose,
        k: &CameraIntrinsics,
    ) -> (Vector2<f64>, Vector2<f64>) {
        (
            project(point, k).unwrap(),
            project(pose.transform_point(point), k).unwrap(),
        )
    }

    #[test]
    fn exact_scene_reconstruction_and_scale_equivariance() {
        let k = k_test();
        let pose = lateral_pose(0.5);
        let mut rng = DetRng::new(77, "tri-scene");
        let mut items = Vec::new();
        let mut points = Vec::new();
        for _ in 0..64 {
            let p = Vector3::new(
                rng.range_f64(-1.5, 1.5),
                rng.range_f64(-1.0, 1.0),
                rng.range_f64(3.0, 8.0),
            );
            let (pa, pb) = project_pair(p, &pose, &k);
            if !k.contains(pa) || !k.contains(pb) {
                continue;
            }
            items.push(Correspondence {
                p_a: pa,
                p_b: pb,
                weight: 1.0,
            });
            points.push(p);
        }
        let corrs = CorrespondenceSet {
            width: 128,
            height: 96,
            items,
        };
        let tri = midpoint_triangulate(&corrs, &pose, &k, &default_filter()).unwrap();
        assert_eq!(tri.valid_count(), points.len());
        for (s, p) in tri.samples.iter().zip(&points) {
            assert!((s.point - p).norm() < 1e-9 * p.norm());
            assert!((s.depth_a - p.z).abs() < 1e-9);
        }

        // scaling the translation scales every point and depth by the factor
        let scaled_pose = pose.scaled_translation(2.0);
        let tri2 = midpoint_triangulate(&corrs, &scaled_pose, &k, &default_filter()).unwrap();
        for (a, b) in tri.samples.iter().zip(&tri2.samples) {
            assert!((b.point - a.point * 2.0).norm() < 1e-12 * a.point.norm().max(1.0));
            assert!((b.depth_a - 2.0 * a.depth_a).abs() < 1e-12 * a.depth_a.abs());
        }
    }

    #[test]
    fn direction_scale_invariance() {
        let r1 = Ray::new(Vector3::zeros(), Vector3::new(0.4, -0.2, 1.0));
        let r2 = Ray::new(Vector3::new(0.9, 0.0, 0.1), Vector3::new(-0.3, 0.1, 1.0));
        let m = midpoint_of_rays(&r1, &r2).unwrap();
        let r1s = Ray::new(r1.origin, r1.direction * 3.5);
        let r2s = Ray::new(r2.origin, r2.direction * 0.25);
        let ms = midpoint_of_rays(&r1s, &r2s).unwrap();
        assert!((m.point - ms.point).norm() < 1e-12);
    }

    #[test]
    fn zero_translation_is_degenerate() {
        let corrs = CorrespondenceSet {
            width: 8,
            height: 8,
            items: vec![Correspondence {
                p_a: Vector2::new(1.0, 1.0),
                p_b: Vector2::new(2.0, 1.0),
                weight: 1.0,
            }],
        };
        let pose = RigidPose::identity();
        assert!(matches!(
            midpoint_triangulate(&corrs, &pose, &k_test(), &default_filter()),
            Err(TriangulationError::PoseDegenerate(_))
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let k = k_test();
        let mut rng = DetRng::new(5, "grad");
        let mut checked = 0;
        while checked < 100 {
            let axis = Vector3::new(rng.normal(), rng.normal(), rng.normal()).normalize();
            let rot = rotation_from_axis_angle(axis * rng.range_f64(0.0, 0.1));
            let t = Vector3::new(
                rng.range_f64(0.2, 1.0),
                rng.range_f64(-0.2, 0.2),
                rng.range_f64(-0.2, 0.2),
            );
            let pose = RigidPose::from_parts_unchecked(rot, -(rot * t));
            let point = Vector3::new(
                rng.range_f64(-1.0, 1.0),
                rng.range_f64(-0.8, 0.8),
                rng.range_f64(3.0, 9.0),
            );
            let pa = match project(point, &k) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let pb = match project(pose.transform_point(point), &k) {
                Ok(p) => p,
                Err(_) => continue,
            };
            let corrs = CorrespondenceSet {
                width: k.width,
                height: k.height,
                items: vec![Correspondence {
                    p_a: pa,
                    p_b: pb,
                    weight: 1.0,
                }],
            };
            let tri = midpoint_triangulate(&corrs, &pose, &k, &default_filter()).unwrap();
            let sample = tri.samples[0];
            if sample.validity != Validity::Ok {
                continue;
            }
            let jac = triangulation_gradient(&sample, &pose, &k).unwrap();

            let eval = |pa: Vector2<f64>, pb: Vector2<f64>| {
                let (r1, r2) = correspondence_rays(pa, pb, &pose, &k);
                midpoint_of_rays(&r1, &r2).unwrap().point
            };
            let step = 1e-5;
            for col in 0..4 {
                let mut da = Vector2::zeros();
                let mut db = Vector2::zeros();
                match col {
                    0 => da.x = step,
                    1 => da.y = step,
                    2 => db.x = step,
                    _ => db.y = step,
                }
                let plus = eval(pa + da, pb + db);
                let minus = eval(pa - da, pb - db);
                let fd = (plus - minus) / (2.0 * step);
                let analytic = jac.column(col);
                let denom = fd.norm().max(1e-6);
                assert!(
                    (Vector3::from(analytic) - fd).norm() / denom < 1e-5,
                    "column {col}: analytic {analytic:?} vs fd {fd:?}"
                );
            }
            checked += 1;
        }
    }

    #[test]
    fn gradient_undefined_for_parallel_rays() {
        let k = k_test();
        // identical pixels with pure forward translation give parallel rays
        let pose = RigidPose::from_parts_unchecked(Matrix3::identity(), Vector3::new(0.0, 0.0, -0.5));
        let sample = TriangulatedSample {
            p_a: Vector2::new(64.0, 48.0),
            p_b: Vector2::new(64.0, 48.0),
            point: Vector3::new(0.0, 0.0, 1.0),
            depth_a: 1.0,
            depth_b: 1.0,
            validity: Validity::Ok,
        };
        assert!(matches!(
            triangulation_gradient(&sample, &pose, &k),
            Err(TriangulationError::GradientUndefined)
        ));
    }

    #[test]
    fn near_cutoff_angle_behavior() {
        let k = k_test();
        let pose = lateral_pose(0.4);
        let cfg = default_filter();
        // correspondence near the epipole direction: p_b equals p_a with a
        // tiny offset so rays are nearly parallel
        let pa = Vector2::new(64.0, 48.0);
        let make = |offset: f64| CorrespondenceSet {
            width: k.width,
            height: k.height,
            items: vec![Correspondence {
                p_a: pa,
                p_b: Vector2::new(pa.x + offset, pa.y),
                weight: 1.0,
            }],
        };
        // large disparity: comfortably valid with a finite gradient
        let tri = midpoint_triangulate(&make(-10.0), &pose, &k, &cfg).unwrap();
        assert_eq!(tri.samples[0].validity, Validity::Ok);
        let jac = triangulation_gradient(&tri.samples[0], &pose, &k).unwrap();
        assert!(jac.norm().is_finite());
        // vanishing offset: filtered as a small-angle sample
        let tri = midpoint_triangulate(&make(1e-9), &pose, &k, &cfg).unwrap();
        assert_eq!(tri.samples[0].validity, Validity::SmallAngle);
    }
}
