//! Pinhole camera model and rigid-pose algebra.
//!
//! Everything downstream (epipolar estimation, triangulation, losses, VO)
//! is expressed through these three types: [`CameraIntrinsics`] maps pixels
//! to rays and back, [`RigidPose`] is an SE(3) element stored as rotation
//! matrix + translation, and [`Ray`] is the origin/direction pair consumed
//! by midpoint triangulation.

use nalgebra::{Matrix3, Matrix4, Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("depth must be strictly positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("intrinsics violate fx>0, fy>0, 0<=cx<width, 0<=cy<height")]
    InvalidIntrinsics,
    #[error("rotation is not orthonormal with det +1 within 1e-9")]
    InvalidRotation,
}

/// Pinhole calibration: focal lengths, principal point and image size, all in
/// pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        if !(fx > 0.0 && fy > 0.0)
            || !(0.0..(width as f64)).contains(&cx)
            || !(0.0..(height as f64)).contains(&cy)
            || [fx, fy, cx, cy].iter().any(|v| !v.is_finite())
        {
            return Err(GeometryError::InvalidIntrinsics);
        }
        Ok(k)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            1.0 / self.fx,
            0.0,
            -self.cx / self.fx,
            0.0,
            1.0 / self.fy,
            -self.cy / self.fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Camera-frame ray direction through a pixel: `K^-1 [x, y, 1]`.
    pub fn pixel_ray(&self, pixel: Vector2<f64>) -> Vector3<f64> {
        Vector3::new(
            (pixel.x - self.cx) / self.fx,
            (pixel.y - self.cy) / self.fy,
            1.0,
        )
    }

    /// True when the pixel lies in `[0, width) x [0, height)`.
    pub fn contains(&self, pixel: Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x < self.width as f64
            && pixel.y < self.height as f64
    }

    /// True when the pixel lies in the bilinear-interpolable domain
    /// `[0, width-1] x [0, height-1]`.
    pub fn interpolable(&self, pixel: Vector2<f64>) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x <= (self.width - 1) as f64
            && pixel.y <= (self.height - 1) as f64
    }
}

/// Projects a camera-frame point to pixel coordinates.
pub fn project(point: Vector3<f64>, k: &CameraIntrinsics) -> Result<Vector2<f64>, GeometryError> {
    if point.z <= 0.0 {
        return Err(GeometryError::NonPositiveDepth(point.z));
    }
    Ok(Vector2::new(
        k.fx * point.x / point.z + k.cx,
        k.fy * point.y / point.z + k.cy,
    ))
}

/// Lifts a pixel to the camera-frame point at the given depth.
pub fn unproject(
    pixel: Vector2<f64>,
    depth: f64,
    k: &CameraIntrinsics,
) -> Result<Vector3<f64>, GeometryError> {
    if depth <= 0.0 {
        return Err(GeometryError::NonPositiveDepth(depth));
    }
    Ok(k.pixel_ray(pixel) * depth)
}

/// Rigid transform `x -> R x + t`. The rotation is kept orthonormal with
/// determinant +1; translation is unitless up-to-scale unless stated
/// otherwise by the producer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Frobenius-norm distance of `R^T R` from the identity.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    (r.transpose() * r - Matrix3::identity()).norm()
}

impl RigidPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if orthonormality_error(&rotation) > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(GeometryError::InvalidRotation);
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Caller guarantees the rotation is orthonormal with det +1.
    pub fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.translation
    }

    pub fn transform_point(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn invert(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Rescales the translation, leaving the rotation untouched.
    pub fn scaled_translation(&self, factor: f64) -> Self {
        Self {
            rotation: self.rotation,
            translation: self.translation * factor,
        }
    }

    pub fn homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Geodesic distance between the two rotations, in radians.
    pub fn rotation_angle_to(&self, other: &Self) -> f64 {
        let r = self.rotation.transpose() * other.rotation;
        rotation_angle(&r)
    }

    /// Projects the rotation back onto SO(3) (polar decomposition via SVD).
    /// Used after long compose chains to bound drift.
    pub fn renormalized(&self) -> Self {
        Self {
            rotation: nearest_rotation(&self.rotation),
            translation: self.translation,
        }
    }

    pub fn orthonormality_drift(&self) -> f64 {
        orthonormality_error(&self.rotation)
    }
}

/// Rotation angle of an orthonormal matrix, in radians.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    (((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0)).acos()
}

/// Angle between two directions in radians, ignoring their lengths.
pub fn angle_between(a: Vector3<f64>, b: Vector3<f64>) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0).acos()
}

/// Rodrigues formula; `axis_angle` encodes axis * angle.
pub fn rotation_from_axis_angle(axis_angle: Vector3<f64>) -> Matrix3<f64> {
    let theta = axis_angle.norm();
    if theta < 1e-14 {
        return Matrix3::identity();
    }
    let k = axis_angle / theta;
    let kx = skew_symmetric(k);
    Matrix3::identity() + kx * theta.sin() + kx * kx * (1.0 - theta.cos())
}

pub fn skew_symmetric(v: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Nearest orthonormal matrix with det +1.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd with u");
    let v_t = svd.v_t.expect("svd with v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Ray `origin + lambda * direction`; the direction need not be unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Self {
        debug_assert!(direction.norm() > 0.0, "ray direction must be nonzero");
        Self { origin, direction }
    }

    pub fn point_at(&self, lambda: f64) -> Vector3<f64> {
        self.origin + self.direction * lambda
    }
}
