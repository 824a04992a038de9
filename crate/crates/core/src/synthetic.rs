//! Synthetic scenes with exactly known geometry: point clouds and bumpy
//! height-field surfaces observed by a seeded camera trajectory.
//!
//! Rendering is exact. Sparse observations project scene points directly;
//! dense observations rasterize the surface mesh with per-pixel ray/plane
//! intersection and a z-buffer, so rendered depth, flow, occlusion and the
//! true relative pose are mutually consistent to machine precision before
//! any noise is injected. Noise and outliers are applied only afterwards,
//! from their own seeded streams, so the noiseless reference is always
//! recoverable.

use crate::flow::{Correspondence, CorrespondenceSet};
use crate::geometry::{
    project, rotation_from_axis_angle, unproject, CameraIntrinsics, RigidPose,
};
use crate::grid::{DepthMap, FlowField, Image, ScoreMap};
use crate::rng::DetRng;
use nalgebra::{Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("could not place {requested} points visible in two cameras (placed {placed})")]
    InfeasibleFrustum { requested: usize, placed: usize },
    #[error("operation requires a {required} scene")]
    WrongSceneKind { required: &'static str },
    #[error("frame index {0} out of range (scene has {1} frames)")]
    FrameOutOfRange(usize, usize),
    #[error("invalid scene parameter: {0}")]
    BadParameter(&'static str),
}

/// Scene texture painted on surfaces (and sampled into rendered images).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    /// Affine function of the world point. On a fronto-parallel plane under a
    /// rotation-free trajectory the rendered images are affine in pixel
    /// coordinates, which bilinear warping reproduces exactly.
    WorldAffine,
    /// Smooth sinusoidal pattern of the world point.
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SceneKind {
    /// Sparse point cloud; supports sparse observations only.
    Points,
    /// Height-field surface mesh; supports dense observations.
    /// `amplitude` is the bump height in world units (0 gives a plane).
    Surface { amplitude: f64, texture: Texture },
}

/// A compact object with its own linear motion, used to create occlusions
/// and non-rigid regions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovingObject {
    /// Half side length (surface patch) or cluster radius (points).
    pub size: f64,
    /// World-units of translation per frame index.
    pub velocity: Vector3<f64>,
    /// Depth of the object relative to the main scene depth (0..1 fraction).
    pub depth_frac: f64,
    /// Number of extra points in the cluster (points scenes only).
    pub point_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub seed: u64,
    pub n_points: usize,
    pub depth_range: (f64, f64),
    /// Translation magnitude per trajectory step.
    pub baseline: f64,
    /// Rotation magnitude per trajectory step, radians.
    pub rotation: f64,
    pub n_frames: usize,
    pub intrinsics: CameraIntrinsics,
    pub kind: SceneKind,
    pub moving_object: Option<MovingObject>,
    /// Restrict camera motion to in-plane translation (no z component).
    /// Combined with zero rotation and a flat surface this produces exactly
    /// constant flow fields.
    pub lateral_motion_only: bool,
}

impl SceneConfig {
    pub fn points(seed: u64, n_points: usize) -> Self {
        Self {
            seed,
            n_points,
            depth_range: (4.0, 9.0),
            baseline: 0.4,
            rotation: 0.02,
            n_frames: 2,
            intrinsics: default_intrinsics(),
            kind: SceneKind::Points,
            moving_object: None,
            lateral_motion_only: false,
        }
    }

    pub fn surface(seed: u64, n_points: usize) -> Self {
        Self {
            seed,
            n_points,
            depth_range: (4.0, 9.0),
            baseline: 0.4,
            rotation: 0.02,
            n_frames: 2,
            intrinsics: default_intrinsics(),
            kind: SceneKind::Surface {
                amplitude: 0.8,
                texture: Texture::Smooth,
            },
            moving_object: None,
            lateral_motion_only: false,
        }
    }
}

pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics::new(115.0, 108.0, 63.5, 47.5, 128, 96).unwrap()
}

#[derive(Debug, Clone, Copy)]
enum MeshMotion {
    Static,
    /// World translation `velocity * frame_index`.
    Linear(Vector3<f64>),
}

impl MeshMotion {
    fn offset(&self, frame: usize) -> Vector3<f64> {
        match self {
            MeshMotion::Static => Vector3::zeros(),
            MeshMotion::Linear(v) => v * frame as f64,
        }
    }
}

#[derive(Debug, Clone)]
struct Mesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[usize; 3]>,
    motion: MeshMotion,
}

#[derive(Debug, Clone, Copy)]
struct TextureParams {
    kind: Texture,
    base: f64,
    gradient: Vector3<f64>,
    freq: [Vector3<f64>; 3],
    phase: [f64; 3],
}

impl TextureParams {
    fn eval(&self, p: Vector3<f64>) -> f64 {
        match self.kind {
            Texture::WorldAffine => self.base + self.gradient.dot(&p),
            Texture::Smooth => {
                let mut v = self.base;
                for i in 0..3 {
                    v += 0.1 * (self.freq[i].dot(&p) + self.phase[i]).sin();
                }
                v
            }
        }
    }
}

/// Fully known scene: seeded geometry, camera trajectory, optional moving
/// object, reproducible bit-exactly from its configuration.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    pub intrinsics: CameraIntrinsics,
    /// Camera-to-world pose per frame; frame 0 is the identity.
    trajectory: Vec<RigidPose>,
    /// Static world points (points scenes).
    points: Vec<Vector3<f64>>,
    /// Moving cluster points in frame-0 position (points scenes).
    moving_points: Vec<Vector3<f64>>,
    meshes: Vec<Mesh>,
    texture: TextureParams,
}

/// Exact sparse observations of a frame pair.
#[derive(Debug, Clone)]
pub struct SparseObservations {
    pub correspondences: CorrespondenceSet,
    /// True relative pose mapping frame-a coordinates to frame-b coordinates.
    pub pose_ab: RigidPose,
    /// Ground-truth depth of each correspondence in frame a.
    pub depths_a: Vec<f64>,
    /// Ground-truth structure in frame-a coordinates.
    pub points_a: Vec<Vector3<f64>>,
    /// Marks correspondences that belong to the moving object.
    pub moving: Vec<bool>,
}

impl SparseObservations {
    /// Injects target noise and replaces a fraction of targets with uniform
    /// in-bounds pixels. The outlier count is exactly
    /// `round(outlier_frac * n)`.
    pub fn corrupt(&self, noise_px: f64, outlier_frac: f64, rng: &mut DetRng) -> Self {
        let mut out = self.clone();
        let n = out.correspondences.len();
        let w = out.correspondences.width as f64;
        let h = out.correspondences.height as f64;
        if noise_px > 0.0 {
            for c in &mut out.correspondences.items {
                c.p_b.x += noise_px * rng.normal();
                c.p_b.y += noise_px * rng.normal();
            }
        }
        let n_out = (outlier_frac * n as f64).round() as usize;
        if n_out > 0 {
            let idx = rng.sample_indices(n, n_out);
            for i in idx {
                out.correspondences.items[i].p_b =
                    Vector2::new(rng.range_f64(0.0, w - 1.0), rng.range_f64(0.0, h - 1.0));
            }
        }
        out
    }
}

/// Exact dense observations of a frame pair.
#[derive(Debug, Clone)]
pub struct DenseObservations {
    pub flow_ab: FlowField,
    pub flow_ba: FlowField,
    pub depth_a: DepthMap,
    pub depth_b: DepthMap,
    /// Ground-truth visibility of frame-a pixels in frame b (1 = visible),
    /// from z-buffer depth ordering.
    pub visibility_a: ScoreMap,
    pub image_a: Image,
    pub image_b: Image,
    pub pose_ab: RigidPose,
}

impl DenseObservations {
    /// Adds Gaussian noise to both flow fields and replaces a fraction of
    /// flow targets with uniform in-bounds pixels.
    pub fn corrupt_flow(&self, noise_px: f64, outlier_frac: f64, rng: &mut DetRng) -> Self {
        let mut out = self.clone();
        for flow in [&mut out.flow_ab, &mut out.flow_ba] {
            let (w, h) = (flow.width(), flow.height());
            if noise_px > 0.0 {
                for y in 0..h {
                    for x in 0..w {
                        let f = flow.at(x, y);
                        flow.set(
                            x,
                            y,
                            [f[0] + noise_px * rng.normal(), f[1] + noise_px * rng.normal()],
                        );
                    }
                }
            }
            let n = w * h;
            let n_out = (outlier_frac * n as f64).round() as usize;
            if n_out > 0 {
                let idx = rng.sample_indices(n, n_out);
                for i in idx {
                    let (x, y) = (i % w, i / w);
                    let tx = rng.range_f64(0.0, (w - 1) as f64);
                    let ty = rng.range_f64(0.0, (h - 1) as f64);
                    flow.set(x, y, [tx - x as f64, ty - y as f64]);
                }
            }
        }
        out
    }
}

/// Builds a deterministic scene from its configuration.
pub fn generate_scene(config: &SceneConfig) -> Result<SyntheticScene, SceneError> {
    if config.n_frames < 2 {
        return Err(SceneError::BadParameter("n_frames must be at least 2"));
    }
    if !(config.depth_range.0 > 0.0 && config.depth_range.1 > config.depth_range.0) {
        return Err(SceneError::BadParameter("depth_range must be positive and increasing"));
    }
    if config.n_points < 8 {
        return Err(SceneError::BadParameter("n_points must be at least 8"));
    }
    let k = config.intrinsics;
    let mut traj_rng = DetRng::new(config.seed, "trajectory");
    let mut trajectory = vec![RigidPose::identity()];
    // heading evolves smoothly so long sequences sweep out real distance
    // instead of random-walking in place
    let mut heading = Vector3::new(
        traj_rng.normal(),
        0.6 * traj_rng.normal(),
        if config.lateral_motion_only {
            0.0
        } else {
            0.25 * traj_rng.normal()
        },
    );
    if heading.norm() == 0.0 {
        heading = Vector3::new(1.0, 0.0, 0.0);
    }
    heading = heading.normalize();
    for _ in 1..config.n_frames {
        let axis = Vector3::new(traj_rng.normal(), traj_rng.normal(), traj_rng.normal());
        let rot = if axis.norm() > 0.0 && config.rotation > 0.0 {
            rotation_from_axis_angle(axis.normalize() * config.rotation)
        } else {
            nalgebra::Matrix3::identity()
        };
        let jitter = Vector3::new(
            traj_rng.normal(),
            0.6 * traj_rng.normal(),
            if config.lateral_motion_only {
                0.0
            } else {
                0.25 * traj_rng.normal()
            },
        );
        heading = (heading + 0.2 * jitter).normalize();
        let step_t = heading * config.baseline;
        // local step: pose of the new camera expressed in the previous frame
        let step = RigidPose::from_parts_unchecked(rot, step_t);
        let prev = *trajectory.last().expect("nonempty");
        trajectory.push(prev.compose(&step));
    }

    let mut texture = TextureParams {
        kind: Texture::Smooth,
        base: 0.5,
        gradient: Vector3::zeros(),
        freq: [Vector3::zeros(); 3],
        phase: [0.0; 3],
    };
    let mut tex_rng = DetRng::new(config.seed, "texture");
    for i in 0..3 {
        texture.freq[i] = Vector3::new(
            tex_rng.range_f64(0.4, 1.6),
            tex_rng.range_f64(0.4, 1.6),
            tex_rng.range_f64(0.2, 0.8),
        );
        texture.phase[i] = tex_rng.range_f64(0.0, std::f64::consts::TAU);
    }

    let mut scene = SyntheticScene {
        config: config.clone(),
        intrinsics: k,
        trajectory,
        points: Vec::new(),
        moving_points: Vec::new(),
        meshes: Vec::new(),
        texture,
    };

    let mid_depth = 0.5 * (config.depth_range.0 + config.depth_range.1);
    match config.kind {
        SceneKind::Points => {
            let mut rng = DetRng::new(config.seed, "points");
            let cam1_wc = scene.trajectory[1].invert();
            let max_attempts = config.n_points * 200 + 1000;
            let mut attempts = 0;
            while scene.points.len() < config.n_points && attempts < max_attempts {
                attempts += 1;
                let px = rng.range_f64(1.0, (k.width - 2) as f64);
                let py = rng.range_f64(1.0, (k.height - 2) as f64);
                let depth = rng.range_f64(config.depth_range.0, config.depth_range.1);
                let p = unproject(Vector2::new(px, py), depth, &k).expect("positive depth");
                // world frame coincides with camera 0
                let in_cam1 = cam1_wc.transform_point(p);
                if in_cam1.z <= 0.1 {
                    continue;
                }
                match project(in_cam1, &k) {
                    Ok(pix) if k.contains(pix) => scene.points.push(p),
                    _ => continue,
                }
            }
            if scene.points.len() < config.n_points {
                return Err(SceneError::InfeasibleFrustum {
                    requested: config.n_points,
                    placed: scene.points.len(),
                });
            }
            if let Some(mo) = config.moving_object {
                let mut mrng = DetRng::new(config.seed, "moving-points");
                let center = unproject(
                    Vector2::new(k.width as f64 * 0.5, k.height as f64 * 0.5),
                    mid_depth * mo.depth_frac,
                    &k,
                )
                .expect("positive depth");
                for _ in 0..mo.point_count {
                    let offset = Vector3::new(
                        mrng.range_f64(-mo.size, mo.size),
                        mrng.range_f64(-mo.size, mo.size),
                        mrng.range_f64(-0.2 * mo.size, 0.2 * mo.size),
                    );
                    scene.moving_points.push(center + offset);
                }
            }
        }
        SceneKind::Surface { amplitude, .. } => {
            if let SceneKind::Surface { texture: tex, .. } = config.kind {
                scene.texture.kind = tex;
            }
            let z0 = mid_depth;
            // extent: frustum footprint at the far plane, padded for every
            // camera displacement and rotation in the trajectory
            let max_center = scene
                .trajectory
                .iter()
                .map(|p| p.translation().norm())
                .fold(0.0f64, f64::max);
            let tan_x = 0.5 * k.width as f64 / k.fx;
            let tan_y = 0.5 * k.height as f64 / k.fy;
            let z_far = z0 + amplitude;
            let half_x = 1.6 * (z_far * tan_x + max_center + 0.5);
            let half_y = 1.6 * (z_far * tan_y + max_center + 0.5);
            let grid = (config.n_points as f64).sqrt().ceil() as usize;
            let grid = grid.max(8);
            let mut srng = DetRng::new(config.seed, "surface");
            let bump_freq: Vec<(f64, f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        srng.range_f64(0.3, 1.2),
                        srng.range_f64(0.3, 1.2),
                        srng.range_f64(0.0, std::f64::consts::TAU),
                        srng.range_f64(0.0, std::f64::consts::TAU),
                    )
                })
                .collect();
            let height = |x: f64, y: f64| -> f64 {
                let mut b = 0.0;
                for (fx_, fy_, px_, py_) in &bump_freq {
                    b += 0.25 * (fx_ * x + px_).sin() * (fy_ * y + py_).sin();
                }
                z0 + amplitude * b
            };
            let mut vertices = Vec::with_capacity(grid * grid);
            for iy in 0..grid {
                for ix in 0..grid {
                    let x = -half_x + 2.0 * half_x * ix as f64 / (grid - 1) as f64;
                    let y = -half_y + 2.0 * half_y * iy as f64 / (grid - 1) as f64;
                    vertices.push(Vector3::new(x, y, height(x, y)));
                }
            }
            let mut triangles = Vec::with_capacity(2 * (grid - 1) * (grid - 1));
            for iy in 0..grid - 1 {
                for ix in 0..grid - 1 {
                    let v00 = iy * grid + ix;
                    let v10 = v00 + 1;
                    let v01 = v00 + grid;
                    let v11 = v01 + 1;
                    triangles.push([v00, v10, v11]);
                    triangles.push([v00, v11, v01]);
                }
            }
            scene.meshes.push(Mesh {
                vertices,
                triangles,
                motion: MeshMotion::Static,
            });
            if let Some(mo) = config.moving_object {
                let zc = z0 * mo.depth_frac;
                let center = unproject(
                    Vector2::new(k.width as f64 * 0.55, k.height as f64 * 0.5),
                    zc,
                    &k,
                )
                .expect("positive depth");
                let s = mo.size;
                let vertices = vec![
                    center + Vector3::new(-s, -s, 0.0),
                    center + Vector3::new(s, -s, 0.0),
                    center + Vector3::new(s, s, 0.0),
                    center + Vector3::new(-s, s, 0.0),
                ];
                scene.meshes.push(Mesh {
                    vertices,
                    triangles: vec![[0, 1, 2], [0, 2, 3]],
                    motion: MeshMotion::Linear(mo.velocity),
                });
            }
            // affine texture coefficients bounded over the surface extent
            scene.texture.base = 0.5;
            scene.texture.gradient =
                Vector3::new(0.18 / half_x, 0.18 / half_y, 0.04 / z_far.max(1.0));
        }
    }
    Ok(scene)
}

impl SyntheticScene {
    pub fn n_frames(&self) -> usize {
        self.trajectory.len()
    }

    pub fn camera_to_world(&self, frame: usize) -> Result<RigidPose, SceneError> {
        self.trajectory
            .get(frame)
            .copied()
            .ok_or(SceneError::FrameOutOfRange(frame, self.trajectory.len()))
    }

    pub fn trajectory(&self) -> &[RigidPose] {
        &self.trajectory
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    /// True relative pose mapping frame-a coordinates to frame-b coordinates.
    pub fn relative_pose(&self, frame_a: usize, frame_b: usize) -> Result<RigidPose, SceneError> {
        let wa = self.camera_to_world(frame_a)?;
        let wb = self.camera_to_world(frame_b)?;
        Ok(wb.invert().compose(&wa))
    }

    /// Exact sparse correspondences between two frames (points scenes).
    /// Only points projecting in bounds with positive depth in both frames
    /// are included.
    pub fn render_pair_sparse(
        &self,
        frame_a: usize,
        frame_b: usize,
    ) -> Result<SparseObservations, SceneError> {
        if !matches!(self.config.kind, SceneKind::Points) {
            return Err(SceneError::WrongSceneKind { required: "points" });
        }
        let k = &self.intrinsics;
        let wa_inv = self.camera_to_world(frame_a)?.invert();
        let wb_inv = self.camera_to_world(frame_b)?.invert();
        let pose_ab = self.relative_pose(frame_a, frame_b)?;
        let mut items = Vec::new();
        let mut depths = Vec::new();
        let mut pts = Vec::new();
        let mut moving = Vec::new();
        let mut push_point = |world_a: Vector3<f64>, world_b: Vector3<f64>, is_moving: bool| {
            let pa_cam = wa_inv.transform_point(world_a);
            let pb_cam = wb_inv.transform_point(world_b);
            if pa_cam.z <= 0.0 || pb_cam.z <= 0.0 {
                return;
            }
            let (pa, pb) = match (project(pa_cam, k), project(pb_cam, k)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return,
            };
            if !k.contains(pa) || !k.contains(pb) {
                return;
            }
            items.push(Correspondence {
                p_a: pa,
                p_b: pb,
                weight: 1.0,
            });
            depths.push(pa_cam.z);
            pts.push(pa_cam);
            moving.push(is_moving);
        };
        for p in &self.points {
            push_point(*p, *p, false);
        }
        if let Some(mo) = self.config.moving_object {
            for p in &self.moving_points {
                let at_a = p + mo.velocity * frame_a as f64;
                let at_b = p + mo.velocity * frame_b as f64;
                push_point(at_a, at_b, true);
            }
        }
        Ok(SparseObservations {
            correspondences: CorrespondenceSet {
                width: k.width,
                height: k.height,
                items,
            },
            pose_ab,
            depths_a: depths,
            points_a: pts,
            moving,
        })
    }

    /// Exact dense observations between two frames (surface scenes).
    pub fn render_pair_dense(
        &self,
        frame_a: usize,
        frame_b: usize,
    ) -> Result<DenseObservations, SceneError> {
        if !matches!(self.config.kind, SceneKind::Surface { .. }) {
            return Err(SceneError::WrongSceneKind { required: "surface" });
        }
        let pose_ab = self.relative_pose(frame_a, frame_b)?;
        let pose_ba = self.relative_pose(frame_b, frame_a)?;
        let raster_a = self.rasterize(frame_a)?;
        let raster_b = self.rasterize(frame_b)?;
        let (flow_ab, depth_a, visibility_a, image_a) =
            self.derive_view(frame_a, frame_b, &raster_a, &raster_b, &pose_ab);
        let (flow_ba, depth_b, _visibility_b, image_b) =
            self.derive_view(frame_b, frame_a, &raster_b, &raster_a, &pose_ba);
        Ok(DenseObservations {
            flow_ab,
            flow_ba,
            depth_a,
            depth_b,
            visibility_a,
            image_a,
            image_b,
            pose_ab,
        })
    }

    fn rasterize(&self, frame: usize) -> Result<Raster, SceneError> {
        let k = &self.intrinsics;
        let (w, h) = (k.width, k.height);
        let world_to_cam = self.camera_to_world(frame)?.invert();
        let mut depth = vec![f64::INFINITY; w * h];
        let mut hit: Vec<Option<(usize, Vector3<f64>)>> = vec![None; w * h];
        for (mesh_idx, mesh) in self.meshes.iter().enumerate() {
            let offset = mesh.motion.offset(frame);
            for tri in &mesh.triangles {
                let cam: Vec<Vector3<f64>> = tri
                    .iter()
                    .map(|&vi| world_to_cam.transform_point(mesh.vertices[vi] + offset))
                    .collect();
                if cam.iter().any(|c| c.z <= 1e-6) {
                    continue;
                }
                let px: Vec<Vector2<f64>> = cam
                    .iter()
                    .map(|c| project(*c, k).expect("positive depth"))
                    .collect();
                let min_x = px.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
                let max_x = px.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
                let min_y = px.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
                let max_y = px.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
                let x0 = min_x.floor().max(0.0) as usize;
                let x1 = (max_x.ceil() as isize).min(w as isize - 1);
                let y0 = min_y.floor().max(0.0) as usize;
                let y1 = (max_y.ceil() as isize).min(h as isize - 1);
                if x1 < x0 as isize || y1 < y0 as isize || min_x > (w - 1) as f64 || min_y > (h - 1) as f64 {
                    continue;
                }
                let (x1, y1) = (x1 as usize, y1 as usize);
                // plane through the camera-space triangle
                let normal = (cam[1] - cam[0]).cross(&(cam[2] - cam[0]));
                let plane_d = normal.dot(&cam[0]);
                if normal.norm() < 1e-15 {
                    continue;
                }
                let e = |a: Vector2<f64>, b: Vector2<f64>, p: Vector2<f64>| {
                    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
                };
                let area = e(px[0], px[1], px[2]);
                if area.abs() < 1e-12 {
                    continue;
                }
                for py in y0..=y1 {
                    for pxx in x0..=x1 {
                        let pix = Vector2::new(pxx as f64, py as f64);
                        let w0 = e(px[1], px[2], pix) / area;
                        let w1 = e(px[2], px[0], pix) / area;
                        let w2 = e(px[0], px[1], pix) / area;
                        if w0 < -1e-10 || w1 < -1e-10 || w2 < -1e-10 {
                            continue;
                        }
                        let ray = k.pixel_ray(pix);
                        let denom = normal.dot(&ray);
                        if denom.abs() < 1e-15 {
                            continue;
                        }
                        let s = plane_d / denom;
                        let z = s; // pixel rays have unit z component
                        if z <= 0.0 {
                            continue;
                        }
                        let idx = py * w + pxx;
                        if z < depth[idx] {
                            depth[idx] = z;
                            let cam_point = ray * s;
                            let world =
                                self.camera_to_world(frame)?.transform_point(cam_point);
                            hit[idx] = Some((mesh_idx, world - offset));
                        }
                    }
                }
            }
        }
        Ok(Raster {
            depth,
            hit,
            width: w,
            height: h,
        })
    }

    fn derive_view(
        &self,
        _frame_a: usize,
        frame_b: usize,
        raster_a: &Raster,
        raster_b: &Raster,
        pose_ab: &RigidPose,
    ) -> (FlowField, DepthMap, ScoreMap, Image) {
        let k = &self.intrinsics;
        let (w, h) = (raster_a.width, raster_a.height);
        let wb_inv = self
            .camera_to_world(frame_b)
            .expect("frame checked")
            .invert();
        let mut flow = FlowField::zeros(w, h);
        let mut depth = DepthMap::invalid(w, h);
        let mut visibility = ScoreMap::zeros(w, h);
        let mut image = Image::zeros(w, h, 1);
        for y in 0..h {
            for x in 0..w {
                let idx = y * w + x;
                let (mesh_idx, canonical) = match raster_a.hit[idx] {
                    Some(v) => v,
                    None => continue,
                };
                let z = raster_a.depth[idx];
                depth.set(x, y, z);
                image.set(0, x, y, self.texture.eval(canonical).clamp(0.0, 1.0));
                let pix = Vector2::new(x as f64, y as f64);
                // camera-b point of the same surface sample
                let cam_a = unproject(pix, z, k).expect("positive depth");
                let cam_b = match self.meshes[mesh_idx].motion {
                    MeshMotion::Static => {
                        // static geometry: route through depth + relative pose so
                        // the rendered flow is bit-consistent with reprojection
                        pose_ab.transform_point(cam_a)
                    }
                    MeshMotion::Linear(v) => {
                        let world_b = canonical + v * frame_b as f64;
                        wb_inv.transform_point(world_b)
                    }
                };
                if cam_b.z <= 0.0 {
                    continue;
                }
                // an untouched point corresponds to the very same pixel
                let target = if cam_b == cam_a {
                    pix
                } else {
                    project(cam_b, k).expect("positive depth")
                };
                flow.set(x, y, [target.x - pix.x, target.y - pix.y]);
                // visible in b iff the z-buffer there agrees with this depth
                let visible = k.contains(target)
                    && match raster_b.sample_depth(target.x, target.y) {
                        Some(zb) => cam_b.z <= zb * (1.0 + 1e-3) + 1e-9,
                        None => false,
                    };
                if visible {
                    visibility.set(x, y, 1.0);
                }
            }
        }
        (flow, depth, visibility, image)
    }
}

struct Raster {
    depth: Vec<f64>,
    hit: Vec<Option<(usize, Vector3<f64>)>>,
    width: usize,
    height: usize,
}

impl Raster {
    /// Bilinear depth lookup ignoring misses.
    fn sample_depth(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64)
        {
            return None;
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let corners = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ];
        let mut acc = 0.0;
        for (cx, cy, wgt) in corners {
            if wgt == 0.0 {
                continue;
            }
            let d = self.depth[cy * self.width + cx];
            if !d.is_finite() {
                return None;
            }
            acc += wgt * d;
        }
        Some(acc)
    }
}
