//! Two-view geometry engine built around dense optical-flow correspondence:
//! relative pose via robust fundamental-matrix estimation, differentiable
//! midpoint triangulation, scale-aligned depth/pose training losses, a
//! visual-odometry pipeline with PnP fallback, trajectory/depth/flow metrics,
//! and a synthetic-scene oracle that makes every stage verifiable.

pub mod config;
pub mod epipolar;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod pipeline;
pub mod pnp;
pub mod rng;
pub mod synthetic;
pub mod triangulation;
pub mod vo;

pub use config::PipelineConfig;
pub use geometry::{CameraIntrinsics, GeometryError, Ray, RigidPose};
pub use grid::{DepthMap, FlowField, GridError, Image, ScoreMap};
pub use rng::DetRng;
