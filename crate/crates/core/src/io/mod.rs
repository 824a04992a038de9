//! File formats: Middlebury .flo flow fields, PFM and 16-bit PNG depth
//! maps, trajectory files, intrinsics, sequence manifests and PLY point
//! clouds. All multi-byte values are little-endian unless the format
//! dictates otherwise.

pub mod flo;
pub mod intrinsics;
pub mod manifest;
pub mod pfm;
pub mod ply;
pub mod png16;
pub mod trajectory;

use crate::grid::GridError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected}, found {found}")]
    BadMagic { expected: String, found: String },
    #[error("file ends before the declared payload")]
    TruncatedFile,
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("referenced file does not exist: {0}")]
    MissingFile(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("png: {0}")]
    Png(String),
}

pub use flo::{read_flow, write_flow};
pub use intrinsics::{read_intrinsics, write_intrinsics, IntrinsicsSpec};
pub use manifest::{load_sequence, SequenceManifest};
pub use pfm::{read_pfm_depth, read_pfm_image, write_pfm_depth, write_pfm_image};
pub use ply::write_ply;
pub use png16::{read_png16_depth, write_png16_depth};
pub use trajectory::{
    read_trajectory, write_trajectory, TrajectoryFormat,
};
