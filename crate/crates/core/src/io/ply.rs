//! Minimal ASCII PLY point-cloud export.

use super::IoError;
use nalgebra::Vector3;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub fn write_ply(path: &Path, points: &[Vector3<f64>]) -> Result<(), IoError> {
    let mut text = String::new();
    let _ = writeln!(text, "ply");
    let _ = writeln!(text, "format ascii 1.0");
    let _ = writeln!(text, "element vertex {}", points.len());
    let _ = writeln!(text, "property float x");
    let _ = writeln!(text, "property float y");
    let _ = writeln!(text, "property float z");
    let _ = writeln!(text, "end_header");
    for p in points {
        let _ = writeln!(text, "{} {} {}", p.x as f32, p.y as f32, p.z as f32);
    }
    fs::write(path, text)?;
    Ok(())
}
