//! Intrinsics files: `fx fy cx cy` plus optional `width height`, whitespace
//! separated, comments allowed with `#`.

use super::IoError;
use crate::geometry::CameraIntrinsics;
use std::fs;
use std::path::Path;

/// Parsed intrinsics, possibly without an image size (taken from the data
/// files at use time).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntrinsicsSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub size: Option<(usize, usize)>,
}

impl IntrinsicsSpec {
    /// Resolves against an image size; the file's own size wins when present
    /// and must then match.
    pub fn with_size(&self, width: usize, height: usize) -> Result<CameraIntrinsics, IoError> {
        if let Some((w, h)) = self.size {
            if w != width || h != height {
                return Err(IoError::Parse {
                    line: 0,
                    message: format!(
                        "intrinsics size {w}x{h} does not match data size {width}x{height}"
                    ),
                });
            }
        }
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, width, height).map_err(|e| {
            IoError::Parse {
                line: 0,
                message: e.to_string(),
            }
        })
    }

    pub fn resolved(&self) -> Option<Result<CameraIntrinsics, IoError>> {
        self.size.map(|(w, h)| self.with_size(w, h))
    }
}

pub fn read_intrinsics(path: &Path) -> Result<IntrinsicsSpec, IoError> {
    let text = fs::read_to_string(path)?;
    let mut numbers = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        for token in line.split_whitespace() {
            let v: f64 = token.parse().map_err(|_| IoError::Parse {
                line: i + 1,
                message: format!("bad number {token:?}"),
            })?;
            numbers.push(v);
        }
    }
    if numbers.len() != 4 && numbers.len() != 6 {
        return Err(IoError::Parse {
            line: 0,
            message: format!("expected 4 or 6 numbers, got {}", numbers.len()),
        });
    }
    let size = if numbers.len() == 6 {
        Some((numbers[4] as usize, numbers[5] as usize))
    } else {
        None
    };
    Ok(IntrinsicsSpec {
        fx: numbers[0],
        fy: numbers[1],
        cx: numbers[2],
        cy: numbers[3],
        size,
    })
}

pub fn write_intrinsics(path: &Path, k: &CameraIntrinsics) -> Result<(), IoError> {
    fs::write(
        path,
        format!(
            "{} {} {} {} {} {}\n",
            k.fx, k.fy, k.cx, k.cy, k.width, k.height
        ),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("flowvo-intr-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn round_trip_with_size() {
        let k = CameraIntrinsics::new(115.0, 108.0, 63.5, 47.5, 128, 96).unwrap();
        let path = tmp("k.txt");
        write_intrinsics(&path, &k).unwrap();
        let spec = read_intrinsics(&path).unwrap();
        assert_eq!(spec.resolved().unwrap().unwrap(), k);
    }

    #[test]
    fn four_number_form_needs_external_size() {
        let path = tmp("k4.txt");
        fs::write(&path, "100 100 32 24\n").unwrap();
        let spec = read_intrinsics(&path).unwrap();
        assert_eq!(spec.size, None);
        let k = spec.with_size(64, 48).unwrap();
        assert_eq!(k.width, 64);
        // mismatched explicit size is rejected
        let path = tmp("k6.txt");
        fs::write(&path, "100 100 32 24 64 48\n").unwrap();
        let spec = read_intrinsics(&path).unwrap();
        assert!(spec.with_size(32, 24).is_err());
    }
}
