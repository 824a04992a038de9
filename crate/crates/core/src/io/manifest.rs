//! Sequence manifests: a text file naming per-frame flow/depth files, the
//! intrinsics, and optionally a ground-truth trajectory.
//!
//! ```text
//! # comment
//! intrinsics intrinsics.txt
//! groundtruth gt.txt kitti
//! frame flow0_fwd.flo flow0_bwd.flo depth0.pfm 0.0
//! frame - - depth1.pfm 1.0
//! ```
//!
//! Frame `i` carries the flow from frame `i` to `i+1` (forward) and back;
//! the final frame may use `-` for both. Paths are resolved against the
//! manifest's directory and must exist at load time.

use super::trajectory::{read_trajectory, TrajectoryFormat};
use super::{read_flow, read_intrinsics, read_pfm_depth, read_png16_depth, IoError};
use crate::geometry::CameraIntrinsics;
use crate::grid::DepthMap;
use crate::vo::{FrameInput, Trajectory};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestFrame {
    pub flow_fwd: Option<PathBuf>,
    pub flow_bwd: Option<PathBuf>,
    pub depth: PathBuf,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub intrinsics: PathBuf,
    pub groundtruth: Option<(PathBuf, TrajectoryFormat)>,
    pub frames: Vec<ManifestFrame>,
}

impl SequenceManifest {
    /// Parses and validates a manifest: all referenced files must exist and
    /// at least two frames must be listed.
    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let resolve = |token: &str| -> PathBuf { base.join(token) };
        let mut intrinsics: Option<PathBuf> = None;
        let mut groundtruth = None;
        let mut frames = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut tokens = line.split_whitespace();
            let keyword = tokens.next().expect("nonempty line");
            let rest: Vec<&str> = tokens.collect();
            match keyword {
                "intrinsics" => {
                    if rest.len() != 1 {
                        return Err(IoError::Parse {
                            line: line_no,
                            message: "intrinsics takes one path".into(),
                        });
                    }
                    intrinsics = Some(resolve(rest[0]));
                }
                "groundtruth" => {
                    if rest.is_empty() || rest.len() > 2 {
                        return Err(IoError::Parse {
                            line: line_no,
                            message: "groundtruth takes a path and an optional format".into(),
                        });
                    }
                    let format = match rest.get(1) {
                        Some(name) => {
                            TrajectoryFormat::from_name(name).ok_or_else(|| IoError::Parse {
                                line: line_no,
                                message: format!("unknown trajectory format {name:?}"),
                            })?
                        }
                        None => TrajectoryFormat::Kitti,
                    };
                    groundtruth = Some((resolve(rest[0]), format));
                }
                "frame" => {
                    if rest.len() < 3 || rest.len() > 4 {
                        return Err(IoError::Parse {
                            line: line_no,
                            message: "frame takes flow_fwd flow_bwd depth [timestamp]".into(),
                        });
                    }
                    let opt_path = |token: &str| -> Option<PathBuf> {
                        (token != "-").then(|| resolve(token))
                    };
                    let time = match rest.get(3) {
                        Some(t) => t.parse::<f64>().map_err(|_| IoError::Parse {
                            line: line_no,
                            message: format!("bad timestamp {t:?}"),
                        })?,
                        None => frames.len() as f64,
                    };
                    frames.push(ManifestFrame {
                        flow_fwd: opt_path(rest[0]),
                        flow_bwd: opt_path(rest[1]),
                        depth: resolve(rest[2]),
                        time,
                    });
                }
                other => {
                    return Err(IoError::Parse {
                        line: line_no,
                        message: format!("unknown directive {other:?}"),
                    })
                }
            }
        }
        let intrinsics = intrinsics.ok_or(IoError::Parse {
            line: 0,
            message: "manifest is missing an intrinsics line".into(),
        })?;
        if frames.len() < 2 {
            return Err(IoError::Parse {
                line: 0,
                message: format!("manifest needs at least 2 frames, got {}", frames.len()),
            });
        }
        let manifest = Self {
            intrinsics,
            groundtruth,
            frames,
        };
        for p in manifest.referenced_paths() {
            if !p.exists() {
                return Err(IoError::MissingFile(p.display().to_string()));
            }
        }
        Ok(manifest)
    }

    fn referenced_paths(&self) -> Vec<PathBuf> {
        let mut out = vec![self.intrinsics.clone()];
        if let Some((p, _)) = &self.groundtruth {
            out.push(p.clone());
        }
        for f in &self.frames {
            out.extend(f.flow_fwd.clone());
            out.extend(f.flow_bwd.clone());
            out.push(f.depth.clone());
        }
        out
    }
}

fn read_depth_any(path: &Path) -> Result<DepthMap, IoError> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => read_pfm_depth(path),
        Some("png") => read_png16_depth(path),
        other => Err(IoError::UnsupportedFormat(format!(
            "depth extension {other:?} (expected .pfm or .png)"
        ))),
    }
}

/// Loads every frame of a manifest plus the resolved intrinsics and the
/// optional ground-truth trajectory.
pub fn load_sequence(
    manifest: &SequenceManifest,
) -> Result<(Vec<FrameInput>, CameraIntrinsics, Option<Trajectory>), IoError> {
    let spec = read_intrinsics(&manifest.intrinsics)?;
    let mut frames = Vec::with_capacity(manifest.frames.len());
    let mut k: Option<CameraIntrinsics> = None;
    for mf in &manifest.frames {
        let depth = read_depth_any(&mf.depth)?;
        if k.is_none() {
            k = Some(spec.with_size(depth.width(), depth.height())?);
        }
        let flow_fwd = mf.flow_fwd.as_deref().map(read_flow).transpose()?;
        let flow_bwd = mf.flow_bwd.as_deref().map(read_flow).transpose()?;
        frames.push(FrameInput {
            flow_fwd,
            flow_bwd,
            depth,
            time: mf.time,
        });
    }
    let k = k.expect("at least two frames");
    let gt = manifest
        .groundtruth
        .as_ref()
        .map(|(p, f)| read_trajectory(p, *f))
        .transpose()?;
    Ok((frames, k, gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::FlowField;
    use crate::io::{write_flow, write_intrinsics, write_pfm_depth};
    use std::fs;

    fn tmp_dir(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("flowvo-manifest-tests").join(name);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn load_checks_referenced_files() {
        let dir = tmp_dir("missing");
        let manifest_path = dir.join("seq.txt");
        fs::write(
            &manifest_path,
            "intrinsics k.txt\nframe a.flo b.flo d.pfm\nframe - - d.pfm\n",
        )
        .unwrap();
        assert!(matches!(
            SequenceManifest::load(&manifest_path),
            Err(IoError::MissingFile(_))
        ));
    }

    #[test]
    fn well_formed_manifest_loads() {
        let dir = tmp_dir("ok");
        let k = crate::synthetic::default_intrinsics();
        write_intrinsics(&dir.join("k.txt"), &k).unwrap();
        let flow = FlowField::zeros(k.width, k.height);
        write_flow(&dir.join("a.flo"), &flow).unwrap();
        write_flow(&dir.join("b.flo"), &flow).unwrap();
        let depth = DepthMap::from_data(k.width, k.height, vec![2.0; k.width * k.height]).unwrap();
        write_pfm_depth(&dir.join("d0.pfm"), &depth).unwrap();
        write_pfm_depth(&dir.join("d1.pfm"), &depth).unwrap();
        let manifest_path = dir.join("seq.txt");
        fs::write(
            &manifest_path,
            "# sequence\nintrinsics k.txt\nframe a.flo b.flo d0.pfm 0.0\nframe - - d1.pfm 1.0\n",
        )
        .unwrap();
        let manifest = SequenceManifest::load(&manifest_path).unwrap();
        assert_eq!(manifest.frames.len(), 2);
        let (frames, loaded_k, gt) = load_sequence(&manifest).unwrap();
        assert_eq!(loaded_k, k);
        assert_eq!(frames.len(), 2);
        assert!(frames[0].flow_fwd.is_some());
        assert!(frames[1].flow_fwd.is_none());
        assert!(gt.is_none());
    }

    #[test]
    fn single_frame_rejected() {
        let dir = tmp_dir("short");
        let k = crate::synthetic::default_intrinsics();
        write_intrinsics(&dir.join("k.txt"), &k).unwrap();
        let depth = DepthMap::from_data(k.width, k.height, vec![2.0; k.width * k.height]).unwrap();
        write_pfm_depth(&dir.join("d0.pfm"), &depth).unwrap();
        let manifest_path = dir.join("seq.txt");
        fs::write(&manifest_path, "intrinsics k.txt\nframe - - d0.pfm\n").unwrap();
        assert!(matches!(
            SequenceManifest::load(&manifest_path),
            Err(IoError::Parse { .. })
        ));
    }
}
