//! Trajectory files: the 12-number row-major camera-to-world format and the
//! timestamped translation + scalar-last unit quaternion format.

use super::IoError;
use crate::geometry::{nearest_rotation, orthonormality_error, RigidPose};
use crate::vo::{Trajectory, TrajectoryNode};
use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryFormat {
    /// One line per frame: the 12 row-major entries of the upper 3x4 of the
    /// camera-to-world matrix. Timestamps are frame indices.
    Kitti,
    /// One line per frame: `timestamp tx ty tz qx qy qz qw` with a
    /// scalar-last unit quaternion.
    Tum,
}

impl TrajectoryFormat {
    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "kitti" => Some(Self::Kitti),
            "tum" => Some(Self::Tum),
            _ => None,
        }
    }
}

pub fn write_trajectory(
    path: &Path,
    trajectory: &Trajectory,
    format: TrajectoryFormat,
) -> Result<(), IoError> {
    let mut text = String::new();
    match format {
        TrajectoryFormat::Kitti => {
            for node in trajectory.nodes() {
                let r = node.pose.rotation();
                let t = node.pose.translation();
                let _ = writeln!(
                    text,
                    "{} {} {} {} {} {} {} {} {} {} {} {}",
                    r[(0, 0)],
                    r[(0, 1)],
                    r[(0, 2)],
                    t.x,
                    r[(1, 0)],
                    r[(1, 1)],
                    r[(1, 2)],
                    t.y,
                    r[(2, 0)],
                    r[(2, 1)],
                    r[(2, 2)],
                    t.z
                );
            }
        }
        TrajectoryFormat::Tum => {
            for node in trajectory.nodes() {
                let t = node.pose.translation();
                let rot = nalgebra::Rotation3::from_matrix_unchecked(*node.pose.rotation());
                let q = UnitQuaternion::from_rotation_matrix(&rot);
                // canonical sign: nonnegative scalar part
                let q = if q.w < 0.0 {
                    UnitQuaternion::from_quaternion(Quaternion::new(-q.w, -q.i, -q.j, -q.k))
                } else {
                    q
                };
                let _ = writeln!(
                    text,
                    "{:.6} {} {} {} {} {} {} {}",
                    node.time, t.x, t.y, t.z, q.i, q.j, q.k, q.w
                );
            }
        }
    }
    fs::write(path, text)?;
    Ok(())
}

fn parse_floats(line: &str, line_no: usize, expect: usize) -> Result<Vec<f64>, IoError> {
    let values: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
    let values = values.map_err(|e| IoError::Parse {
        line: line_no,
        message: format!("bad number: {e}"),
    })?;
    if values.len() != expect {
        return Err(IoError::Parse {
            line: line_no,
            message: format!("expected {expect} fields, got {}", values.len()),
        });
    }
    Ok(values)
}

fn pose_from_rotation(r: Matrix3<f64>, t: Vector3<f64>, line: usize) -> Result<RigidPose, IoError> {
    let err = orthonormality_error(&r);
    if err > 1e-6 {
        return Err(IoError::Parse {
            line,
            message: format!("rotation is not orthonormal (error {err:.2e})"),
        });
    }
    let r = if err > 1e-12 { nearest_rotation(&r) } else { r };
    Ok(RigidPose::from_parts_unchecked(r, t))
}

pub fn read_trajectory(path: &Path, format: TrajectoryFormat) -> Result<Trajectory, IoError> {
    let text = fs::read_to_string(path)?;
    let mut nodes = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match format {
            TrajectoryFormat::Kitti => {
                let v = parse_floats(line, line_no, 12)?;
                let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
                let t = Vector3::new(v[3], v[7], v[11]);
                nodes.push(TrajectoryNode {
                    time: nodes.len() as f64,
                    pose: pose_from_rotation(r, t, line_no)?,
                });
            }
            TrajectoryFormat::Tum => {
                let v = parse_floats(line, line_no, 8)?;
                let q = Quaternion::new(v[7], v[4], v[5], v[6]);
                if q.norm() < 1e-12 {
                    return Err(IoError::Parse {
                        line: line_no,
                        message: "zero quaternion".into(),
                    });
                }
                let rot = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
                nodes.push(TrajectoryNode {
                    time: v[0],
                    pose: RigidPose::from_parts_unchecked(
                        *rot.matrix(),
                        Vector3::new(v[1], v[2], v[3]),
                    ),
                });
            }
        }
    }
    Trajectory::from_nodes(nodes).map_err(|e| IoError::Parse {
        line: 0,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation_from_axis_angle;
    use crate::rng::DetRng;
    use std::fs;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("flowvo-traj-tests");
        fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn random_trajectory(seed: u64, n: usize) -> Trajectory {
        let mut rng = DetRng::new(seed, "traj");
        let mut pose = RigidPose::identity();
        let mut nodes = Vec::new();
        for i in 0..n {
            nodes.push(TrajectoryNode {
                time: i as f64 * 0.1,
                pose,
            });
            let axis = Vector3::new(rng.normal(), rng.normal(), rng.normal()).normalize();
            let step = RigidPose::from_parts_unchecked(
                rotation_from_axis_angle(axis * rng.range_f64(0.0, 0.2)),
                Vector3::new(rng.normal(), rng.normal(), rng.normal()),
            );
            pose = pose.compose(&step).renormalized();
        }
        Trajectory::from_nodes(nodes).unwrap()
    }

    #[test]
    fn kitti_identity_line() {
        let t = Trajectory::from_poses(&[RigidPose::identity()]);
        let path = tmp("identity.kitti");
        write_trajectory(&path, &t, TrajectoryFormat::Kitti).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim(), "1 0 0 0 0 1 0 0 0 0 1 0");
    }

    #[test]
    fn tum_identity_line() {
        let t = Trajectory::from_nodes(vec![TrajectoryNode {
            time: 0.0,
            pose: RigidPose::identity(),
        }])
        .unwrap();
        let path = tmp("identity.tum");
        write_trajectory(&path, &t, TrajectoryFormat::Tum).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.trim(), "0.000000 0 0 0 0 0 0 1");
    }

    #[test]
    fn kitti_round_trip_exact() {
        let t = random_trajectory(1, 20);
        let path = tmp("rt.kitti");
        write_trajectory(&path, &t, TrajectoryFormat::Kitti).unwrap();
        let back = read_trajectory(&path, TrajectoryFormat::Kitti).unwrap();
        assert_eq!(back.len(), t.len());
        for (a, b) in t.nodes().iter().zip(back.nodes()) {
            let diff = (a.pose.homogeneous() - b.pose.homogeneous()).norm();
            assert!(diff < 1e-12, "pose differs by {diff}");
        }
    }

    #[test]
    fn tum_round_trip_within_quaternion_tolerance() {
        let t = random_trajectory(2, 20);
        let path = tmp("rt.tum");
        write_trajectory(&path, &t, TrajectoryFormat::Tum).unwrap();
        let back = read_trajectory(&path, TrajectoryFormat::Tum).unwrap();
        for (a, b) in t.nodes().iter().zip(back.nodes()) {
            assert!((a.time - b.time).abs() < 1e-9);
            assert!(a.pose.rotation_angle_to(&b.pose) < 1e-9);
            assert!((a.pose.translation() - b.pose.translation()).norm() < 1e-12);
        }
    }

    #[test]
    fn parse_error_carries_line_number() {
        let path = tmp("bad.kitti");
        fs::write(&path, "1 0 0 0 0 1 0 0 0 0 1 0\n1 0 0 nope\n").unwrap();
        match read_trajectory(&path, TrajectoryFormat::Kitti) {
            Err(IoError::Parse { line: 2, .. }) => {}
            other => panic!("expected parse error at line 2, got {other:?}"),
        }
    }
}
