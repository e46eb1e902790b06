//! A sequence of point-cloud frames with per-frame odometry poses.

use std::fs;
use std::path::{Path, PathBuf};

use histoloop::{Point3, RigidTransform};

use crate::io::tum::{self, Stamped};
use crate::io::{ply, read_points};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub timestamps: Vec<f64>,
    /// Sensor-frame points of each frame.
    pub frames: Vec<Vec<Point3>>,
    /// Odometry pose of each frame.
    pub trajectory: Vec<RigidTransform>,
    pub ground_truth: Option<Vec<RigidTransform>>,
    /// Frames whose files could not be parsed; they are kept as empty frames.
    pub malformed_frames: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::Invalid("dataset has no frames".into()));
        }
        if self.trajectory.len() != self.frames.len() || self.timestamps.len() != self.frames.len() {
            return Err(Error::Invalid(format!(
                "{} frames but {} poses and {} timestamps",
                self.frames.len(),
                self.trajectory.len(),
                self.timestamps.len()
            )));
        }
        if self.timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("timestamps must be strictly increasing".into()));
        }
        if let Some(gt) = &self.ground_truth {
            if gt.len() != self.frames.len() {
                return Err(Error::Invalid("ground truth length differs from the frame count".into()));
            }
        }
        Ok(())
    }

    /// Frames from every `.ply`, `.xyz` or `.txt` file in `frames_dir`
    /// (sorted by file name) and poses from TUM files.
    pub fn load(frames_dir: &Path, trajectory: &Path, ground_truth: Option<&Path>) -> Result<Self> {
        let files = frame_files(frames_dir)?;
        let traj = tum::read(trajectory)?;
        let mut data = Dataset {
            timestamps: traj.iter().map(|s| s.timestamp).collect(),
            trajectory: traj.iter().map(|s| s.pose).collect(),
            ..Default::default()
        };
        for (i, f) in files.iter().enumerate() {
            match read_points(f) {
                Ok(points) => data.frames.push(points),
                Err(Error::Io { path, source }) => return Err(Error::Io { path, source }),
                Err(e) => {
                    log::warn!("skipping frame {i}: {e}");
                    data.malformed_frames.push(i);
                    data.frames.push(Vec::new());
                }
            }
        }
        if let Some(gt) = ground_truth {
            data.ground_truth = Some(tum::read(gt)?.into_iter().map(|s| s.pose).collect());
        }
        data.validate()?;
        Ok(data)
    }

    /// Writes `frames/NNNNNN.ply`, `trajectory.tum` and, when present,
    /// `ground_truth.tum` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        for (i, f) in self.frames.iter().enumerate() {
            ply::write(&dir.join("frames").join(format!("{i:06}.ply")), f)?;
        }
        let stamped = |poses: &[RigidTransform]| -> Vec<Stamped> {
            self.timestamps
                .iter()
                .zip(poses)
                .map(|(&timestamp, &pose)| Stamped { timestamp, pose })
                .collect()
        };
        tum::write(&dir.join("trajectory.tum"), &stamped(&self.trajectory))?;
        if let Some(gt) = &self.ground_truth {
            tum::write(&dir.join("ground_truth.tum"), &stamped(gt))?;
        }
        Ok(())
    }
}

fn frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("ply" | "xyz" | "txt")) && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset {
            timestamps: vec![0.0, 0.1, 0.2],
            frames: vec![vec![Point3::new(1.0, 2.0, 3.0)]; 3],
            trajectory: vec![RigidTransform::identity(); 3],
            ground_truth: Some(vec![RigidTransform::identity(); 3]),
            malformed_frames: Vec::new(),
        }
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let d = tiny();
        d.save(dir.path()).unwrap();
        let back = Dataset::load(
            &dir.path().join("frames"),
            &dir.path().join("trajectory.tum"),
            Some(&dir.path().join("ground_truth.tum")),
        )
        .unwrap();
        assert_eq!(back.frames, d.frames);
        assert_eq!(back.len(), 3);
    }

    #[test]
    fn malformed_frames_are_kept_empty() {
        let dir = tempfile::tempdir().unwrap();
        tiny().save(dir.path()).unwrap();
        fs::write(dir.path().join("frames/000001.ply"), "garbage").unwrap();
        let back = Dataset::load(&dir.path().join("frames"), &dir.path().join("trajectory.tum"), None).unwrap();
        assert_eq!(back.malformed_frames, vec![1]);
        assert!(back.frames[1].is_empty());
    }

    #[test]
    fn validation() {
        assert!(Dataset::default().validate().is_err());
        let mut d = tiny();
        d.timestamps[2] = 0.1;
        assert!(d.validate().is_err());
        let mut d = tiny();
        d.trajectory.pop();
        assert!(d.validate().is_err());
        let dir = tempfile::tempdir().unwrap();
        let err = Dataset::load(&dir.path().join("missing"), &dir.path().join("t.tum"), None).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
