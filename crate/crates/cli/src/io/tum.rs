//! TUM trajectories: `timestamp tx ty tz qx qy qz qw` per line.

use std::path::Path;

use histoloop::{Point3, RigidTransform};

use super::{read_text, write_file};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stamped {
    pub timestamp: f64,
    pub pose: RigidTransform,
}

pub fn parse(text: &str, path: &Path) -> Result<Vec<Stamped>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::parse(path, i + 1, "bad number"))?;
        let [t, x, y, z, qx, qy, qz, qw] = values[..] else {
            return Err(Error::parse(path, i + 1, "expected 8 columns"));
        };
        let pose = RigidTransform::from_quaternion(Point3::new(x, y, z), qx, qy, qz, qw)
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push(Stamped { timestamp: t, pose });
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<Stamped>> {
    parse(&read_text(path)?, path)
}

pub fn format_line(s: &Stamped) -> String {
    let t = &s.pose.translation;
    let [qx, qy, qz, qw] = s.pose.quaternion();
    format!(
        "{:.6} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
        s.timestamp, t.x, t.y, t.z, qx, qy, qz, qw
    )
}

pub fn write(path: &Path, poses: &[Stamped]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "# timestamp tx ty tz qx qy qz qw")?;
        for s in poses {
            writeln!(w, "{}", format_line(s))?;
        }
        Ok(())
    })
}
