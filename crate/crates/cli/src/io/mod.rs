//! Readers and writers for point clouds (PLY, XYZ), trajectories (TUM), the
//! CSV reports and g2o graph dumps.

pub mod g2o;
pub mod ply;
pub mod reports;
pub mod tum;
pub mod xyz;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use histoloop::Point3;

use crate::{Error, Result};

/// Reads a point cloud, choosing the format from the extension (`.ply`,
/// anything else is read as XYZ text).
pub fn read_points(path: &Path) -> Result<Vec<Point3>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("ply") => ply::read(path),
        _ => xyz::read(path),
    }
}

/// Writes through a buffered file, creating parent directories.
pub(crate) fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
