//! Whitespace-separated `x y z [extra columns]` text, one point per line.
//! Blank lines and lines starting with `#` or `//` are skipped.

use std::path::Path;

use histoloop::Point3;

use super::{read_text, write_file};
use crate::{Error, Result};

pub fn parse(text: &str, path: &Path) -> Result<Vec<Point3>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("//") {
            continue;
        }
        let mut it = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
        let mut xyz = [0.0; 3];
        for v in &mut xyz {
            let tok = it
                .next()
                .ok_or_else(|| Error::parse(path, i + 1, "expected three coordinates"))?;
            *v = tok
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad number {tok:?}")))?;
        }
        out.push(Point3::new(xyz[0], xyz[1], xyz[2]));
    }
    Ok(out)
}

pub fn read(path: &Path) -> Result<Vec<Point3>> {
    parse(&read_text(path)?, path)
}

pub fn write(path: &Path, points: &[Point3]) -> Result<()> {
    write_file(path, |w| {
        for p in points {
            writeln!(w, "{:.6} {:.6} {:.6}", p.x, p.y, p.z)?;
        }
        Ok(())
    })
}
