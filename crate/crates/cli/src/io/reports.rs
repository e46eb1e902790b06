//! CSV reports written by a run and read back by `eval`.

use std::path::Path;

use histoloop::descriptor::{Histogram2D, BINS};
use histoloop::RigidTransform;

use super::{read_text, write_file};
use crate::{Error, Result};

/// Best candidate of one keyframe query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopRecord {
    pub query_id: u64,
    pub match_id: u64,
    pub sim_plane: f64,
    pub sim_line: f64,
    pub accepted_by_alignment: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentRecord {
    pub query_id: u64,
    pub match_id: u64,
    pub mean_residual: f64,
    pub matched: usize,
    pub iterations: usize,
    pub converged: bool,
    pub accepted: bool,
    pub guess_index: usize,
    pub relative_pose: RigidTransform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframeRecord {
    pub id: u64,
    pub first_frame: usize,
    pub last_frame: usize,
    pub weakly_invariant: bool,
    pub plane_cells: usize,
    pub line_cells: usize,
}

pub const LOOPS_HEADER: &str = "query_id,match_id,sim_plane,sim_line,accepted_by_alignment";
const KEYFRAMES_HEADER: &str = "id,first_frame,last_frame,weakly_invariant,plane_cells,line_cells";
const ALIGNMENTS_HEADER: &str =
    "query_id,match_id,mean_residual,matched,iterations,converged,accepted,guess_index,tx,ty,tz,qx,qy,qz,qw";

pub fn write_loops(path: &Path, loops: &[LoopRecord]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "{LOOPS_HEADER}")?;
        for l in loops {
            writeln!(
                w,
                "{},{},{:.12},{:.12},{}",
                l.query_id, l.match_id, l.sim_plane, l.sim_line, l.accepted_by_alignment
            )?;
        }
        Ok(())
    })
}

pub fn write_alignments(path: &Path, records: &[AlignmentRecord]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "{ALIGNMENTS_HEADER}")?;
        for a in records {
            let t = a.relative_pose.translation;
            let [qx, qy, qz, qw] = a.relative_pose.quaternion();
            writeln!(
                w,
                "{},{},{:.9},{},{},{},{},{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
                a.query_id,
                a.match_id,
                a.mean_residual,
                a.matched,
                a.iterations,
                a.converged,
                a.accepted,
                a.guess_index,
                t.x,
                t.y,
                t.z,
                qx,
                qy,
                qz,
                qw
            )?;
        }
        Ok(())
    })
}

pub fn write_keyframes(path: &Path, records: &[KeyframeRecord]) -> Result<()> {
    write_file(path, |w| {
        writeln!(w, "{KEYFRAMES_HEADER}")?;
        for k in records {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                k.id, k.first_frame, k.last_frame, k.weakly_invariant, k.plane_cells, k.line_cells
            )?;
        }
        Ok(())
    })
}

/// Plane rows then line rows; each row is one yaw bin across all pitch bins.
pub fn write_histograms(path: &Path, plane: &Histogram2D, line: &Histogram2D) -> Result<()> {
    write_file(path, |w| {
        write!(w, "class,phi_bin")?;
        for c in 0..BINS {
            write!(w, ",theta_{c}")?;
        }
        writeln!(w)?;
        for (name, h) in [("plane", plane), ("line", line)] {
            for r in 0..BINS {
                write!(w, "{name},{r}")?;
                for c in 0..BINS {
                    write!(w, ",{:.9e}", h.get(r, c))?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    })
}

fn rows<'a>(text: &'a str, header: &str, path: &Path) -> Result<impl Iterator<Item = (usize, Vec<&'a str>)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        _ => return Err(Error::parse(path, 1, format!("expected header {header}"))),
    }
    Ok(lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().split(',').collect())))
}

fn field<T: std::str::FromStr>(cols: &[&str], k: usize, path: &Path, line: usize) -> Result<T> {
    cols.get(k)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse(path, line, format!("bad column {k}")))
}

pub fn read_loops(path: &Path) -> Result<Vec<LoopRecord>> {
    let text = read_text(path)?;
    let rows: Vec<_> = rows(&text, LOOPS_HEADER, path)?.collect();
    rows.into_iter()
        .map(|(line, c)| {
            Ok(LoopRecord {
                query_id: field(&c, 0, path, line)?,
                match_id: field(&c, 1, path, line)?,
                sim_plane: field(&c, 2, path, line)?,
                sim_line: field(&c, 3, path, line)?,
                accepted_by_alignment: field(&c, 4, path, line)?,
            })
        })
        .collect()
}

pub fn read_keyframes(path: &Path) -> Result<Vec<KeyframeRecord>> {
    let text = read_text(path)?;
    let rows: Vec<_> = rows(&text, KEYFRAMES_HEADER, path)?.collect();
    rows.into_iter()
        .map(|(line, c)| {
            Ok(KeyframeRecord {
                id: field(&c, 0, path, line)?,
                first_frame: field(&c, 1, path, line)?,
                last_frame: field(&c, 2, path, line)?,
                weakly_invariant: field(&c, 3, path, line)?,
                plane_cells: field(&c, 4, path, line)?,
                line_cells: field(&c, 5, path, line)?,
            })
        })
        .collect()
}
