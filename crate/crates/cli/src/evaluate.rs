//! Trajectory and loop-detection metrics against ground truth.
//!
//! Errors are measured without any trajectory alignment: estimates and ground
//! truth share their first pose. A keyframe pair counts as a true revisit when
//! the true positions of their first frames are within twice the largest cell
//! edge and the pair is far enough apart in time to be queried at all.

use std::fmt;
use std::path::Path;

use histoloop::RigidTransform;

use crate::io::reports::{read_keyframes, read_loops, KeyframeRecord, LoopRecord};
use crate::io::tum;
use crate::{Config, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub endpoint_error_before: f64,
    pub endpoint_error_after: f64,
    pub ate_rmse_before: f64,
    pub ate_rmse_after: f64,
    /// Rows of the loop report.
    pub loops_detected: usize,
    pub loops_correct: usize,
    pub loops_accepted: usize,
    pub accepted_correct: usize,
    /// Query keyframes that have at least one true revisit.
    pub revisit_queries: usize,
    /// Correct detections over detections; `None` without detections.
    pub precision: Option<f64>,
    /// Revisit queries whose reported match is a true revisit, over all
    /// revisit queries; `None` when there are no revisits.
    pub recall: Option<f64>,
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or("nan".to_string(), |v| format!("{v:.6}"));
        writeln!(f, "endpoint_error_before = {:.6}", self.endpoint_error_before)?;
        writeln!(f, "endpoint_error_after = {:.6}", self.endpoint_error_after)?;
        writeln!(f, "ate_rmse_before = {:.6}", self.ate_rmse_before)?;
        writeln!(f, "ate_rmse_after = {:.6}", self.ate_rmse_after)?;
        writeln!(f, "loops_detected = {}", self.loops_detected)?;
        writeln!(f, "loops_correct = {}", self.loops_correct)?;
        writeln!(f, "loops_accepted = {}", self.loops_accepted)?;
        writeln!(f, "accepted_correct = {}", self.accepted_correct)?;
        writeln!(f, "revisit_queries = {}", self.revisit_queries)?;
        writeln!(f, "precision = {}", opt(self.precision))?;
        write!(f, "recall = {}", opt(self.recall))
    }
}

fn check_len(name: &str, poses: &[RigidTransform], truth: &[RigidTransform]) -> Result<()> {
    if poses.len() != truth.len() {
        return Err(Error::Invalid(format!(
            "{name} has {} poses, ground truth has {}",
            poses.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Invalid("ground truth is empty".into()));
    }
    Ok(())
}

pub fn endpoint_error(poses: &[RigidTransform], truth: &[RigidTransform]) -> Result<f64> {
    check_len("trajectory", poses, truth)?;
    let (a, b) = (poses[poses.len() - 1], truth[truth.len() - 1]);
    Ok((a.translation - b.translation).norm())
}

/// Root mean square of the position errors.
pub fn ate_rmse(poses: &[RigidTransform], truth: &[RigidTransform]) -> Result<f64> {
    check_len("trajectory", poses, truth)?;
    let sum: f64 = poses
        .iter()
        .zip(truth)
        .map(|(a, b)| (a.translation - b.translation).norm_squared())
        .sum();
    Ok((sum / poses.len() as f64).sqrt())
}

/// Whether keyframes `query` and `matched` start at nearby true positions.
pub fn is_revisit(query: &KeyframeRecord, matched: &KeyframeRecord, truth: &[RigidTransform], radius: f64) -> bool {
    match (truth.get(query.first_frame), truth.get(matched.first_frame)) {
        (Some(a), Some(b)) => (a.translation - b.translation).norm() <= radius,
        _ => false,
    }
}

pub struct EvalInput<'a> {
    pub before: &'a [RigidTransform],
    pub after: &'a [RigidTransform],
    pub loops: &'a [LoopRecord],
    pub keyframes: &'a [KeyframeRecord],
    pub truth: &'a [RigidTransform],
    pub cell_size: f64,
    pub temporal_exclusion: u64,
}

pub fn evaluate(input: &EvalInput<'_>) -> Result<Metrics> {
    check_len("trajectory before", input.before, input.truth)?;
    check_len("trajectory after", input.after, input.truth)?;
    let radius = 2.0 * input.cell_size;
    let kf = |id: u64| {
        input
            .keyframes
            .iter()
            .find(|k| k.id == id)
            .ok_or_else(|| Error::Invalid(format!("loop refers to unknown keyframe {id}")))
    };
    let mut correct = 0;
    let mut accepted = 0;
    let mut accepted_correct = 0;
    let mut hits = std::collections::BTreeSet::new();
    for l in input.loops {
        let ok = is_revisit(kf(l.query_id)?, kf(l.match_id)?, input.truth, radius);
        correct += usize::from(ok);
        if ok {
            hits.insert(l.query_id);
        }
        if l.accepted_by_alignment {
            accepted += 1;
            accepted_correct += usize::from(ok);
        }
    }
    let revisit_queries: Vec<u64> = input
        .keyframes
        .iter()
        .filter(|q| {
            input.keyframes.iter().any(|m| {
                m.id + input.temporal_exclusion < q.id && is_revisit(q, m, input.truth, radius)
            })
        })
        .map(|q| q.id)
        .collect();
    let found = revisit_queries.iter().filter(|q| hits.contains(q)).count();
    let ratio = |a: usize, b: usize| (b > 0).then(|| a as f64 / b as f64);
    Ok(Metrics {
        endpoint_error_before: endpoint_error(input.before, input.truth)?,
        endpoint_error_after: endpoint_error(input.after, input.truth)?,
        ate_rmse_before: ate_rmse(input.before, input.truth)?,
        ate_rmse_after: ate_rmse(input.after, input.truth)?,
        loops_detected: input.loops.len(),
        loops_correct: correct,
        loops_accepted: accepted,
        accepted_correct,
        revisit_queries: revisit_queries.len(),
        precision: ratio(correct, input.loops.len()),
        recall: ratio(found, revisit_queries.len()),
    })
}

/// Metrics for a run's output directory.
pub fn evaluate_report_dir(dir: &Path, ground_truth: &Path) -> Result<Metrics> {
    let config = Config::load(&dir.join("config.toml"), &[])?;
    let truth = poses_of(ground_truth)?;
    let before = poses_of(&dir.join("trajectory_before.tum"))?;
    let after = poses_of(&dir.join("trajectory_after.tum"))?;
    let loops = read_loops(&dir.join("loops.csv"))?;
    let keyframes = read_keyframes(&dir.join("keyframes.csv"))?;
    evaluate(&EvalInput {
        before: &before,
        after: &after,
        loops: &loops,
        keyframes: &keyframes,
        truth: &truth,
        cell_size: config.cell_size.vector().max(),
        temporal_exclusion: config.temporal_exclusion,
    })
}

fn poses_of(path: &Path) -> Result<Vec<RigidTransform>> {
    Ok(tum::read(path)?.into_iter().map(|s| s.pose).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use histoloop::Point3;

    fn line(n: usize, offset: f64) -> Vec<RigidTransform> {
        (0..n)
            .map(|i| RigidTransform::from_translation(Point3::new(i as f64, offset * i as f64, 0.0)))
            .collect()
    }

    fn kf(id: u64, first: usize) -> KeyframeRecord {
        KeyframeRecord { id, first_frame: first, last_frame: first, weakly_invariant: false, plane_cells: 10, line_cells: 0 }
    }

    #[test]
    fn exact_trajectory_has_zero_error() {
        let truth = line(10, 0.0);
        let drifted = line(10, 0.1);
        let m = evaluate(&EvalInput {
            before: &drifted,
            after: &truth,
            loops: &[],
            keyframes: &[],
            truth: &truth,
            cell_size: 1.0,
            temporal_exclusion: 5,
        })
        .unwrap();
        assert_eq!(m.ate_rmse_after, 0.0);
        assert_eq!(m.endpoint_error_after, 0.0);
        assert!((m.endpoint_error_before - 0.9).abs() < 1e-12);
        assert_eq!(m.precision, None);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(ate_rmse(&line(3, 0.0), &line(4, 0.0)).is_err());
    }

    #[test]
    fn precision_and_recall_count_revisits() {
        // frames 0 and 10 share a position, as do 1 and 11
        let mut truth = line(12, 0.0);
        truth[10] = truth[0];
        truth[11] = truth[1];
        let keyframes: Vec<KeyframeRecord> = (0..12).map(|i| kf(i, i as usize)).collect();
        let loops = [
            LoopRecord { query_id: 10, match_id: 0, sim_plane: 0.95, sim_line: 0.7, accepted_by_alignment: true },
            LoopRecord { query_id: 11, match_id: 4, sim_plane: 0.95, sim_line: 0.7, accepted_by_alignment: false },
        ];
        let input = EvalInput {
            before: &truth,
            after: &truth,
            loops: &loops,
            keyframes: &keyframes,
            truth: &truth,
            cell_size: 1.0,
            temporal_exclusion: 5,
        };
        let m = evaluate(&input).unwrap();
        assert_eq!(m.revisit_queries, 2);
        assert_eq!(m.precision, Some(0.5));
        assert_eq!(m.recall, Some(0.5));
        assert_eq!(m.accepted_correct, 1);
        let none = evaluate(&EvalInput { loops: &[], ..input }).unwrap();
        assert_eq!(none.recall, Some(0.0));
    }
}
