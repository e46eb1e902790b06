//! End-to-end loop closure over a dataset.
//!
//! Frames are registered into a global cell map with the current pose
//! estimate. Every `keyframe_size` frames the span is regridded in the frame
//! of its first pose, described, queried against earlier keyframes and then
//! added to the database. The best candidate is aligned; an accepted
//! alignment becomes a loop edge, the pose graph is optimized at once and the
//! correction is carried to every frame, to the global map and to the
//! odometry of frames still to come.

use std::path::Path;
use std::time::Instant;

use histoloop::alignment::{align, initial_guesses_from_histograms, AlignmentTarget};
use histoloop::cell_map::{CellMap, FeatureKind};
use histoloop::descriptor::{classify_cell, DescriptorParams, Histogram2D, Keyframe};
use histoloop::loop_detector::KeyframeDatabase;
use histoloop::pose_graph::{correct_frames, keyframe_correction, OptimizationReport, PoseGraph};
use histoloop::RigidTransform;

use crate::io::ply::{self, CellVertex};
use crate::io::reports::{self, AlignmentRecord, KeyframeRecord, LoopRecord};
use crate::io::tum::{self, Stamped};
use crate::io::{g2o, write_file};
use crate::timing::{self, TimingProfile};
use crate::{Config, Dataset, Result};

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: Config,
    pub timestamps: Vec<f64>,
    pub trajectory_before: Vec<RigidTransform>,
    pub trajectory_after: Vec<RigidTransform>,
    /// Best candidate of every query that had one.
    pub loops: Vec<LoopRecord>,
    pub alignments: Vec<AlignmentRecord>,
    pub keyframes: Vec<KeyframeRecord>,
    pub histograms: Vec<(u64, Histogram2D, Histogram2D)>,
    pub optimizations: Vec<OptimizationReport>,
    pub graph: PoseGraph,
    pub map_before: Vec<CellVertex>,
    pub map_after: Vec<CellVertex>,
    pub timing: TimingProfile,
    pub malformed_frames: Vec<usize>,
    pub empty_frames: usize,
    pub skipped_points: usize,
}

impl RunReport {
    pub fn accepted_loops(&self) -> usize {
        self.loops.iter().filter(|l| l.accepted_by_alignment).count()
    }

    /// Writes every output file under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let stamped = |poses: &[RigidTransform]| -> Vec<Stamped> {
            self.timestamps
                .iter()
                .zip(poses)
                .map(|(&timestamp, &pose)| Stamped { timestamp, pose })
                .collect()
        };
        tum::write(&dir.join("trajectory_before.tum"), &stamped(&self.trajectory_before))?;
        tum::write(&dir.join("trajectory_after.tum"), &stamped(&self.trajectory_after))?;
        reports::write_loops(&dir.join("loops.csv"), &self.loops)?;
        reports::write_alignments(&dir.join("alignments.csv"), &self.alignments)?;
        reports::write_keyframes(&dir.join("keyframes.csv"), &self.keyframes)?;
        ply::write_cells(&dir.join("map_before.ply"), &self.map_before)?;
        ply::write_cells(&dir.join("map_after.ply"), &self.map_after)?;
        self.timing.write_csv(&dir.join("timing.csv"))?;
        for (id, plane, line) in &self.histograms {
            reports::write_histograms(&dir.join("histograms").join(format!("{id}.csv")), plane, line)?;
        }
        g2o::write(&dir.join("graph.g2o"), &self.graph)?;
        let config = self.config.to_toml();
        write_file(&dir.join("config.toml"), |w| w.write_all(config.as_bytes()))?;
        let summary = self.summary();
        write_file(&dir.join("summary.txt"), |w| w.write_all(summary.as_bytes()))
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "frames = {}\nkeyframes = {}\nloop_candidates = {}\naccepted_loops = {}\n\
             malformed_frames = {}\nempty_frames = {}\nskipped_points = {}\n",
            self.trajectory_before.len(),
            self.keyframes.len(),
            self.loops.len(),
            self.accepted_loops(),
            self.malformed_frames.len(),
            self.empty_frames,
            self.skipped_points,
        );
        for stage in self.timing.stages() {
            if let Some(t) = self.timing.summary(stage) {
                s += &format!(
                    "{stage}_mean_ms = {:.6}\n{stage}_p99_ms = {:.6}\n",
                    t.mean.as_secs_f64() * 1e3,
                    t.p99.as_secs_f64() * 1e3
                );
            }
        }
        s
    }
}

fn cell_vertices(map: &CellMap, params: &DescriptorParams) -> Vec<CellVertex> {
    map.cells()
        .iter()
        .map(|c| CellVertex {
            mean: *c.mean(),
            count: u32::try_from(c.count()).unwrap_or(u32::MAX),
            kind: match classify_cell(c, params).map(|f| f.kind) {
                None => 0,
                Some(FeatureKind::Plane) => 1,
                Some(FeatureKind::Line) => 2,
            },
        })
        .collect()
}

/// Map of all non-empty frames registered with `poses`.
fn build_map(config: &Config, frames: &[Vec<histoloop::Point3>], poses: &[RigidTransform]) -> Result<CellMap> {
    let mut map = CellMap::without_frame_log(config.cell_size.vector())?;
    for (frame, pose) in frames.iter().zip(poses) {
        if !frame.is_empty() {
            map.register_frame(frame, pose)?;
        }
    }
    Ok(map)
}

struct State<'a> {
    config: &'a Config,
    data: &'a Dataset,
    params: DescriptorParams,
    map: CellMap,
    /// Dataset frame index of each frame in the map's log.
    logged: Vec<usize>,
    poses: Vec<RigidTransform>,
    /// Correction applied to incoming odometry: corrected = fix * raw.
    fix: Option<RigidTransform>,
    graph: PoseGraph,
    db: KeyframeDatabase,
    keyframes: Vec<Keyframe>,
    targets: Vec<Option<AlignmentTarget>>,
    report: RunReport,
}

impl<'a> State<'a> {
    fn register(&mut self, i: usize) -> Result<()> {
        let raw = self.data.trajectory[i];
        let pose = match self.fix {
            Some(fix) => (fix * raw).orthonormalized(),
            None => raw,
        };
        self.poses.push(pose);
        let frame = &self.data.frames[i];
        if frame.is_empty() {
            self.report.empty_frames += 1;
            return Ok(());
        }
        let start = Instant::now();
        self.map.register_frame(frame, &pose)?;
        self.report.timing.record(timing::REGISTRATION, start.elapsed());
        self.logged.push(i);
        Ok(())
    }

    fn keyframe(&mut self, id: u64, first: usize, last: usize) -> Result<()> {
        let raw = &self.data.trajectory;
        let origin = raw[first].inverse();
        let start = Instant::now();
        let mut local = CellMap::without_frame_log(self.config.cell_size.vector())?;
        for j in first..=last {
            let frame = &self.data.frames[j];
            if !frame.is_empty() {
                local.register_frame(frame, &(origin * raw[j]))?;
            }
        }
        self.report.timing.record(timing::KEYFRAME_MAP, start.elapsed());
        let start = Instant::now();
        let kf = Keyframe::describe(id, (first, last), self.poses[first], local.cells(), &self.params);
        self.report.timing.record(timing::HISTOGRAM, start.elapsed());

        let planes = kf.plane_cell_count();
        log::debug!(
            "keyframe {id}: {planes} plane and {} line cells, canonical rotation {:.3?}",
            kf.features.len() - planes,
            kf.canonical_rotation.as_slice()
        );
        self.report.keyframes.push(KeyframeRecord {
            id,
            first_frame: first,
            last_frame: last,
            weakly_invariant: kf.weakly_invariant,
            plane_cells: planes,
            line_cells: kf.features.len() - planes,
        });
        self.report.histograms.push((id, kf.hist_plane.clone(), kf.hist_line.clone()));

        self.graph.add_node(id, self.poses[first])?;
        if let Some(prev) = self.keyframes.last() {
            let prev_first = prev.frame_range.0;
            self.graph.add_odometry_edge(prev.id, &raw[prev_first], id, &raw[first])?;
        }

        let compared = self
            .db
            .entries()
            .iter()
            .take_while(|e| e.id + self.db.temporal_exclusion() < id)
            .count();
        let start = Instant::now();
        let candidates = self.db.query_keyframe(&kf, &self.config.thresholds());
        let elapsed = start.elapsed();
        self.report.timing.record(timing::QUERY, elapsed);
        if compared > 0 {
            self.report.timing.record(timing::SIMILARITY, elapsed / (2 * compared) as u32);
        }
        self.db.insert(&kf)?;
        let target = AlignmentTarget::new(kf.features.clone()).ok();
        self.keyframes.push(kf);
        self.targets.push(target);

        if let Some(best) = candidates.first() {
            let accepted = self.close_loop(id, best.match_id).unwrap_or_else(|e| {
                log::warn!("loop {id} -> {}: {e}", best.match_id);
                false
            });
            self.report.loops.push(LoopRecord {
                query_id: id,
                match_id: best.match_id,
                sim_plane: best.sim_plane,
                sim_line: best.sim_line,
                accepted_by_alignment: accepted,
            });
        }
        Ok(())
    }

    /// Aligns keyframe `query` onto `matched`; on acceptance adds the loop
    /// edge, optimizes and applies the correction. Returns whether the loop
    /// was accepted.
    fn close_loop(&mut self, query: u64, matched: u64) -> histoloop::Result<bool> {
        let q = &self.keyframes[query as usize];
        let m = &self.keyframes[matched as usize];
        let Some(target) = &self.targets[matched as usize] else {
            return Err(histoloop::Error::AlignmentFailed);
        };
        let mut guesses = initial_guesses_from_histograms(q, m);
        guesses.push((self.poses[m.frame_range.0].inverse() * self.poses[q.frame_range.0]).orthonormalized());
        let params = self.config.align_params();
        let start = Instant::now();
        let result = align(&q.features, target, &guesses, &params);
        self.report.timing.record(timing::ALIGNMENT, start.elapsed());
        let result = result?;
        self.report.alignments.push(AlignmentRecord {
            query_id: query,
            match_id: matched,
            mean_residual: result.mean_residual,
            matched: result.matched,
            iterations: result.iterations,
            converged: result.converged,
            accepted: result.accepted,
            guess_index: result.guess_index,
            relative_pose: result.relative_pose,
        });
        if !result.accepted {
            log::info!(
                "loop {query} -> {matched} rejected: mean residual {:.4} m",
                result.mean_residual
            );
            return Ok(false);
        }

        let mut graph = self.graph.clone();
        graph.add_loop_edge(&result, query, matched, params.accept_distance)?;
        let before = graph.poses();
        let start = Instant::now();
        let opt = graph.optimize(&self.config.optimize_params());
        self.report.timing.record(timing::OPTIMIZATION, start.elapsed());
        let opt = opt?;
        log::info!(
            "loop {query} -> {matched} accepted: residual {:.4} m, cost {:.3e} -> {:.3e}",
            result.mean_residual,
            opt.initial_cost,
            opt.final_cost
        );
        let after = graph.poses();
        self.graph = graph;
        self.report.optimizations.push(opt);

        let corrections: Vec<RigidTransform> = before
            .iter()
            .zip(&after)
            .map(|(b, a)| keyframe_correction(b, a))
            .collect();
        let ranges: Vec<(usize, usize)> = self.keyframes.iter().map(|k| k.frame_range).collect();
        self.poses = correct_frames(&self.poses, &ranges, &corrections);
        let last = self.poses.len() - 1;
        self.fix = Some((self.poses[last] * self.data.trajectory[last].inverse()).orthonormalized());

        let start = Instant::now();
        let logged: Vec<RigidTransform> = self.logged.iter().map(|&i| self.poses[i]).collect();
        self.map.rebuild(&logged)?;
        self.report.timing.record(timing::REBUILD, start.elapsed());
        Ok(true)
    }
}

/// Runs loop closure over `data`. Only an invalid dataset or configuration
/// is an error; per-candidate failures are logged and skipped.
pub fn run(config: &Config, data: &Dataset) -> Result<RunReport> {
    config.validate()?;
    data.validate()?;
    let params = config.descriptor_params();
    let mut state = State {
        config,
        data,
        params,
        map: CellMap::new(config.cell_size.vector())?,
        logged: Vec::new(),
        poses: Vec::with_capacity(data.len()),
        fix: None,
        graph: PoseGraph::new(),
        db: KeyframeDatabase::new(config.temporal_exclusion),
        keyframes: Vec::new(),
        targets: Vec::new(),
        report: RunReport {
            config: config.clone(),
            timestamps: data.timestamps.clone(),
            trajectory_before: data.trajectory.clone(),
            trajectory_after: Vec::new(),
            loops: Vec::new(),
            alignments: Vec::new(),
            keyframes: Vec::new(),
            histograms: Vec::new(),
            optimizations: Vec::new(),
            graph: PoseGraph::new(),
            map_before: Vec::new(),
            map_after: Vec::new(),
            timing: TimingProfile::default(),
            malformed_frames: data.malformed_frames.clone(),
            empty_frames: 0,
            skipped_points: 0,
        },
    };
    let n = config.keyframe_size;
    for i in 0..data.len() {
        state.register(i)?;
        if (i + 1) % n == 0 {
            let id = ((i + 1) / n - 1) as u64;
            state.keyframe(id, i + 1 - n, i)?;
        }
    }
    let before = build_map(config, &data.frames, &data.trajectory)?;
    let mut report = state.report;
    report.map_before = cell_vertices(&before, &params);
    report.map_after = cell_vertices(&state.map, &params);
    report.skipped_points = state.map.skipped_points();
    report.trajectory_after = state.poses;
    report.graph = state.graph;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use histoloop::Point3;

    fn box_frame() -> Vec<Point3> {
        let mut pts = Vec::new();
        for a in 0..20 {
            for b in 0..20 {
                let (u, v) = (a as f64 * 0.2 - 2.0, b as f64 * 0.15);
                pts.push(Point3::new(u, 2.0, v));
                pts.push(Point3::new(u, -2.0, v));
                pts.push(Point3::new(u, v - 1.5, 0.0));
            }
        }
        pts
    }

    fn tiny(frames: usize) -> Dataset {
        Dataset {
            timestamps: (0..frames).map(|i| i as f64).collect(),
            frames: vec![box_frame(); frames],
            trajectory: (0..frames)
                .map(|i| RigidTransform::from_translation(Point3::new(i as f64 * 0.1, 0.0, 0.0)))
                .collect(),
            ground_truth: None,
            malformed_frames: Vec::new(),
        }
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert!(run(&Config::default(), &Dataset::default()).is_err());
    }

    #[test]
    fn partial_keyframe_is_discarded() {
        let config = Config { keyframe_size: 4, ..Default::default() };
        let r = run(&config, &tiny(10)).unwrap();
        assert_eq!(r.keyframes.len(), 2);
        assert_eq!(r.keyframes[1].first_frame, 4);
        assert_eq!(r.keyframes[1].last_frame, 7);
        assert_eq!(r.trajectory_after, r.trajectory_before);
    }

    #[test]
    fn empty_frames_are_counted_not_fatal() {
        let mut d = tiny(8);
        d.frames[3].clear();
        d.frames[5] = vec![Point3::new(f64::NAN, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0)];
        let config = Config { keyframe_size: 4, ..Default::default() };
        let r = run(&config, &d).unwrap();
        assert_eq!(r.empty_frames, 1);
        assert_eq!(r.skipped_points, 1);
        assert_eq!(r.keyframes.len(), 2);
    }

    #[test]
    fn writes_every_output() {
        let config = Config { keyframe_size: 4, ..Default::default() };
        let r = run(&config, &tiny(8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path()).unwrap();
        for f in [
            "trajectory_before.tum",
            "trajectory_after.tum",
            "loops.csv",
            "map_before.ply",
            "map_after.ply",
            "timing.csv",
            "histograms/0.csv",
            "histograms/1.csv",
            "config.toml",
            "graph.g2o",
        ] {
            assert!(dir.path().join(f).is_file(), "{f} missing");
        }
    }
}
