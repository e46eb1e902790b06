//! Fixed-partition cell map.
//!
//! Space is cut into cubes of `cell_size`; every registered point lands in
//! exactly one [`Cell`], which keeps the raw points together with a running
//! mean and covariance. Cells are found by grid index through a hash table and
//! by region through an octree over their centers. The map also logs every
//! registered frame with its pose so it can be rebuilt after the poses are
//! corrected.

mod cell;
mod hash;
mod octree;

use alloc::vec::Vec;

use hashbrown::{HashMap, HashSet};
use nalgebra::Vector3;

pub use cell::{grid_index_of, Cell, Feature, FeatureKind, GridIndex};
pub use hash::{hash_of, BuildGridHasher};
pub use octree::{Octree, LEAF_CAPACITY, MAX_DEPTH};

use crate::math::{is_finite3, Point3, RigidTransform};
use crate::{Error, Result};

pub const DEFAULT_CELL_SIZE: f64 = 1.0;

/// A frame as it was registered: sensor-frame points and the pose used.
#[derive(Debug, Clone)]
pub struct LoggedFrame {
    pub points: Vec<Point3>,
    pub pose: RigidTransform,
}

#[derive(Debug, Clone)]
pub struct CellMap {
    cell_size: Vector3<f64>,
    cells: Vec<Cell>,
    index: HashMap<GridIndex, usize, BuildGridHasher>,
    octree: Octree,
    frame_log: Vec<LoggedFrame>,
    keep_frames: bool,
    skipped_points: usize,
}

impl CellMap {
    pub fn new(cell_size: Vector3<f64>) -> Result<Self> {
        if !cell_size.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::invalid("cell size must be positive and finite"));
        }
        Ok(Self {
            cell_size,
            cells: Vec::new(),
            index: HashMap::with_hasher(BuildGridHasher),
            octree: Octree::new(8.0 * cell_size.max()),
            frame_log: Vec::new(),
            keep_frames: true,
            skipped_points: 0,
        })
    }

    /// A map that does not retain registered frames; it cannot be rebuilt.
    pub fn without_frame_log(cell_size: Vector3<f64>) -> Result<Self> {
        let mut map = Self::new(cell_size)?;
        map.keep_frames = false;
        Ok(map)
    }

    pub fn cell_size(&self) -> &Vector3<f64> {
        &self.cell_size
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cells in creation order.
    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cells_mut(&mut self) -> &mut [Cell] {
        &mut self.cells
    }

    pub fn get(&self, index: &GridIndex) -> Option<&Cell> {
        self.index.get(index).map(|&slot| &self.cells[slot])
    }

    pub fn frame_log(&self) -> &[LoggedFrame] {
        &self.frame_log
    }

    /// Points dropped because they were not finite.
    pub fn skipped_points(&self) -> usize {
        self.skipped_points
    }

    pub fn point_count(&self) -> usize {
        self.cells.iter().map(Cell::count).sum()
    }

    fn slot_for(&mut self, index: GridIndex) -> usize {
        if let Some(&slot) = self.index.get(&index) {
            return slot;
        }
        let slot = self.cells.len();
        let cell = Cell::new(index, self.cell_size);
        self.octree.insert(*cell.center(), slot);
        self.cells.push(cell);
        self.index.insert(index, slot);
        slot
    }

    /// Adds one world-frame point. Non-finite points are counted and skipped.
    pub fn insert_point(&mut self, p: Point3) -> Option<GridIndex> {
        let Ok(index) = grid_index_of(&p, &self.cell_size) else {
            self.skipped_points += 1;
            return None;
        };
        let slot = self.slot_for(index);
        self.cells[slot]
            .update_stats(p)
            .expect("point is inside the cell it was indexed to");
        Some(index)
    }

    /// Transforms `frame` by `pose` into the world, bins every point and
    /// updates the touched cells. Returns the touched cells in first-touch
    /// order.
    pub fn register_frame(&mut self, frame: &[Point3], pose: &RigidTransform) -> Result<Vec<GridIndex>> {
        pose.validate()?;
        if frame.is_empty() {
            return Err(Error::invalid("frame has no points"));
        }
        let mut seen: HashSet<GridIndex, BuildGridHasher> = HashSet::with_hasher(BuildGridHasher);
        let mut touched = Vec::new();
        for p in frame {
            if !is_finite3(p) {
                self.skipped_points += 1;
                continue;
            }
            if let Some(index) = self.insert_point(pose.apply(p)) {
                if seen.insert(index) {
                    touched.push(index);
                }
            }
        }
        if self.keep_frames {
            self.frame_log.push(LoggedFrame {
                points: frame.to_vec(),
                pose: *pose,
            });
        }
        Ok(touched)
    }

    /// Cells whose centers lie in the closed box `[lo, hi]`, in creation order.
    pub fn cells_in_box(&self, lo: &Point3, hi: &Point3) -> Result<Vec<&Cell>> {
        if !is_finite3(lo) || !is_finite3(hi) {
            return Err(Error::invalid("box corners must be finite"));
        }
        if (0..3).any(|k| lo[k] > hi[k]) {
            return Err(Error::invalid("box corners are inverted"));
        }
        Ok(self
            .octree
            .query_box(lo, hi)
            .into_iter()
            .map(|slot| &self.cells[slot])
            .collect())
    }

    /// Slots (positions in [`cells`](Self::cells)) of the cells centered in
    /// `[lo, hi]`.
    pub fn slots_in_box(&self, lo: &Point3, hi: &Point3) -> Vec<usize> {
        self.octree.query_box(lo, hi)
    }

    /// Replaces the map with one rebuilt from the frame log, each frame
    /// re-registered with its corrected pose.
    pub fn rebuild(&mut self, corrected_poses: &[RigidTransform]) -> Result<()> {
        if corrected_poses.len() != self.frame_log.len() {
            return Err(Error::invalid("one corrected pose per logged frame is required"));
        }
        for pose in corrected_poses {
            pose.validate()?;
        }
        let mut fresh = CellMap::new(self.cell_size)?;
        fresh.keep_frames = self.keep_frames;
        let log = core::mem::take(&mut self.frame_log);
        for (frame, pose) in log.into_iter().zip(corrected_poses) {
            fresh.register_logged(frame.points, pose);
        }
        *self = fresh;
        Ok(())
    }

    fn register_logged(&mut self, points: Vec<Point3>, pose: &RigidTransform) {
        for p in &points {
            if is_finite3(p) {
                self.insert_point(pose.apply(p));
            } else {
                self.skipped_points += 1;
            }
        }
        self.frame_log.push(LoggedFrame { points, pose: *pose });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{se3_exp, Twist};
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_map() -> CellMap {
        CellMap::new(Vector3::repeat(1.0)).unwrap()
    }

    fn random_frame(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-extent..extent),
                    rng.random_range(-extent..extent),
                    rng.random_range(-extent / 4.0..extent / 4.0),
                )
            })
            .collect()
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> RigidTransform {
        se3_exp(&Twist::from_fn(|i, _| {
            if i < 3 {
                rng.random_range(-3.0..3.0)
            } else {
                rng.random_range(-0.3..0.3)
            }
        }))
    }

    /// From-scratch build: bin every world point, then batch statistics.
    fn batch_build(
        frames: &[(Vec<Point3>, RigidTransform)],
        s: &Vector3<f64>,
    ) -> alloc::collections::BTreeMap<GridIndex, Vec<Point3>> {
        let mut bins = alloc::collections::BTreeMap::new();
        for (pts, pose) in frames {
            for p in pts {
                let w = pose.apply(p);
                bins.entry(grid_index_of(&w, s).unwrap())
                    .or_insert_with(Vec::new)
                    .push(w);
            }
        }
        bins
    }

    fn assert_matches_batch(map: &CellMap, frames: &[(Vec<Point3>, RigidTransform)]) {
        let bins = batch_build(frames, map.cell_size());
        assert_eq!(bins.len(), map.len());
        for (index, pts) in &bins {
            let cell = map.get(index).expect("cell exists");
            assert_eq!(cell.count(), pts.len());
            let (mean, cov) = cell::batch_stats(pts);
            assert!((cell.mean() - mean).norm() <= 1e-9 * mean.norm().max(1.0));
            assert!((cell.covariance() - cov).norm() <= 1e-9 * cov.norm().max(1e-3));
        }
    }

    #[test]
    fn one_point_one_cell() {
        let mut map = unit_map();
        let touched = map
            .register_frame(&[Vector3::new(0.2, 0.2, 0.2)], &RigidTransform::identity())
            .unwrap();
        assert_eq!(touched, vec![GridIndex::new(0, 0, 0)]);
        assert_eq!(map.len(), 1);
        assert_eq!(map.cells()[0].count(), 1);
    }

    #[test]
    fn registering_twice_doubles_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frame = random_frame(&mut rng, 500, 5.0);
        let mut map = unit_map();
        map.register_frame(&frame, &RigidTransform::identity()).unwrap();
        let before: Vec<(usize, Point3)> = map.cells().iter().map(|c| (c.count(), *c.mean())).collect();
        map.register_frame(&frame, &RigidTransform::identity()).unwrap();
        for (cell, (count, mean)) in map.cells().iter().zip(&before) {
            assert_eq!(cell.count(), 2 * count);
            assert!((cell.mean() - mean).norm() < 1e-12);
        }
    }

    #[test]
    fn incremental_matches_batch_over_many_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut map = unit_map();
        let mut frames = Vec::new();
        for _ in 0..100 {
            let frame = random_frame(&mut rng, 200, 6.0);
            let pose = random_pose(&mut rng);
            map.register_frame(&frame, &pose).unwrap();
            frames.push((frame, pose));
        }
        assert_matches_batch(&map, &frames);
        for cell in map.cells() {
            for p in cell.points() {
                assert!(cell.contains(p));
            }
        }
    }

    #[test]
    fn invalid_pose_and_empty_frame_rejected() {
        let mut map = unit_map();
        let bad = RigidTransform::from_parts_unchecked(nalgebra::Matrix3::identity() * 2.0, Vector3::zeros());
        assert!(map.register_frame(&[Vector3::zeros()], &bad).is_err());
        assert!(map.register_frame(&[], &RigidTransform::identity()).is_err());
    }

    #[test]
    fn non_finite_points_are_counted() {
        let mut map = unit_map();
        let frame = [Vector3::new(f64::NAN, 0.0, 0.0), Vector3::new(0.5, 0.5, 0.5)];
        let touched = map.register_frame(&frame, &RigidTransform::identity()).unwrap();
        assert_eq!(touched.len(), 1);
        assert_eq!(map.skipped_points(), 1);
        assert_eq!(map.point_count(), 1);
    }

    #[test]
    fn hash_and_octree_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut map = CellMap::new(Vector3::new(0.5, 0.75, 1.0)).unwrap();
        for _ in 0..20 {
            map.register_frame(&random_frame(&mut rng, 300, 20.0), &random_pose(&mut rng))
                .unwrap();
        }
        let all = map
            .cells_in_box(&Vector3::repeat(-1e6), &Vector3::repeat(1e6))
            .unwrap();
        assert_eq!(all.len(), map.len());
        let s = *map.cell_size();
        for cell in map.cells() {
            assert!(core::ptr::eq(map.get(&cell.index()).unwrap(), cell));
            let lo = cell.center() - s / 2.0;
            let hi = cell.center() + s / 2.0 - Vector3::repeat(1e-9);
            let found = map.cells_in_box(&lo, &hi).unwrap();
            assert_eq!(found.len(), 1);
            assert_eq!(found[0].index(), cell.index());
        }
    }

    #[test]
    fn box_queries_match_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut map = unit_map();
        for _ in 0..10 {
            map.register_frame(&random_frame(&mut rng, 1000, 30.0), &random_pose(&mut rng))
                .unwrap();
        }
        assert!(map
            .cells_in_box(&Vector3::repeat(1000.0), &Vector3::repeat(1001.0))
            .unwrap()
            .is_empty());
        for _ in 0..1000 {
            let c = Vector3::new(
                rng.random_range(-35.0..35.0),
                rng.random_range(-35.0..35.0),
                rng.random_range(-10.0..10.0),
            );
            let h = Vector3::new(
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..10.0),
                rng.random_range(0.0..5.0),
            );
            let (lo, hi) = (c - h, c + h);
            let got: Vec<GridIndex> = map.cells_in_box(&lo, &hi).unwrap().iter().map(|c| c.index()).collect();
            let expected: Vec<GridIndex> = map
                .cells()
                .iter()
                .filter(|cell| (0..3).all(|k| lo[k] <= cell.center()[k] && cell.center()[k] <= hi[k]))
                .map(|c| c.index())
                .collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn inverted_box_rejected() {
        let map = unit_map();
        assert!(map
            .cells_in_box(&Vector3::new(1.0, 0.0, 0.0), &Vector3::new(0.0, 1.0, 1.0))
            .is_err());
    }

    #[test]
    fn rebuild_with_same_poses_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut map = unit_map();
        for _ in 0..10 {
            map.register_frame(&random_frame(&mut rng, 300, 8.0), &random_pose(&mut rng))
                .unwrap();
        }
        let original = map.clone();
        let poses: Vec<RigidTransform> = map.frame_log().iter().map(|f| f.pose).collect();
        map.rebuild(&poses).unwrap();
        assert_eq!(map.len(), original.len());
        for cell in original.cells() {
            let other = map.get(&cell.index()).unwrap();
            assert_eq!(other.count(), cell.count());
            assert!((other.mean() - cell.mean()).norm() <= 1e-9);
            assert!((other.covariance() - cell.covariance()).norm() <= 1e-9);
        }
    }

    #[test]
    fn rebuild_with_grid_aligned_shift_moves_every_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut map = unit_map();
        for _ in 0..5 {
            map.register_frame(&random_frame(&mut rng, 300, 8.0), &random_pose(&mut rng))
                .unwrap();
        }
        let original = map.clone();
        let shift = RigidTransform::from_translation(Vector3::new(10.0, 0.0, 0.0));
        let poses: Vec<RigidTransform> = map.frame_log().iter().map(|f| shift * f.pose).collect();
        map.rebuild(&poses).unwrap();
        assert_eq!(map.len(), original.len());
        for cell in original.cells() {
            let mut k = cell.index();
            k.ix += 10;
            let moved = map.get(&k).expect("shifted cell");
            assert_eq!(moved.center() - cell.center(), Vector3::new(10.0, 0.0, 0.0));
            assert_eq!(moved.count(), cell.count());
        }
    }

    #[test]
    fn rebuild_after_correction_matches_fresh_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut map = unit_map();
        let mut frames = Vec::new();
        for _ in 0..30 {
            let f = random_frame(&mut rng, 200, 8.0);
            let p = random_pose(&mut rng);
            map.register_frame(&f, &p).unwrap();
            frames.push((f, p));
        }
        let corrected: Vec<RigidTransform> = frames
            .iter()
            .map(|(_, p)| random_pose(&mut rng) * *p)
            .collect();
        map.rebuild(&corrected).unwrap();
        let expected: Vec<(Vec<Point3>, RigidTransform)> = frames
            .into_iter()
            .zip(&corrected)
            .map(|((f, _), c)| (f, *c))
            .collect();
        assert_matches_batch(&map, &expected);
        assert!(map.rebuild(&corrected[1..]).is_err());
    }
}
