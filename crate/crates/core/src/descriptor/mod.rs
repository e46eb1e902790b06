//! Cell shape classification, the keyframe canonical rotation, and the
//! rotation-invariant plane/line histograms built from them.

mod histogram;

use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};

pub use histogram::{
    angle_bin, build_histograms, build_histograms_with, count_histograms, direction_to_angles,
    Histogram2D, BINS, BIN_DEGREES, DEFAULT_BLUR_SIGMA,
};

use crate::cell_map::{Cell, CellMap, Feature, FeatureKind, GridIndex};
use crate::math::{eig_sym3, Point3, RigidTransform};
use crate::{Error, Result};

/// Minimum number of plane cells for a canonical rotation.
pub const MIN_PLANE_CELLS: usize = 3;

/// Eigenvalue magnitudes below this fraction of the largest one count as zero.
const DEGENERATE_EIGENVALUE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptorParams {
    pub min_points: usize,
    /// A cell is a plane when `lambda2 >= plane_ratio * lambda3`.
    pub plane_ratio: f64,
    /// A non-plane cell is a line when `lambda1 >= line_ratio * lambda2`.
    pub line_ratio: f64,
    /// Standard deviation of the histogram blur, in bins.
    pub blur_sigma: f64,
}

impl Default for DescriptorParams {
    fn default() -> Self {
        Self {
            min_points: 5,
            plane_ratio: 3.0,
            line_ratio: 3.0,
            blur_sigma: DEFAULT_BLUR_SIGMA,
        }
    }
}

/// Shape of a cell from the eigenvalues of its covariance.
///
/// The plane test runs first; a plane's direction is its normal (the
/// eigenvector of the smallest eigenvalue), a line's is the eigenvector of the
/// largest. Cells with fewer than `min_points` points or a (numerically)
/// zero covariance get no feature.
pub fn classify_cell(cell: &Cell, params: &DescriptorParams) -> Option<Feature> {
    if cell.count() < params.min_points.max(2) {
        return None;
    }
    let eig = eig_sym3(cell.covariance()).ok()?;
    let l1 = eig.eigenvalues[0].max(0.0);
    let l2 = eig.eigenvalues[1].max(0.0);
    let l3 = eig.eigenvalues[2].max(0.0);
    let floor = DEGENERATE_EIGENVALUE * l1;
    if l1 <= 0.0 {
        return None;
    }
    if l2 > floor && l2 >= params.plane_ratio * l3 {
        return Some(Feature {
            kind: FeatureKind::Plane,
            direction: eig.eigenvectors.column(2).into_owned(),
        });
    }
    if l1 >= params.line_ratio * l2 {
        return Some(Feature {
            kind: FeatureKind::Line,
            direction: eig.eigenvectors.column(0).into_owned(),
        });
    }
    None
}

/// Classifies every cell of `map` in place.
pub fn classify_map(map: &mut CellMap, params: &DescriptorParams) {
    for cell in map.cells_mut() {
        let feature = classify_cell(cell, params);
        cell.set_feature(feature);
    }
}

/// Rotation whose rows are the two dominant axes of the plane normals and
/// their cross product: `R = [v1, v2, v1 x v2]^T` for the eigenvectors of
/// `sum(d d^T)` sorted by eigenvalue.
pub fn canonical_rotation(plane_directions: &[Vector3<f64>]) -> Result<Matrix3<f64>> {
    if plane_directions.len() < MIN_PLANE_CELLS {
        return Err(Error::DegenerateKeyframe {
            plane_cells: plane_directions.len(),
        });
    }
    let scatter = plane_directions
        .iter()
        .fold(Matrix3::zeros(), |acc, d| acc + d * d.transpose());
    let eig = eig_sym3(&scatter)?;
    let v1: Vector3<f64> = eig.eigenvectors.column(0).into_owned();
    let v2: Vector3<f64> = eig.eigenvectors.column(1).into_owned();
    let v3 = v1.cross(&v2);
    Ok(Matrix3::from_rows(&[v1.transpose(), v2.transpose(), v3.transpose()]))
}

/// Mean and feature of a classified cell; the unit that alignment works on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureCell {
    pub mean: Point3,
    pub feature: Feature,
}

/// A group of consecutive frames described by its plane/line histograms.
#[derive(Debug, Clone)]
pub struct Keyframe {
    pub id: u64,
    /// First and last frame, inclusive.
    pub frame_range: (usize, usize),
    pub cells: Vec<GridIndex>,
    pub canonical_rotation: Matrix3<f64>,
    /// Set when there were too few plane cells and identity was used instead
    /// of a canonical rotation.
    pub weakly_invariant: bool,
    pub hist_plane: Histogram2D,
    pub hist_line: Histogram2D,
    /// Odometry pose of the first frame.
    pub reference_pose: RigidTransform,
    pub features: Vec<FeatureCell>,
}

impl Keyframe {
    /// Classifies `cells`, computes the canonical rotation (identity when
    /// there are fewer than three plane cells) and both histograms.
    pub fn describe<'a>(
        id: u64,
        frame_range: (usize, usize),
        reference_pose: RigidTransform,
        cells: impl IntoIterator<Item = &'a Cell>,
        params: &DescriptorParams,
    ) -> Self {
        let mut indices = Vec::new();
        let mut features = Vec::new();
        for cell in cells {
            indices.push(cell.index());
            if let Some(feature) = classify_cell(cell, params) {
                features.push(FeatureCell {
                    mean: *cell.mean(),
                    feature,
                });
            }
        }
        Self::from_features_with(id, frame_range, reference_pose, indices, features, params.blur_sigma)
    }

    /// Keyframe from already classified feature cells.
    pub fn from_features(
        id: u64,
        frame_range: (usize, usize),
        reference_pose: RigidTransform,
        cells: Vec<GridIndex>,
        features: Vec<FeatureCell>,
    ) -> Self {
        Self::from_features_with(id, frame_range, reference_pose, cells, features, DEFAULT_BLUR_SIGMA)
    }

    fn from_features_with(
        id: u64,
        frame_range: (usize, usize),
        reference_pose: RigidTransform,
        cells: Vec<GridIndex>,
        features: Vec<FeatureCell>,
        blur_sigma: f64,
    ) -> Self {
        let normals: Vec<Vector3<f64>> = features
            .iter()
            .filter(|f| f.feature.kind == FeatureKind::Plane)
            .map(|f| f.feature.direction)
            .collect();
        let (canonical_rotation, weakly_invariant) = match canonical_rotation(&normals) {
            Ok(r) => (r, false),
            Err(_) => (Matrix3::identity(), true),
        };
        let (hist_plane, hist_line) =
            build_histograms_with(features.iter().map(|f| &f.feature), &canonical_rotation, blur_sigma);
        Self {
            id,
            frame_range,
            cells,
            canonical_rotation,
            weakly_invariant,
            hist_plane,
            hist_line,
            reference_pose,
            features,
        }
    }

    pub fn plane_cell_count(&self) -> usize {
        self.features
            .iter()
            .filter(|f| f.feature.kind == FeatureKind::Plane)
            .count()
    }

    /// Mean of the feature-cell means; zero without features.
    pub fn feature_centroid(&self) -> Point3 {
        if self.features.is_empty() {
            return Vector3::zeros();
        }
        self.features.iter().fold(Vector3::zeros(), |acc, f| acc + f.mean) / self.features.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell_map::grid_index_of;
    use crate::math::{so3_exp, Point3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cell_from(points: &[Point3]) -> Cell {
        let s = Vector3::repeat(10.0);
        let mut cell = Cell::new(grid_index_of(&points[0], &s).unwrap(), s);
        for p in points {
            cell.update_stats(*p).unwrap();
        }
        cell
    }

    fn parallel(a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
        (a.dot(b).abs() - 1.0).abs() < 1e-9
    }

    #[test]
    fn points_on_a_plane() {
        let pts: Vec<Point3> = (0..10)
            .map(|i| Vector3::new(1.0 + 0.7 * (i % 4) as f64, 1.0 + 0.9 * (i / 4) as f64, 2.0))
            .collect();
        let f = classify_cell(&cell_from(&pts), &DescriptorParams::default()).unwrap();
        assert_eq!(f.kind, FeatureKind::Plane);
        assert!(parallel(&f.direction, &Vector3::z()));
    }

    #[test]
    fn collinear_points() {
        let d = Vector3::new(1.0, 1.0, 1.0).normalize();
        let pts: Vec<Point3> = (0..10).map(|i| Vector3::repeat(1.0) + d * (0.5 * i as f64)).collect();
        let f = classify_cell(&cell_from(&pts), &DescriptorParams::default()).unwrap();
        assert_eq!(f.kind, FeatureKind::Line);
        assert!(parallel(&f.direction, &d));
    }

    #[test]
    fn isotropic_cloud_has_no_feature() {
        // Ten points whose covariance has eigenvalues (1, 0.9, 0.8): scaled
        // axis pairs +-a e_k around a center c, with 2 a^2 / 9 = lambda_k,
        // plus two copies of c itself.
        let c = Vector3::repeat(5.0);
        let mut pts = Vec::new();
        for (k, lambda) in [1.0f64, 0.9, 0.8].iter().enumerate() {
            let a = (lambda * 9.0 / 2.0).sqrt();
            let mut e = Vector3::zeros();
            e[k] = a;
            pts.push(c + e);
            pts.push(c - e);
        }
        pts.push(c);
        pts.push(c);
        pts.push(c);
        pts.push(c);
        let cell = cell_from(&pts);
        let eig = eig_sym3(cell.covariance()).unwrap();
        assert!((eig.eigenvalues - Vector3::new(1.0, 0.9, 0.8)).abs().max() < 1e-12);
        // 0.9 < 3 * 0.8 and 1.0 < 3 * 0.9
        assert_eq!(classify_cell(&cell, &DescriptorParams::default()), None);
    }

    #[test]
    fn too_few_points_or_identical_points() {
        let pts = [Vector3::new(1.0, 1.0, 1.0), Vector3::new(2.0, 1.0, 1.0), Vector3::new(1.0, 2.0, 1.0)];
        assert_eq!(classify_cell(&cell_from(&pts), &DescriptorParams::default()), None);
        let same = [Vector3::repeat(1.0); 6];
        assert_eq!(classify_cell(&cell_from(&same), &DescriptorParams::default()), None);
    }

    #[test]
    fn canonical_rotation_of_axis_aligned_set() {
        let dirs = [Vector3::x(), Vector3::x(), Vector3::x(), Vector3::y(), Vector3::y()];
        let r = canonical_rotation(&dirs).unwrap();
        assert!((r * Vector3::x() - Vector3::x()).norm() < 1e-12);
        assert!((r * Vector3::y() - Vector3::y()).norm() < 1e-12);
        assert!(canonical_rotation(&dirs[..2]).is_err());
    }

    #[test]
    fn canonical_rotation_is_in_so3() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let n = rng.random_range(3..40);
            let dirs: Vec<Vector3<f64>> = (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )
                    .normalize()
                })
                .collect();
            let r = canonical_rotation(&dirs).unwrap();
            assert!((r * r.transpose() - Matrix3::identity()).abs().max() < 1e-9);
            assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }

    /// Members of the sign ambiguity of the canonical rotation: flipping the
    /// sign of v1 and/or v2 (the third row follows from the cross product).
    fn sign_group() -> [Matrix3<f64>; 4] {
        let d = |a: f64, b: f64, c: f64| Matrix3::from_diagonal(&Vector3::new(a, b, c));
        [d(1.0, 1.0, 1.0), d(-1.0, 1.0, -1.0), d(1.0, -1.0, -1.0), d(-1.0, -1.0, 1.0)]
    }

    #[test]
    fn canonical_rotation_is_equivariant_up_to_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..200 {
            // anisotropic set so that the eigenvalues are well separated
            let base = [Vector3::x(), Vector3::y(), Vector3::z()];
            let weights = [12usize, 7, 3];
            let mut dirs = Vec::new();
            for (b, &w) in base.iter().zip(&weights) {
                for _ in 0..w {
                    let noise = Vector3::new(
                        rng.random_range(-0.05..0.05),
                        rng.random_range(-0.05..0.05),
                        rng.random_range(-0.05..0.05),
                    );
                    let d = (b + noise).normalize();
                    dirs.push(if rng.random_bool(0.5) { d } else { -d });
                }
            }
            let axis = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalize();
            let q = so3_exp(&(axis * rng.random_range(0.0..3.1)));
            let rotated: Vec<Vector3<f64>> = dirs.iter().map(|d| q * d).collect();
            let r = canonical_rotation(&dirs).unwrap();
            let rq = canonical_rotation(&rotated).unwrap() * q;
            assert!(
                sign_group().iter().any(|s| (s * r - rq).abs().max() < 1e-6),
                "no sign-group member matches"
            );
        }
    }

    #[test]
    fn keyframe_without_planes_is_weak() {
        let d = Vector3::new(0.0, 0.0, 1.0);
        let pts: Vec<Point3> = (0..10).map(|i| Vector3::repeat(1.0) + d * (0.5 * i as f64)).collect();
        let cell = cell_from(&pts);
        let kf = Keyframe::describe(0, (0, 9), RigidTransform::identity(), [&cell], &DescriptorParams::default());
        assert!(kf.weakly_invariant);
        assert_eq!(kf.canonical_rotation, Matrix3::identity());
        assert!((kf.hist_line.total() - 1.0).abs() < 1e-12);
        assert_eq!(kf.hist_plane.total(), 0.0);
    }
}
