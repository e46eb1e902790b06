use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};

use crate::math::{is_finite3, Point3};
use crate::{Error, Result};

/// Integer coordinates of a cell in the fixed partition of space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct GridIndex {
    pub ix: i64,
    pub iy: i64,
    pub iz: i64,
}

impl GridIndex {
    pub const fn new(ix: i64, iy: i64, iz: i64) -> Self {
        Self { ix, iy, iz }
    }

    pub fn center(&self, cell_size: &Vector3<f64>) -> Point3 {
        Vector3::new(
            (self.ix as f64 + 0.5) * cell_size.x,
            (self.iy as f64 + 0.5) * cell_size.y,
            (self.iz as f64 + 0.5) * cell_size.z,
        )
    }
}

fn axis_index(p: f64, s: f64) -> i64 {
    let mut k = (p / s).floor() as i64;
    // the quotient can round across an integer; settle on the product test
    if p < k as f64 * s {
        k -= 1;
    } else if p >= (k + 1) as f64 * s {
        k += 1;
    }
    k
}

/// Floor partition: index `k` satisfies `k*S <= p < (k+1)*S` on every axis.
pub fn grid_index_of(p: &Point3, cell_size: &Vector3<f64>) -> Result<GridIndex> {
    if !is_finite3(p) {
        return Err(Error::invalid("point has non-finite coordinates"));
    }
    if !cell_size.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(Error::invalid("cell size must be positive"));
    }
    Ok(GridIndex::new(
        axis_index(p.x, cell_size.x),
        axis_index(p.y, cell_size.y),
        axis_index(p.z, cell_size.z),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Plane,
    Line,
}

/// Shape label of a cell together with its unit feature direction: the plane
/// normal for planes, the line direction for lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub kind: FeatureKind,
    pub direction: Vector3<f64>,
}

/// A fixed cube of space with its raw points and running mean/covariance.
#[derive(Debug, Clone)]
pub struct Cell {
    index: GridIndex,
    cell_size: Vector3<f64>,
    center: Point3,
    mean: Point3,
    covariance: Matrix3<f64>,
    points: Vec<Point3>,
    pub(crate) feature: Option<Feature>,
}

impl Cell {
    pub fn new(index: GridIndex, cell_size: Vector3<f64>) -> Self {
        Self {
            index,
            cell_size,
            center: index.center(&cell_size),
            mean: Vector3::zeros(),
            covariance: Matrix3::zeros(),
            points: Vec::new(),
            feature: None,
        }
    }

    pub fn index(&self) -> GridIndex {
        self.index
    }

    pub fn center(&self) -> &Point3 {
        &self.center
    }

    pub fn cell_size(&self) -> &Vector3<f64> {
        &self.cell_size
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn mean(&self) -> &Point3 {
        &self.mean
    }

    /// Unbiased sample covariance; the zero matrix while `count() < 2`.
    pub fn covariance(&self) -> &Matrix3<f64> {
        &self.covariance
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn feature(&self) -> Option<&Feature> {
        self.feature.as_ref()
    }

    pub fn set_feature(&mut self, feature: Option<Feature>) {
        self.feature = feature;
    }

    pub fn contains(&self, p: &Point3) -> bool {
        grid_index_of(p, &self.cell_size).is_ok_and(|k| k == self.index)
    }

    /// Adds `p` and updates mean and covariance recursively.
    ///
    /// With `N` points already present, mean `m'` and covariance `C'`:
    /// `m = (N m' + p) / (N + 1)` and
    /// `C = [(N-1) C' + (p-m')(p-m')^T + (N+1)(m'-m)(m'-m)^T + 2(m'-m)(p-m')^T] / N`.
    /// Because `m' - m = -(p - m') / (N + 1)` the bracket collapses to
    /// `(N-1) C' + N/(N+1) (p-m')(p-m')^T`, which is what is evaluated.
    pub fn update_stats(&mut self, p: Point3) -> Result<()> {
        if !self.contains(&p) {
            return Err(Error::ContainmentViolation {
                x: p.x,
                y: p.y,
                z: p.z,
            });
        }
        let n = self.points.len() as f64;
        let delta = p - self.mean;
        self.mean += delta / (n + 1.0);
        if n >= 1.0 {
            let outer = delta * delta.transpose();
            let mut cov = (self.covariance * (n - 1.0) + outer * (n / (n + 1.0))) / n;
            // keep it exactly symmetric
            for i in 0..3 {
                for j in (i + 1)..3 {
                    cov[(j, i)] = cov[(i, j)];
                }
            }
            self.covariance = cov;
        }
        self.points.push(p);
        Ok(())
    }

    /// Mean and covariance recomputed from the stored points in two passes.
    pub fn batch_stats(&self) -> (Point3, Matrix3<f64>) {
        batch_stats(&self.points)
    }
}

pub(crate) fn batch_stats(points: &[Point3]) -> (Point3, Matrix3<f64>) {
    let n = points.len();
    if n == 0 {
        return (Vector3::zeros(), Matrix3::zeros());
    }
    let mean = points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n as f64;
    if n < 2 {
        return (mean, Matrix3::zeros());
    }
    let scatter = points
        .iter()
        .fold(Matrix3::zeros(), |acc, p| acc + (p - mean) * (p - mean).transpose());
    (mean, scatter / (n as f64 - 1.0))
}
