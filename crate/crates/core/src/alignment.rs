//! Keyframe-to-map registration on cell features.
//!
//! Each source feature cell is paired with the nearest-residual target cell
//! of the same shape inside a search box, and the pose is refined by damped
//! Gauss-Newton on point-to-plane and point-to-line distances under a Huber
//! loss. Correspondences are searched again at every trial pose, so the
//! objective is a function of the pose alone and a step is kept only when it
//! lowers that objective.

use alloc::vec::Vec;

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Vector3, Vector6};

use crate::cell_map::{CellMap, FeatureKind, Octree};
use crate::descriptor::{FeatureCell, Keyframe};
use crate::math::{skew, Point3, RigidTransform};
use crate::{Error, Result};

/// Fewest source feature cells an alignment will run on.
pub const MIN_SOURCE_FEATURES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignParams {
    /// Half-width of the correspondence search box, meters.
    pub search_radius: f64,
    pub huber_delta: f64,
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub accept_distance: f64,
    /// Largest angle between paired feature directions, radians.
    pub max_direction_angle: f64,
    /// Steps shorter than this end the iteration.
    pub update_tolerance: f64,
}

impl Default for AlignParams {
    fn default() -> Self {
        Self::for_cell_size(&Vector3::repeat(1.0))
    }
}

impl AlignParams {
    pub fn for_cell_size(cell_size: &Vector3<f64>) -> Self {
        Self {
            search_radius: 2.0 * cell_size.max(),
            huber_delta: 0.5,
            max_iterations: 50,
            initial_damping: 1e-4,
            accept_distance: 0.1,
            max_direction_angle: 30f64.to_radians(),
            update_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// Maps source (query keyframe) coordinates into target coordinates.
    pub relative_pose: RigidTransform,
    /// Mean point-to-feature distance over matched source cells, meters.
    pub mean_residual: f64,
    pub matched: usize,
    pub iterations: usize,
    pub converged: bool,
    pub accepted: bool,
    pub final_cost: f64,
    /// Index of the initial guess this result came from.
    pub guess_index: usize,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub source: FeatureCell,
    pub target: FeatureCell,
    /// Point-to-plane or point-to-line distance, meters.
    pub residual: f64,
}

/// Target feature cells indexed by mean for box queries.
#[derive(Debug, Clone)]
pub struct AlignmentTarget {
    features: Vec<FeatureCell>,
    octree: Octree,
}

impl AlignmentTarget {
    pub fn new(features: Vec<FeatureCell>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::invalid("alignment target has no feature cells"));
        }
        let mut octree = Octree::new(8.0);
        for (i, f) in features.iter().enumerate() {
            octree.insert(f.mean, i);
        }
        Ok(Self { features, octree })
    }

    /// Every classified cell of `map`.
    pub fn from_cell_map(map: &CellMap) -> Result<Self> {
        Self::new(
            map.cells()
                .iter()
                .filter_map(|c| {
                    c.feature().map(|f| FeatureCell {
                        mean: *c.mean(),
                        feature: *f,
                    })
                })
                .collect(),
        )
    }

    pub fn features(&self) -> &[FeatureCell] {
        &self.features
    }
}

/// Residual of `source` moved by `pose` against `target`, with the Jacobian
/// for a right perturbation `pose * exp(xi)`, `xi = [rho; phi]`. Plane
/// residuals use only the first row.
pub fn feature_residual(
    source: &FeatureCell,
    target: &FeatureCell,
    pose: &RigidTransform,
) -> (Vector3<f64>, Matrix3x6<f64>) {
    let p = pose.apply(&source.mean);
    let e = p - target.mean;
    // d p / d xi = [R, -R [mu]x]
    let mut dp = Matrix3x6::zeros();
    dp.fixed_view_mut::<3, 3>(0, 0).copy_from(&pose.rotation);
    dp.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-pose.rotation * skew(&source.mean)));
    let d = target.feature.direction;
    match target.feature.kind {
        FeatureKind::Plane => {
            let mut j = Matrix3x6::zeros();
            j.row_mut(0).copy_from(&(d.transpose() * dp));
            (Vector3::new(d.dot(&e), 0.0, 0.0), j)
        }
        FeatureKind::Line => {
            let proj = Matrix3::identity() - d * d.transpose();
            (proj * e, proj * dp)
        }
    }
}

fn huber(s: f64, delta: f64) -> f64 {
    if s <= delta * delta {
        s
    } else {
        2.0 * delta * s.sqrt() - delta * delta
    }
}

struct Problem<'a> {
    source: &'a [FeatureCell],
    target: &'a AlignmentTarget,
    params: &'a AlignParams,
    min_cos: f64,
}

struct Evaluation {
    cost: f64,
    /// (source index, target index, residual norm) of matched cells.
    pairs: Vec<(usize, usize, f64)>,
}

impl Problem<'_> {
    fn best_match(&self, s: &FeatureCell, pose: &RigidTransform) -> Option<(usize, f64)> {
        let p = pose.apply(&s.mean);
        let dir = pose.rotation * s.feature.direction;
        let r = Vector3::repeat(self.params.search_radius);
        let mut best: Option<(usize, f64)> = None;
        for t in self.target.octree.query_box(&(p - r), &(p + r)) {
            let tf = &self.target.features[t];
            if tf.feature.kind != s.feature.kind || dir.dot(&tf.feature.direction).abs() < self.min_cos {
                continue;
            }
            let dist = feature_residual(s, tf, pose).0.norm();
            if dist < self.params.search_radius && best.is_none_or(|(_, b)| dist < b) {
                best = Some((t, dist));
            }
        }
        best
    }

    fn evaluate(&self, pose: &RigidTransform) -> Evaluation {
        let delta = self.params.huber_delta;
        let cap = huber(self.params.search_radius.powi(2), delta);
        let mut cost = 0.0;
        let mut pairs = Vec::new();
        for (i, s) in self.source.iter().enumerate() {
            match self.best_match(s, pose) {
                Some((t, dist)) => {
                    cost += huber(dist * dist, delta);
                    pairs.push((i, t, dist));
                }
                None => cost += cap,
            }
        }
        Evaluation { cost, pairs }
    }

    fn normal_equations(&self, pose: &RigidTransform, pairs: &[(usize, usize, f64)]) -> (Matrix6<f64>, Vector6<f64>) {
        let delta = self.params.huber_delta;
        let mut h = Matrix6::zeros();
        let mut g = Vector6::zeros();
        for &(i, t, dist) in pairs {
            let (r, j) = feature_residual(&self.source[i], &self.target.features[t], pose);
            let w = if dist <= delta { 1.0 } else { delta / dist };
            h += j.transpose() * j * w;
            g += j.transpose() * r * w;
        }
        (h, g)
    }

    fn run(&self, guess: &RigidTransform, guess_index: usize) -> Option<AlignmentResult> {
        let mut pose = *guess;
        let mut eval = self.evaluate(&pose);
        if eval.pairs.is_empty() {
            return None;
        }
        let mut history = alloc::vec![eval.cost];
        let mut lambda = self.params.initial_damping;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.params.max_iterations {
            iterations += 1;
            let (h, g) = self.normal_equations(&pose, &eval.pairs);
            let step = (h + Matrix6::identity() * lambda)
                .cholesky()
                .map(|c| -c.solve(&g));
            let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) else {
                lambda *= 10.0;
                continue;
            };
            let trial = pose * RigidTransform::exp(&step);
            let trial_eval = self.evaluate(&trial);
            if trial_eval.cost < eval.cost && !trial_eval.pairs.is_empty() {
                pose = trial;
                eval = trial_eval;
                history.push(eval.cost);
                lambda = (lambda * 0.1).max(1e-12);
                if step.norm() < self.params.update_tolerance {
                    converged = true;
                    break;
                }
            } else {
                lambda *= 10.0;
                if step.norm() < self.params.update_tolerance || lambda > 1e10 {
                    // no descent left at this pose
                    converged = true;
                    break;
                }
            }
        }
        if iterations >= self.params.max_iterations {
            converged = true;
        }
        let mean_residual = eval.pairs.iter().map(|p| p.2).sum::<f64>() / eval.pairs.len() as f64;
        Some(AlignmentResult {
            relative_pose: pose.orthonormalized(),
            mean_residual,
            matched: eval.pairs.len(),
            iterations,
            converged,
            accepted: converged && mean_residual < self.params.accept_distance,
            final_cost: eval.cost,
            guess_index,
            cost_history: history,
        })
    }
}

/// Registers `source` onto `target` from each initial guess and keeps the
/// lowest final cost (the earliest guess on ties).
pub fn align(
    source: &[FeatureCell],
    target: &AlignmentTarget,
    initial_guesses: &[RigidTransform],
    params: &AlignParams,
) -> Result<AlignmentResult> {
    if source.len() < MIN_SOURCE_FEATURES {
        return Err(Error::invalid("alignment source needs at least 10 feature cells"));
    }
    if initial_guesses.is_empty() {
        return Err(Error::invalid("no initial guesses"));
    }
    for g in initial_guesses {
        g.validate()?;
    }
    let problem = Problem {
        source,
        target,
        params,
        min_cos: params.max_direction_angle.cos(),
    };
    let mut best: Option<AlignmentResult> = None;
    for (i, guess) in initial_guesses.iter().enumerate() {
        if let Some(r) = problem.run(guess, i) {
            if best.as_ref().is_none_or(|b| r.final_cost < b.final_cost) {
                best = Some(r);
            }
        }
    }
    best.ok_or(Error::AlignmentFailed)
}

/// The pairs `align` would use at `pose`, for inspection.
pub fn correspondences(
    source: &[FeatureCell],
    target: &AlignmentTarget,
    pose: &RigidTransform,
    params: &AlignParams,
) -> Vec<Correspondence> {
    let problem = Problem {
        source,
        target,
        params,
        min_cos: params.max_direction_angle.cos(),
    };
    problem
        .evaluate(pose)
        .pairs
        .into_iter()
        .map(|(i, t, residual)| Correspondence {
            source: source[i],
            target: target.features[t],
            residual,
        })
        .collect()
}

/// Candidate starting poses from the keyframes' canonical rotations.
///
/// The canonical rotation is only defined up to flipping its first two axes,
/// so each of the four sign choices gives a rotation `R_t^T S R_s`; the
/// translation then lines up the feature centroids. Identity always comes
/// first. If either keyframe fell back to the identity rotation only identity
/// and the centroid shift are returned.
pub fn initial_guesses_from_histograms(source: &Keyframe, target: &Keyframe) -> Vec<RigidTransform> {
    let cs = source.feature_centroid();
    let ct = target.feature_centroid();
    let mut guesses = alloc::vec![RigidTransform::identity()];
    if source.weakly_invariant || target.weakly_invariant {
        guesses.push(RigidTransform::from_translation(ct - cs));
        return guesses;
    }
    for s in SIGN_GROUP {
        let signs = Matrix3::from_diagonal(&Vector3::from(s));
        let r = target.canonical_rotation.transpose() * signs * source.canonical_rotation;
        let rt = RigidTransform::from_parts_unchecked(r, ct - r * cs).orthonormalized();
        guesses.push(rt);
    }
    guesses
}

const SIGN_GROUP: [[f64; 3]; 4] = [
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, -1.0],
    [1.0, -1.0, -1.0],
    [-1.0, -1.0, 1.0],
];

/// Moves feature cells by `pose`.
pub fn transform_features(features: &[FeatureCell], pose: &RigidTransform) -> Vec<FeatureCell> {
    features
        .iter()
        .map(|f| FeatureCell {
            mean: pose.apply(&f.mean),
            feature: crate::cell_map::Feature {
                kind: f.feature.kind,
                direction: pose.rotation * f.feature.direction,
            },
        })
        .collect()
}

/// Points on a rigid world, useful for building a source or target map.
pub fn transform_points(points: &[Point3], pose: &RigidTransform) -> Vec<Point3> {
    points.iter().map(|p| pose.apply(p)).collect()
}
