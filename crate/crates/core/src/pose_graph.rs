//! Keyframe pose graph: odometry and loop edges, damped Gauss-Newton over
//! SE(3), and propagation of the correction back to the per-frame poses.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix6};

use crate::alignment::AlignmentResult;
use crate::cell_map::CellMap;
use crate::math::{adjoint, se3_right_jacobian_inv, RigidTransform, Twist};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Odometry,
    Loop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseNode {
    pub keyframe_id: u64,
    pub pose: RigidTransform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseEdge {
    pub from_id: u64,
    pub to_id: u64,
    /// Expected `pose_from^-1 * pose_to`.
    pub measurement: RigidTransform,
    /// Weight on the twist residual `[rho; phi]`.
    pub information: Matrix6<f64>,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeParams {
    pub max_iterations: usize,
    /// Stop once an accepted step lowers the cost by less than this.
    pub tolerance: f64,
    pub initial_damping: f64,
}

impl Default for OptimizeParams {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            tolerance: 1e-12,
            initial_damping: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub converged: bool,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

/// Residual `log(Z^-1 Xi^-1 Xj)` of an edge between poses `xi` and `xj`.
pub fn edge_residual(z: &RigidTransform, xi: &RigidTransform, xj: &RigidTransform) -> Result<Twist> {
    (z.inverse() * xi.inverse() * *xj).log()
}

/// Jacobians of [`edge_residual`] with respect to right perturbations
/// `Xi exp(di)` and `Xj exp(dj)`.
pub fn edge_jacobians(
    z: &RigidTransform,
    xi: &RigidTransform,
    xj: &RigidTransform,
) -> Result<(Twist, Matrix6<f64>, Matrix6<f64>)> {
    let e = edge_residual(z, xi, xj)?;
    let jr_inv = se3_right_jacobian_inv(&e);
    let jj = jr_inv;
    let ji = -jr_inv * adjoint(&(xj.inverse() * *xi));
    Ok((e, ji, jj))
}

/// Information for a loop edge: the translation block grows as the alignment
/// residual shrinks below the acceptance distance.
pub fn loop_information(mean_residual: f64, accept_distance: f64) -> Matrix6<f64> {
    let w = (accept_distance / mean_residual.max(1e-3)).powi(2);
    let mut info = Matrix6::identity();
    for k in 0..3 {
        info[(k, k)] = w;
    }
    info
}

#[derive(Debug, Clone, Default)]
pub struct PoseGraph {
    nodes: Vec<PoseNode>,
    index: BTreeMap<u64, usize>,
    edges: Vec<PoseEdge>,
}

impl PoseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// The first node added is held fixed during optimization.
    pub fn add_node(&mut self, keyframe_id: u64, pose: RigidTransform) -> Result<()> {
        pose.validate()?;
        if self.index.contains_key(&keyframe_id) {
            return Err(Error::invalid("duplicate pose-graph node"));
        }
        self.index.insert(keyframe_id, self.nodes.len());
        self.nodes.push(PoseNode { keyframe_id, pose });
        Ok(())
    }

    pub fn nodes(&self) -> &[PoseNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[PoseEdge] {
        &self.edges
    }

    pub fn node(&self, keyframe_id: u64) -> Option<&PoseNode> {
        self.index.get(&keyframe_id).map(|&i| &self.nodes[i])
    }

    pub fn poses(&self) -> Vec<RigidTransform> {
        self.nodes.iter().map(|n| n.pose).collect()
    }

    pub fn set_pose(&mut self, keyframe_id: u64, pose: RigidTransform) -> Result<()> {
        pose.validate()?;
        let i = *self
            .index
            .get(&keyframe_id)
            .ok_or_else(|| Error::invalid("unknown pose-graph node"))?;
        self.nodes[i].pose = pose;
        Ok(())
    }

    pub fn add_edge(&mut self, edge: PoseEdge) -> Result<()> {
        if edge.from_id == edge.to_id {
            return Err(Error::invalid("edge endpoints must differ"));
        }
        if !self.index.contains_key(&edge.from_id) || !self.index.contains_key(&edge.to_id) {
            return Err(Error::invalid("edge refers to an unknown node"));
        }
        edge.measurement.validate()?;
        let info = &edge.information;
        if (info - info.transpose()).abs().max() > 1e-9 || info.cholesky().is_none() {
            return Err(Error::invalid("edge information must be symmetric positive-definite"));
        }
        self.edges.push(edge);
        Ok(())
    }

    /// Odometry edge between consecutive keyframes, measured from their raw
    /// odometry poses.
    pub fn add_odometry_edge(
        &mut self,
        prev_id: u64,
        odom_prev: &RigidTransform,
        next_id: u64,
        odom_next: &RigidTransform,
    ) -> Result<()> {
        if prev_id.checked_add(1) != Some(next_id) {
            return Err(Error::invalid("odometry edges join consecutive keyframes"));
        }
        self.add_edge(PoseEdge {
            from_id: prev_id,
            to_id: next_id,
            measurement: odom_prev.inverse() * *odom_next,
            information: Matrix6::identity(),
            kind: EdgeKind::Odometry,
        })
    }

    /// Loop edge from `match_id` to `query_id` measured by an accepted
    /// alignment of the query keyframe onto the matched one.
    pub fn add_loop_edge(
        &mut self,
        result: &AlignmentResult,
        query_id: u64,
        match_id: u64,
        accept_distance: f64,
    ) -> Result<()> {
        if !result.accepted {
            return Err(Error::Precondition("loop edge needs an accepted alignment".into()));
        }
        self.add_edge(PoseEdge {
            from_id: match_id,
            to_id: query_id,
            measurement: result.relative_pose,
            information: loop_information(result.mean_residual, accept_distance),
            kind: EdgeKind::Loop,
        })
    }

    /// Sum of `e^T Omega e` over all edges.
    pub fn cost(&self) -> Result<f64> {
        cost_of(&self.nodes, &self.index, &self.edges)
    }

    fn is_connected(&self) -> bool {
        let n = self.nodes.len();
        let mut adjacency = alloc::vec![Vec::new(); n];
        for e in &self.edges {
            let (a, b) = (self.index[&e.from_id], self.index[&e.to_id]);
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut seen = alloc::vec![false; n];
        let mut stack = alloc::vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Levenberg-Marquardt over all poses but the first. A step is kept only
    /// when it lowers the cost.
    pub fn optimize(&mut self, params: &OptimizeParams) -> Result<OptimizationReport> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("pose graph has no nodes"));
        }
        if !self.is_connected() {
            return Err(Error::invalid("pose graph is disconnected"));
        }
        let initial_cost = self.cost()?;
        let mut report = OptimizationReport {
            iterations: 0,
            initial_cost,
            final_cost: initial_cost,
            converged: false,
            cost_history: alloc::vec![initial_cost],
        };
        let free = self.nodes.len() - 1;
        if free == 0 || self.edges.is_empty() {
            report.converged = true;
            return Ok(report);
        }
        let dim = 6 * free;
        let mut lambda = params.initial_damping;
        let mut cost = initial_cost;
        while report.iterations < params.max_iterations {
            report.iterations += 1;
            let (h, g) = self.normal_equations(dim)?;
            let mut damped = h;
            for k in 0..dim {
                damped[(k, k)] += lambda;
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = -chol.solve(&g);
            let mut trial = self.nodes.clone();
            for (k, node) in trial.iter_mut().enumerate().skip(1) {
                let xi = Twist::from_iterator(step.rows(6 * (k - 1), 6).iter().copied());
                node.pose = (node.pose * RigidTransform::exp(&xi)).orthonormalized();
            }
            let trial_cost = cost_of(&trial, &self.index, &self.edges)?;
            if trial_cost < cost {
                let decrease = cost - trial_cost;
                self.nodes = trial;
                cost = trial_cost;
                report.cost_history.push(cost);
                lambda = (lambda * 0.1).max(1e-15);
                if decrease < params.tolerance {
                    report.converged = true;
                    break;
                }
            } else {
                lambda *= 10.0;
                if lambda > 1e12 {
                    report.converged = true;
                    break;
                }
            }
        }
        report.final_cost = cost;
        Ok(report)
    }

    fn normal_equations(&self, dim: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let mut h = DMatrix::zeros(dim, dim);
        let mut g = DVector::zeros(dim);
        for e in &self.edges {
            let (a, b) = (self.index[&e.from_id], self.index[&e.to_id]);
            let (r, ja, jb) = edge_jacobians(&e.measurement, &self.nodes[a].pose, &self.nodes[b].pose)?;
            let omega = &e.information;
            let blocks = [(a, ja), (b, jb)];
            for (i, ji) in &blocks {
                if *i == 0 {
                    continue;
                }
                let oi = 6 * (i - 1);
                let gi = ji.transpose() * omega * r;
                for k in 0..6 {
                    g[oi + k] += gi[k];
                }
                for (j, jj) in &blocks {
                    if *j == 0 {
                        continue;
                    }
                    let oj = 6 * (j - 1);
                    let hij = ji.transpose() * omega * jj;
                    for r in 0..6 {
                        for c in 0..6 {
                            h[(oi + r, oj + c)] += hij[(r, c)];
                        }
                    }
                }
            }
        }
        Ok((h, g))
    }
}

fn cost_of(nodes: &[PoseNode], index: &BTreeMap<u64, usize>, edges: &[PoseEdge]) -> Result<f64> {
    let mut cost = 0.0;
    for e in edges {
        let r = edge_residual(&e.measurement, &nodes[index[&e.from_id]].pose, &nodes[index[&e.to_id]].pose)?;
        cost += (r.transpose() * e.information * r)[0];
    }
    Ok(cost)
}

/// Correction `after * before^-1` of one keyframe; exactly identity when the
/// pose did not move.
pub fn keyframe_correction(before: &RigidTransform, after: &RigidTransform) -> RigidTransform {
    if before == after {
        RigidTransform::identity()
    } else {
        (*after * before.inverse()).orthonormalized()
    }
}

/// Carries keyframe corrections to every logged frame of `map` and rebuilds
/// it. `frame_ranges[k]` is the inclusive frame span of keyframe `k`, whose
/// pose moved from `before[k]` to `after[k]`. Frames after the last keyframe
/// take its correction; frames before the first take the first one's.
pub fn apply_correction(
    map: &mut CellMap,
    frame_ranges: &[(usize, usize)],
    before: &[RigidTransform],
    after: &[RigidTransform],
) -> Result<Vec<RigidTransform>> {
    if frame_ranges.len() != before.len() || before.len() != after.len() {
        return Err(Error::invalid("one frame range and pose pair per keyframe is required"));
    }
    let corrections: Vec<RigidTransform> = before
        .iter()
        .zip(after)
        .map(|(b, a)| keyframe_correction(b, a))
        .collect();
    let corrected = correct_frames(
        &map.frame_log().iter().map(|f| f.pose).collect::<Vec<_>>(),
        frame_ranges,
        &corrections,
    );
    map.rebuild(&corrected)?;
    Ok(corrected)
}

/// Left-multiplies each frame pose by the correction of its keyframe.
pub fn correct_frames(
    frame_poses: &[RigidTransform],
    frame_ranges: &[(usize, usize)],
    corrections: &[RigidTransform],
) -> Vec<RigidTransform> {
    frame_poses
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let k = frame_ranges
                .iter()
                .position(|&(first, last)| first <= i && i <= last)
                .or_else(|| {
                    if frame_ranges.first().is_some_and(|r| i < r.0) {
                        Some(0)
                    } else {
                        corrections.len().checked_sub(1)
                    }
                });
            match k.map(|k| corrections[k]) {
                Some(c) if c != RigidTransform::identity() => c * *pose,
                _ => *pose,
            }
        })
        .collect()
}
