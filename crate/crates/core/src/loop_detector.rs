//! Keyframe database and histogram similarity search.

use alloc::vec::Vec;

use crate::descriptor::{Histogram2D, Keyframe};
use crate::math::RigidTransform;
use crate::{Error, Result};

pub const DEFAULT_PLANE_THRESHOLD: f64 = 0.90;
pub const DEFAULT_LINE_THRESHOLD: f64 = 0.65;
pub const DEFAULT_TEMPORAL_EXCLUSION: u64 = 5;

/// Normalized cross-correlation of two histograms.
///
/// Both histograms are mean-centred and the centred inner product is divided
/// by the product of their norms. Every accumulation runs in the same index
/// order and combines the two inputs with commutative operations, so swapping
/// the arguments gives a bit-identical result.
pub fn similarity(a: &Histogram2D, b: &Histogram2D) -> Result<f64> {
    let (x, y) = (a.as_slice(), b.as_slice());
    if !x.iter().chain(y).all(|v| v.is_finite()) {
        return Err(Error::invalid("histogram has non-finite entries"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (u, v) in x.iter().zip(y) {
        let (du, dv) = (u - mx, v - my);
        sxy += du * dv;
        sxx += du * du;
        syy += dv * dv;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone)]
pub struct DatabaseEntry {
    pub id: u64,
    pub hist_plane: Histogram2D,
    pub hist_line: Histogram2D,
    pub reference_pose: RigidTransform,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopCandidate {
    pub query_id: u64,
    pub match_id: u64,
    pub sim_plane: f64,
    pub sim_line: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub plane: f64,
    pub line: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            plane: DEFAULT_PLANE_THRESHOLD,
            line: DEFAULT_LINE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KeyframeDatabase {
    entries: Vec<DatabaseEntry>,
    temporal_exclusion: u64,
}

impl Default for KeyframeDatabase {
    fn default() -> Self {
        Self::new(DEFAULT_TEMPORAL_EXCLUSION)
    }
}

impl KeyframeDatabase {
    /// `temporal_exclusion` most recent keyframes before a query are never
    /// matched against it.
    pub fn new(temporal_exclusion: u64) -> Self {
        Self {
            entries: Vec::new(),
            temporal_exclusion,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DatabaseEntry] {
        &self.entries
    }

    pub fn temporal_exclusion(&self) -> u64 {
        self.temporal_exclusion
    }

    pub fn get(&self, id: u64) -> Option<&DatabaseEntry> {
        self.entries
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn insert(&mut self, kf: &Keyframe) -> Result<()> {
        if self.entries.last().is_some_and(|e| e.id >= kf.id) {
            return Err(Error::invalid("keyframe ids must be strictly increasing"));
        }
        self.entries.push(DatabaseEntry {
            id: kf.id,
            hist_plane: kf.hist_plane.clone(),
            hist_line: kf.hist_line.clone(),
            reference_pose: kf.reference_pose,
        });
        Ok(())
    }

    /// Entries with `id < query_id - temporal_exclusion` whose plane and line
    /// similarities both reach their thresholds, best plane similarity first
    /// (ties by ascending id). Entries with an undefined similarity are
    /// skipped.
    pub fn query(
        &self,
        query_id: u64,
        hist_plane: &Histogram2D,
        hist_line: &Histogram2D,
        thresholds: &Thresholds,
    ) -> Vec<LoopCandidate> {
        let Some(limit) = query_id.checked_sub(self.temporal_exclusion) else {
            return Vec::new();
        };
        let mut out: Vec<LoopCandidate> = self
            .entries
            .iter()
            .take_while(|e| e.id < limit)
            .filter_map(|e| {
                let sim_plane = similarity(hist_plane, &e.hist_plane).ok()?;
                let sim_line = similarity(hist_line, &e.hist_line).ok()?;
                (sim_plane >= thresholds.plane && sim_line >= thresholds.line).then_some(
                    LoopCandidate {
                        query_id,
                        match_id: e.id,
                        sim_plane,
                        sim_line,
                    },
                )
            })
            .collect();
        out.sort_by(|a, b| {
            b.sim_plane
                .total_cmp(&a.sim_plane)
                .then(a.match_id.cmp(&b.match_id))
        });
        out
    }

    pub fn query_keyframe(&self, kf: &Keyframe, thresholds: &Thresholds) -> Vec<LoopCandidate> {
        self.query(kf.id, &kf.hist_plane, &kf.hist_line, thresholds)
    }
}
