use alloc::boxed::Box;

use nalgebra::{Matrix3, Vector3};

use crate::cell_map::{Feature, FeatureKind};
use crate::{Error, Result};

/// Bins per axis.
pub const BINS: usize = 60;
/// Angular width of a bin in degrees.
pub const BIN_DEGREES: f64 = 3.0;

const BLUR_RADIUS: usize = 2;
/// Default standard deviation of the histogram blur, in bins.
pub const DEFAULT_BLUR_SIGMA: f64 = 1.0;

/// 60x60 histogram of feature-direction angles. Rows index yaw (phi), columns
/// index pitch (theta), both at 3 degree resolution.
#[derive(Clone, PartialEq)]
pub struct Histogram2D {
    bins: Box<[f64; BINS * BINS]>,
}

impl core::fmt::Debug for Histogram2D {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Histogram2D")
            .field("total", &self.total())
            .finish_non_exhaustive()
    }
}

impl Default for Histogram2D {
    fn default() -> Self {
        Self::zeros()
    }
}

impl Histogram2D {
    pub fn zeros() -> Self {
        Self {
            bins: Box::new([0.0; BINS * BINS]),
        }
    }

    /// From row-major values; every entry must be finite and non-negative.
    pub fn from_row_major(values: &[f64]) -> Result<Self> {
        if values.len() != BINS * BINS {
            return Err(Error::invalid("histogram needs 3600 values"));
        }
        if !values.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::invalid("histogram entries must be finite and non-negative"));
        }
        let mut h = Self::zeros();
        h.bins.copy_from_slice(values);
        Ok(h)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.bins[row * BINS + col]
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        self.bins[row * BINS + col] += value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.bins[..]
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for i in 1..BINS * BINS {
            if self.bins[i] > self.bins[best] {
                best = i;
            }
        }
        (best / BINS, best % BINS)
    }

    /// 5x5 Gaussian blur with the default sigma of one bin.
    pub fn blurred(&self) -> Self {
        self.blurred_with(DEFAULT_BLUR_SIGMA)
    }

    /// 5x5 Gaussian blur with standard deviation `sigma` bins.
    ///
    /// Yaw rows wrap around: after folding to a non-negative x component, a
    /// direction just past yaw 180 reappears near yaw 0 with its pitch
    /// mirrored, so mass crossing the first or last row lands on the other
    /// end at column `BINS - 1 - c`. Pitch columns are truncated at the poles
    /// and renormalized. Total mass is preserved either way.
    pub fn blurred_with(&self, sigma: f64) -> Self {
        let kernel = blur_kernel(sigma);
        let mut rows = Self::zeros();
        // along columns (theta) within each row
        for r in 0..BINS {
            for c in 0..BINS {
                let v = self.get(r, c);
                if v != 0.0 {
                    spread(&kernel, c, |j, w| rows.add(r, j, v * w));
                }
            }
        }
        let total: f64 = kernel.iter().sum();
        let mut out = Self::zeros();
        for r in 0..BINS {
            for c in 0..BINS {
                let v = rows.get(r, c);
                if v == 0.0 {
                    continue;
                }
                for (k, w) in kernel.iter().enumerate() {
                    let i = r + k + BINS - BLUR_RADIUS;
                    let (i, c) = if (BINS..2 * BINS).contains(&i) {
                        (i - BINS, c)
                    } else {
                        (i % BINS, BINS - 1 - c)
                    };
                    out.add(i, c, v * w / total);
                }
            }
        }
        out
    }
}

fn blur_kernel(sigma: f64) -> [f64; 2 * BLUR_RADIUS + 1] {
    let mut k = [0.0; 2 * BLUR_RADIUS + 1];
    for (i, w) in k.iter_mut().enumerate() {
        let x = i as f64 - BLUR_RADIUS as f64;
        *w = (-(x * x) / (2.0 * sigma * sigma)).exp();
    }
    k
}

fn spread(kernel: &[f64; 2 * BLUR_RADIUS + 1], at: usize, mut emit: impl FnMut(usize, f64)) {
    let lo = at.saturating_sub(BLUR_RADIUS);
    let hi = (at + BLUR_RADIUS).min(BINS - 1);
    let weight = |j: usize| kernel[j + BLUR_RADIUS - at];
    let norm: f64 = (lo..=hi).map(weight).sum();
    for j in lo..=hi {
        emit(j, weight(j) / norm);
    }
}

/// Pitch and yaw of a direction in degrees, `(theta, phi)`, both in
/// `[0, 180]`.
///
/// The direction is first folded onto the half-space of non-negative x (a
/// negative sign bit, including `-0.0`, flips the whole vector) so that `d`
/// and `-d` map to the same angles. Then `theta = asin(z) + 90` and
/// `phi = atan2(y, x) + 90`.
pub fn direction_to_angles(d: &Vector3<f64>) -> Result<(f64, f64)> {
    let n = d.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
        return Err(Error::invalid("direction must be a unit vector"));
    }
    let mut d = d / n;
    if d.x.is_sign_negative() {
        d = -d;
    }
    let theta = d.z.clamp(-1.0, 1.0).asin().to_degrees() + 90.0;
    let phi = d.y.atan2(d.x).to_degrees() + 90.0;
    Ok((theta, phi))
}

/// Bin of an angle in degrees; 180 exactly falls into the last bin.
pub fn angle_bin(angle: f64) -> usize {
    let b = (angle / BIN_DEGREES).floor();
    if b <= 0.0 {
        0
    } else {
        (b as usize).min(BINS - 1)
    }
}

/// Sines of the lower bin edges, `sin(3k - 90)` degrees for `k` in `0..BINS`.
/// Both angles are `asin` of something plus 90, so a bin is found by where
/// that sine falls among these.
fn edge_sines() -> [f64; BINS] {
    core::array::from_fn(|k| ((k as f64 * BIN_DEGREES - 90.0).to_radians()).sin())
}

/// Bin of the angle `asin(s) + 90`, as [`angle_bin`] would give it.
fn sine_bin(edges: &[f64; BINS], s: f64) -> usize {
    edges.partition_point(|&e| e <= s).max(1) - 1
}

/// `(phi bin, theta bin)` of `d` without evaluating any inverse trigonometry.
fn direction_bins(edges: &[f64; BINS], d: &Vector3<f64>) -> Option<(usize, usize)> {
    let n = d.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
        return None;
    }
    let mut d = d / n;
    if d.x.is_sign_negative() {
        d = -d;
    }
    // with x >= 0, atan2(y, x) is asin of y over the planar radius
    let r = (d.x * d.x + d.y * d.y).sqrt();
    let yaw_sine = if r > 0.0 { d.y / r } else { 0.0 };
    Some((sine_bin(edges, yaw_sine), sine_bin(edges, d.z.clamp(-1.0, 1.0))))
}

/// Pre-blur counts: every feature direction is rotated by `rotation`, turned
/// into angles and counted at `(phi bin, theta bin)` of the histogram of its
/// kind. Directions that are not unit vectors are skipped.
pub fn count_histograms<'a>(
    features: impl IntoIterator<Item = &'a Feature>,
    rotation: &Matrix3<f64>,
) -> (Histogram2D, Histogram2D) {
    let edges = edge_sines();
    let mut plane = Histogram2D::zeros();
    let mut line = Histogram2D::zeros();
    for f in features {
        let Some((row, col)) = direction_bins(&edges, &(rotation * f.direction)) else {
            continue;
        };
        let target = match f.kind {
            FeatureKind::Plane => &mut plane,
            FeatureKind::Line => &mut line,
        };
        target.add(row, col, 1.0);
    }
    (plane, line)
}

/// Plane and line histograms of a keyframe, blurred.
pub fn build_histograms<'a>(
    features: impl IntoIterator<Item = &'a Feature>,
    rotation: &Matrix3<f64>,
) -> (Histogram2D, Histogram2D) {
    build_histograms_with(features, rotation, DEFAULT_BLUR_SIGMA)
}

/// [`build_histograms`] with a chosen blur sigma.
pub fn build_histograms_with<'a>(
    features: impl IntoIterator<Item = &'a Feature>,
    rotation: &Matrix3<f64>,
    blur_sigma: f64,
) -> (Histogram2D, Histogram2D) {
    let (plane, line) = count_histograms(features, rotation);
    (plane.blurred_with(blur_sigma), line.blurred_with(blur_sigma))
}
