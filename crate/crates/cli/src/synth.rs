//! Synthetic worlds and drifting trajectories.
//!
//! A world is a set of surfaces: corridor walls, floor and ceiling split into
//! small rectangular patches, plus slanted panels and thin poles scattered
//! along the path so that different stretches of corridor look different. A
//! simulated sensor moves along the corridor centerline and samples surface
//! points within its range; the odometry it reports accumulates a small
//! per-frame twist error.
//!
//! World layout, sensor sampling and drift draw from separate streams of
//! the seeded generator, so changing the drift never changes the points.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use histoloop::{Point3, RigidTransform, Twist};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::io::read_text;
use crate::{Dataset, Error, Result};

const WORLD_STREAM: u64 = 1;
const SENSOR_STREAM: u64 = 2;
const DRIFT_STREAM: u64 = 3;
/// Largest patch edge, meters.
const PATCH: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldKind {
    /// Four corridors around a square; the path returns to its start.
    SquareLoop,
    /// One straight corridor; the path never revisits a place.
    Straight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub kind: WorldKind,
    /// Side of the centerline square, or length of the straight corridor.
    pub side: f64,
    pub corridor_width: f64,
    pub corridor_height: f64,
    /// One slanted panel and `poles_per_slot` poles per this many meters of path.
    pub feature_spacing: f64,
    pub poles_per_slot: usize,
    pub pole_radius: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            kind: WorldKind::SquareLoop,
            side: 60.0,
            corridor_width: 7.0,
            corridor_height: 3.0,
            feature_spacing: 3.0,
            poles_per_slot: 2,
            pole_radius: 0.06,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    /// Meters travelled per frame.
    pub speed: f64,
    /// Arc length along the path of the first pose, meters. Starting mid
    /// corridor keeps the first keyframe away from a corner.
    pub start: f64,
    /// Frame count; see [`SynthSpec::frame_count`] for the default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
    pub extra_frames: usize,
    pub sensor_height: f64,
    /// Seconds between frames.
    pub frame_period: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            speed: 2.0,
            start: 20.0,
            frames: None,
            extra_frames: 5,
            sensor_height: 1.5,
            frame_period: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSpec {
    pub range: f64,
    /// Samples per square meter of visible surface per frame.
    pub density: f64,
    pub noise_sigma: f64,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            range: 6.0,
            density: 24.0,
            noise_sigma: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftSpec {
    /// Translation error per frame, meters.
    pub translation_per_frame: f64,
    /// Rotation error per frame, degrees.
    pub rotation_deg_per_frame: f64,
    /// Weight of a fixed, seed-chosen error direction against a fresh random
    /// one each frame; 1 accumulates linearly, 0 is a random walk.
    pub bias: f64,
}

impl Default for DriftSpec {
    fn default() -> Self {
        Self {
            translation_per_frame: 0.0,
            rotation_deg_per_frame: 0.0,
            bias: 0.8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub world: WorldSpec,
    pub trajectory: TrajectorySpec,
    pub sensor: SensorSpec,
    pub drift: DriftSpec,
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec always serializes")
    }

    fn validate(&self) -> Result<()> {
        let w = &self.world;
        let t = &self.trajectory;
        let s = &self.sensor;
        let d = &self.drift;
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !(positive(w.side) && positive(w.corridor_width) && positive(w.corridor_height)) {
            return Err(Error::Invalid("world has no surfaces: sizes must be positive".into()));
        }
        if w.kind == WorldKind::SquareLoop && w.side <= w.corridor_width {
            return Err(Error::Invalid("square side must exceed the corridor width".into()));
        }
        if !(positive(w.pole_radius) && positive(w.feature_spacing) && positive(t.speed) && positive(t.frame_period)) {
            return Err(Error::Invalid("feature spacing, speed and frame period must be positive".into()));
        }
        if !(positive(s.range) && positive(s.density)) || !(s.noise_sigma >= 0.0) {
            return Err(Error::Invalid("sensor range and density must be positive".into()));
        }
        if !(t.start.is_finite() && t.start >= 0.0) {
            return Err(Error::Invalid("path start must be a non-negative arc length".into()));
        }
        if w.kind == WorldKind::Straight && t.start + (self.frame_count().max(1) - 1) as f64 * t.speed > w.side {
            return Err(Error::Invalid("trajectory runs past the end of the straight corridor".into()));
        }
        if !(t.sensor_height > 0.0 && t.sensor_height < w.corridor_height) {
            return Err(Error::Invalid("sensor must be between floor and ceiling".into()));
        }
        if !(d.translation_per_frame >= 0.0 && d.rotation_deg_per_frame >= 0.0 && (0.0..=1.0).contains(&d.bias)) {
            return Err(Error::Invalid("drift rates must be non-negative and bias in [0, 1]".into()));
        }
        Ok(())
    }

    /// Explicit `frames`, or else one lap of the square plus `extra_frames`,
    /// or the whole straight corridor from `start`.
    pub fn frame_count(&self) -> usize {
        let t = &self.trajectory;
        t.frames.unwrap_or_else(|| match self.world.kind {
            WorldKind::SquareLoop => (4.0 * self.world.side / t.speed).floor() as usize + t.extra_frames,
            WorldKind::Straight => ((self.world.side - t.start).max(0.0) / t.speed).floor() as usize + 1,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    /// Parallelogram `origin + a u + b v`, `a, b` in `[0, 1]`.
    Rect { origin: Point3, u: Vector3<f64>, v: Vector3<f64> },
    /// Cylinder around the segment `base + t axis`, `t` in `[0, 1]`.
    Cylinder { base: Point3, axis: Vector3<f64>, radius: f64 },
}

impl Surface {
    pub fn area(&self) -> f64 {
        match *self {
            Surface::Rect { u, v, .. } => u.cross(&v).norm(),
            Surface::Cylinder { axis, radius, .. } => TAU * radius * axis.norm(),
        }
    }

    fn bounding_sphere(&self) -> (Point3, f64) {
        match *self {
            Surface::Rect { origin, u, v } => (origin + (u + v) * 0.5, 0.5 * (u + v).norm().max((u - v).norm())),
            Surface::Cylinder { base, axis, radius } => (base + axis * 0.5, 0.5 * axis.norm() + radius),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point3 {
        match *self {
            Surface::Rect { origin, u, v } => origin + u * rng.random::<f64>() + v * rng.random::<f64>(),
            Surface::Cylinder { base, axis, radius } => {
                let a = axis.normalize();
                let helper = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
                let e1 = a.cross(&helper).normalize();
                let e2 = a.cross(&e1);
                let angle = rng.random_range(0.0..TAU);
                base + axis * rng.random::<f64>() + (e1 * angle.cos() + e2 * angle.sin()) * radius
            }
        }
    }
}

/// Static geometry plus the centerline path through it.
#[derive(Debug, Clone)]
pub struct World {
    pub spec: WorldSpec,
    pub surfaces: Vec<Surface>,
}

fn push_rect(out: &mut Vec<Surface>, origin: Point3, u: Vector3<f64>, v: Vector3<f64>) {
    let nu = (u.norm() / PATCH).ceil().max(1.0) as usize;
    let nv = (v.norm() / PATCH).ceil().max(1.0) as usize;
    let (du, dv) = (u / nu as f64, v / nv as f64);
    for i in 0..nu {
        for j in 0..nv {
            out.push(Surface::Rect {
                origin: origin + du * i as f64 + dv * j as f64,
                u: du,
                v: dv,
            });
        }
    }
}

/// Axis-aligned box floor-to-ceiling walls from `lo` to `hi` (x, y corners).
fn push_walls(out: &mut Vec<Surface>, lo: (f64, f64), hi: (f64, f64), h: f64) {
    let up = Vector3::z() * h;
    let corners = [
        Point3::new(lo.0, lo.1, 0.0),
        Point3::new(hi.0, lo.1, 0.0),
        Point3::new(hi.0, hi.1, 0.0),
        Point3::new(lo.0, hi.1, 0.0),
    ];
    for k in 0..4 {
        let a = corners[k];
        let b = corners[(k + 1) % 4];
        push_rect(out, a, b - a, up);
    }
}

impl World {
    pub fn generate(spec: &WorldSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(WORLD_STREAM);
        let (l, w, h) = (spec.side, spec.corridor_width, spec.corridor_height);
        let hw = w / 2.0;
        let mut surfaces = Vec::new();
        match spec.kind {
            WorldKind::SquareLoop => {
                push_walls(&mut surfaces, (-hw, -hw), (l + hw, l + hw), h);
                push_walls(&mut surfaces, (hw, hw), (l - hw, l - hw), h);
                for z in [0.0, h] {
                    let strips = [
                        ((-hw, -hw), (l + hw, hw)),
                        ((-hw, l - hw), (l + hw, l + hw)),
                        ((-hw, hw), (hw, l - hw)),
                        ((l - hw, hw), (l + hw, l - hw)),
                    ];
                    for ((x0, y0), (x1, y1)) in strips {
                        push_rect(
                            &mut surfaces,
                            Point3::new(x0, y0, z),
                            Vector3::x() * (x1 - x0),
                            Vector3::y() * (y1 - y0),
                        );
                    }
                }
            }
            WorldKind::Straight => {
                let up = Vector3::z() * h;
                let along = Vector3::x() * (l + 2.0 * w);
                for y in [-hw, hw] {
                    push_rect(&mut surfaces, Point3::new(-w, y, 0.0), along, up);
                }
                for z in [0.0, h] {
                    push_rect(&mut surfaces, Point3::new(-w, -hw, z), along, Vector3::y() * w);
                }
                push_rect(&mut surfaces, Point3::new(-w, -hw, 0.0), Vector3::y() * w, up);
                push_rect(&mut surfaces, Point3::new(l + w, -hw, 0.0), Vector3::y() * w, up);
            }
        }
        let world = World { spec: spec.clone(), surfaces };
        let mut surfaces = world.surfaces.clone();
        let slots = (world.path_length() / spec.feature_spacing).floor() as usize;
        for k in 0..slots {
            let s0 = k as f64 * spec.feature_spacing;
            world.push_panel(&mut surfaces, &mut rng, s0);
            for j in 0..spec.poles_per_slot {
                let s = s0 + (j as f64 + 0.5) / spec.poles_per_slot as f64 * spec.feature_spacing;
                world.push_pole(&mut surfaces, &mut rng, s);
            }
        }
        World { spec: spec.clone(), surfaces }
    }

    /// Length of one traversal of the centerline.
    pub fn path_length(&self) -> f64 {
        match self.spec.kind {
            WorldKind::SquareLoop => 4.0 * self.spec.side,
            WorldKind::Straight => self.spec.side,
        }
    }

    /// Centerline position (at floor height) and heading at arc length `s`.
    pub fn path_point(&self, s: f64) -> (Point3, f64) {
        let l = self.spec.side;
        match self.spec.kind {
            WorldKind::Straight => (Point3::new(s.clamp(0.0, l), 0.0, 0.0), 0.0),
            WorldKind::SquareLoop => {
                let s = s.rem_euclid(4.0 * l);
                let side = ((s / l).floor() as usize).min(3);
                let t = s - side as f64 * l;
                let (start, dir) = [
                    (Point3::new(0.0, 0.0, 0.0), Vector3::x()),
                    (Point3::new(l, 0.0, 0.0), Vector3::y()),
                    (Point3::new(l, l, 0.0), -Vector3::x()),
                    (Point3::new(0.0, l, 0.0), -Vector3::y()),
                ][side];
                (start + dir * t, side as f64 * PI / 2.0)
            }
        }
    }

    fn local_to_world(&self, s: f64, lateral: f64, z: f64) -> (Point3, Matrix3<f64>) {
        let (p, yaw) = self.path_point(s);
        let r = *nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix();
        (p + r * Vector3::new(0.0, lateral, z), r)
    }

    fn side_offset(&self, rng: &mut ChaCha8Rng, margin: f64) -> f64 {
        let hw = self.spec.corridor_width / 2.0;
        let lat = rng.random_range(0.6..(hw - margin).max(0.7));
        if rng.random_bool(0.5) {
            lat
        } else {
            -lat
        }
    }

    fn push_panel(&self, out: &mut Vec<Surface>, rng: &mut ChaCha8Rng, s0: f64) {
        let h = self.spec.corridor_height;
        let s = s0 + rng.random_range(0.0..self.spec.feature_spacing * 0.5);
        let lateral = self.side_offset(rng, 0.5);
        let z = rng.random_range(0.3..(h - 1.2).max(0.4));
        let (center, r) = self.local_to_world(s, lateral, z);
        let n_local: Vector3<f64> = UnitSphere.sample(rng).into();
        let n = r * n_local;
        let helper = if n.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
        let e1 = n.cross(&helper).normalize();
        let e2 = n.cross(&e1);
        let (a, b) = (rng.random_range(1.0..2.0), rng.random_range(0.8..1.6));
        push_rect(out, center - e1 * (a / 2.0) - e2 * (b / 2.0), e1 * a, e2 * b);
    }

    fn push_pole(&self, out: &mut Vec<Surface>, rng: &mut ChaCha8Rng, s: f64) {
        let h = self.spec.corridor_height;
        let lateral = self.side_offset(rng, 0.8);
        let (base, r) = self.local_to_world(s, lateral, 0.0);
        let tilt = rng.random_range(0.0..50f64.to_radians());
        let azimuth = rng.random_range(0.0..TAU);
        let dir = r * Vector3::new(tilt.sin() * azimuth.cos(), tilt.sin() * azimuth.sin(), tilt.cos());
        out.push(Surface::Cylinder {
            base,
            axis: dir * (h / dir.z),
            radius: self.spec.pole_radius,
        });
    }

    /// Sensor pose at arc length `s`: x forward, z up.
    pub fn sensor_pose(&self, s: f64, height: f64) -> RigidTransform {
        let (p, yaw) = self.path_point(s);
        RigidTransform::from_parts_unchecked(
            *nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix(),
            p + Vector3::z() * height,
        )
    }

    /// World-frame samples of every surface within `range` of `center`:
    /// about `density` points per square meter, each with isotropic
    /// Gaussian noise.
    pub fn sample_around(&self, center: &Point3, range: f64, density: f64, noise_sigma: f64, rng: &mut ChaCha8Rng) -> Vec<Point3> {
        let noise = Normal::new(0.0, noise_sigma.max(0.0)).expect("finite sigma");
        let mut out = Vec::new();
        for surface in &self.surfaces {
            let (c, radius) = surface.bounding_sphere();
            if (c - center).norm() > range + radius {
                continue;
            }
            let expected = density * surface.area();
            let n = (expected + rng.random::<f64>()).floor() as usize;
            for _ in 0..n {
                let p = surface.sample(rng);
                if (p - center).norm() <= range {
                    let e = Vector3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
                    out.push(p + if noise_sigma > 0.0 { e } else { Vector3::zeros() });
                }
            }
        }
        out
    }
}

/// Per-frame odometry errors `[rho; phi]`, one per frame after the first.
pub fn drift_twists(spec: &DriftSpec, seed: u64, frames: usize) -> Vec<Twist> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(DRIFT_STREAM);
    let fixed_t: Vector3<f64> = UnitSphere.sample(&mut rng).into();
    let fixed_r: Vector3<f64> = UnitSphere.sample(&mut rng).into();
    let rot = spec.rotation_deg_per_frame.to_radians();
    (1..frames)
        .map(|_| {
            let rt: Vector3<f64> = UnitSphere.sample(&mut rng).into();
            let rr: Vector3<f64> = UnitSphere.sample(&mut rng).into();
            let dir = |fixed: Vector3<f64>, fresh: Vector3<f64>| {
                let v = fixed * spec.bias + fresh * (1.0 - spec.bias);
                if v.norm() > 1e-12 {
                    v.normalize()
                } else {
                    fixed
                }
            };
            let t = dir(fixed_t, rt) * spec.translation_per_frame;
            let r = dir(fixed_r, rr) * rot;
            Twist::new(t.x, t.y, t.z, r.x, r.y, r.z)
        })
        .collect()
}

/// Odometry from the true poses: each true frame-to-frame motion followed
/// by that frame's drift twist.
pub fn apply_drift(truth: &[RigidTransform], twists: &[Twist]) -> Vec<RigidTransform> {
    if twists.iter().all(|t| t.iter().all(|v| *v == 0.0)) {
        return truth.to_vec();
    }
    let mut out = Vec::with_capacity(truth.len());
    let Some(first) = truth.first() else {
        return out;
    };
    out.push(*first);
    for (i, xi) in twists.iter().enumerate().take(truth.len() - 1) {
        let step = truth[i].inverse() * truth[i + 1];
        let prev = out[i];
        out.push((prev * step * RigidTransform::exp(xi)).orthonormalized());
    }
    out
}

/// Deterministic dataset for `spec` and `seed`: sensor-frame points,
/// drifted odometry and the true trajectory as ground truth.
pub fn generate(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let world = World::generate(&spec.world, seed);
    let n = spec.frame_count();
    if n == 0 {
        return Err(Error::Invalid("synthetic dataset needs at least one frame".into()));
    }
    let truth: Vec<RigidTransform> = (0..n)
        .map(|i| world.sensor_pose(spec.trajectory.start + i as f64 * spec.trajectory.speed, spec.trajectory.sensor_height))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SENSOR_STREAM);
    let s = &spec.sensor;
    let frames = truth
        .iter()
        .map(|pose| {
            let inv = pose.inverse();
            world
                .sample_around(&pose.translation, s.range, s.density, s.noise_sigma, &mut rng)
                .iter()
                .map(|p| inv.apply(p))
                .collect()
        })
        .collect();
    let trajectory = apply_drift(&truth, &drift_twists(&spec.drift, seed, n));
    Ok(Dataset {
        timestamps: (0..n).map(|i| i as f64 * spec.trajectory.frame_period).collect(),
        frames,
        trajectory,
        ground_truth: Some(truth),
        malformed_frames: Vec::new(),
    })
}
