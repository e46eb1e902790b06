//! Run configuration, read from TOML with per-key command-line overrides.

use std::path::Path;

use histoloop::alignment::AlignParams;
use histoloop::descriptor::DescriptorParams;
use histoloop::loop_detector::Thresholds;
use histoloop::pose_graph::OptimizeParams;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::io::read_text;
use crate::{Error, Result};

/// Cell edge length: one value for a cube or one per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CellSize {
    Uniform(f64),
    PerAxis([f64; 3]),
}

impl CellSize {
    pub fn vector(&self) -> Vector3<f64> {
        match *self {
            CellSize::Uniform(s) => Vector3::repeat(s),
            CellSize::PerAxis([x, y, z]) => Vector3::new(x, y, z),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    /// Defaults to twice the largest cell edge.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub search_radius: Option<f64>,
    pub huber_delta: f64,
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub max_direction_angle_deg: f64,
    pub update_tolerance: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        let p = AlignParams::default();
        Self {
            search_radius: None,
            huber_delta: p.huber_delta,
            max_iterations: p.max_iterations,
            initial_damping: p.initial_damping,
            max_direction_angle_deg: p.max_direction_angle.to_degrees(),
            update_tolerance: p.update_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseGraphConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub initial_damping: f64,
}

impl Default for PoseGraphConfig {
    fn default() -> Self {
        let p = OptimizeParams::default();
        Self {
            max_iterations: p.max_iterations,
            tolerance: p.tolerance,
            initial_damping: p.initial_damping,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Frames per keyframe.
    pub keyframe_size: usize,
    pub cell_size: CellSize,
    pub min_points: usize,
    pub plane_ratio: f64,
    pub line_ratio: f64,
    /// Histogram blur sigma, in bins.
    pub blur_sigma: f64,
    pub plane_thresh: f64,
    pub line_thresh: f64,
    pub temporal_exclusion: u64,
    pub accept_distance: f64,
    pub alignment: AlignmentConfig,
    pub pose_graph: PoseGraphConfig,
}

impl Default for Config {
    fn default() -> Self {
        let d = DescriptorParams::default();
        let t = Thresholds::default();
        Self {
            keyframe_size: 100,
            cell_size: CellSize::Uniform(1.0),
            min_points: d.min_points,
            plane_ratio: d.plane_ratio,
            line_ratio: d.line_ratio,
            blur_sigma: d.blur_sigma,
            plane_thresh: t.plane,
            line_thresh: t.line,
            temporal_exclusion: histoloop::loop_detector::DEFAULT_TEMPORAL_EXCLUSION,
            accept_distance: AlignParams::default().accept_distance,
            alignment: AlignmentConfig::default(),
            pose_graph: PoseGraphConfig::default(),
        }
    }
}

impl Config {
    /// Parses TOML text, applies `key=value` overrides (dotted keys reach
    /// into tables) and validates the result.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let config: Config = table.try_into().map_err(|e| Error::Config(format!("{e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        Self::from_toml(&read_text(path)?, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.keyframe_size == 0 {
            return bad("keyframe_size must be positive");
        }
        if !self.cell_size.vector().iter().all(|&s| positive(s)) {
            return bad("cell_size must be positive");
        }
        if self.min_points == 0 {
            return bad("min_points must be positive");
        }
        for (name, v) in [
            ("plane_ratio", self.plane_ratio),
            ("line_ratio", self.line_ratio),
            ("blur_sigma", self.blur_sigma),
            ("accept_distance", self.accept_distance),
            ("alignment.huber_delta", self.alignment.huber_delta),
            ("alignment.initial_damping", self.alignment.initial_damping),
            ("alignment.max_direction_angle_deg", self.alignment.max_direction_angle_deg),
            ("alignment.update_tolerance", self.alignment.update_tolerance),
            ("pose_graph.tolerance", self.pose_graph.tolerance),
            ("pose_graph.initial_damping", self.pose_graph.initial_damping),
        ] {
            if !positive(v) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.alignment.search_radius.is_some_and(|r| !positive(r)) {
            return bad("alignment.search_radius must be positive");
        }
        for (name, v) in [("plane_thresh", self.plane_thresh), ("line_thresh", self.line_thresh)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1]")));
            }
        }
        if self.alignment.max_iterations == 0 || self.pose_graph.max_iterations == 0 {
            return bad("iteration limits must be positive");
        }
        Ok(())
    }

    pub fn descriptor_params(&self) -> DescriptorParams {
        DescriptorParams {
            min_points: self.min_points,
            plane_ratio: self.plane_ratio,
            line_ratio: self.line_ratio,
            blur_sigma: self.blur_sigma,
        }
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            plane: self.plane_thresh,
            line: self.line_thresh,
        }
    }

    pub fn align_params(&self) -> AlignParams {
        let a = &self.alignment;
        let mut p = AlignParams::for_cell_size(&self.cell_size.vector());
        if let Some(r) = a.search_radius {
            p.search_radius = r;
        }
        p.huber_delta = a.huber_delta;
        p.max_iterations = a.max_iterations;
        p.initial_damping = a.initial_damping;
        p.accept_distance = self.accept_distance;
        p.max_direction_angle = a.max_direction_angle_deg.to_radians();
        p.update_tolerance = a.update_tolerance;
        p
    }

    pub fn optimize_params(&self) -> OptimizeParams {
        OptimizeParams {
            max_iterations: self.pose_graph.max_iterations,
            tolerance: self.pose_graph.tolerance,
            initial_damping: self.pose_graph.initial_damping,
        }
    }
}

/// Sets `key=value` in `table`. The value is read as a TOML value, falling
/// back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = value.trim();
    let parsed: toml::Value = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut current = table;
    for p in parents {
        current = current
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{p} is not a table")))?;
    }
    current.insert(last.to_string(), parsed);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = Config::from_toml("", &[]).unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.keyframe_size, 100);
        assert_eq!(c.plane_thresh, 0.90);
        assert_eq!(c.line_thresh, 0.65);
        assert_eq!(c.align_params().search_radius, 2.0);
    }

    #[test]
    fn file_values_and_overrides() {
        let text = "keyframe_size = 20\ncell_size = [0.5, 0.5, 1.0]\n[alignment]\nhuber_delta = 0.3\n";
        let c = Config::from_toml(text, &["alignment.max_iterations=7".into(), "plane_thresh=0.8".into()]).unwrap();
        assert_eq!(c.keyframe_size, 20);
        assert_eq!(c.cell_size.vector(), Vector3::new(0.5, 0.5, 1.0));
        assert_eq!(c.alignment.huber_delta, 0.3);
        assert_eq!(c.alignment.max_iterations, 7);
        assert_eq!(c.plane_thresh, 0.8);
        assert_eq!(c.align_params().search_radius, 2.0);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::from_toml("plane_thresh = 1.5", &[]).is_err());
        assert!(Config::from_toml("cell_size = -1.0", &[]).is_err());
        assert!(Config::from_toml("keyframe_size = 0", &[]).is_err());
        assert!(Config::from_toml("no_such_key = 1", &[]).is_err());
        assert!(Config::from_toml("", &["keyframe_size".into()]).is_err());
    }

    #[test]
    fn serializes_back_to_the_same_config() {
        let c = Config::from_toml("cell_size = 0.75\n", &["alignment.search_radius=3.0".into()]).unwrap();
        assert_eq!(Config::from_toml(&c.to_toml(), &[]).unwrap(), c);
    }
}
