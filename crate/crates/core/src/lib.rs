//! Loop closure for LiDAR odometry and mapping.
//!
//! The crate keeps a fixed-partition cell map of registered points, describes
//! groups of frames (keyframes) with rotation-invariant histograms of plane and
//! line directions, finds revisited places by normalized cross-correlation of
//! those histograms, aligns matched keyframes on their feature cells, and
//! distributes the accumulated drift with a pose-graph optimization.
//!
//! Everything here is `no_std` with `alloc`; file formats, the CLI and the
//! end-to-end driver live in the companion `histoloop-cli` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod alignment;
pub mod cell_map;
pub mod descriptor;
mod error;
pub mod loop_detector;
pub mod math;
pub mod pose_graph;

pub use error::{Error, Result};
pub use math::{Point3, RigidTransform, SymmetricEigen3, Twist};
