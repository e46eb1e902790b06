#![allow(dead_code)]

use histoloop_cli::synth::{DriftSpec, SynthSpec, WorldKind};
use histoloop_cli::Config;

/// Seed of the drifted square loop used by the end-to-end checks.
pub const SQUARE_LOOP_SEED: u64 = 3;

/// Square loop of four corridors with 0.02 m and 0.05 deg of odometry error
/// per frame.
pub fn square_loop_spec() -> SynthSpec {
    SynthSpec {
        drift: DriftSpec {
            translation_per_frame: 0.02,
            rotation_deg_per_frame: 0.05,
            ..Default::default()
        },
        ..Default::default()
    }
}

/// A drift-free straight corridor of 200 m that never revisits a place.
pub fn straight_spec() -> SynthSpec {
    let mut spec = SynthSpec::default();
    spec.world.kind = WorldKind::Straight;
    spec.world.side = 200.0;
    spec
}

/// Default thresholds, five frames per keyframe.
pub fn loop_config() -> Config {
    Config {
        keyframe_size: 5,
        ..Default::default()
    }
}

/// A furnished hall: floor, ceiling and four walls, axis-aligned boxes and
/// round pillars.
pub fn hall() -> histoloop_cli::synth::World {
    use histoloop_cli::synth::{Surface, World, WorldSpec};
    use nalgebra::Vector3;
    let rect = |o: [f64; 3], u: [f64; 3], v: [f64; 3]| Surface::Rect {
        origin: Vector3::from(o),
        u: Vector3::from(u),
        v: Vector3::from(v),
    };
    let (l, w, h) = (24.0, 16.0, 5.0);
    let mut surfaces = vec![
        rect([0.0, 0.0, 0.0], [l, 0.0, 0.0], [0.0, w, 0.0]),
        rect([0.0, 0.0, h], [l, 0.0, 0.0], [0.0, w, 0.0]),
        rect([0.0, 0.0, 0.0], [l, 0.0, 0.0], [0.0, 0.0, h]),
        rect([0.0, w, 0.0], [l, 0.0, 0.0], [0.0, 0.0, h]),
        rect([0.0, 0.0, 0.0], [0.0, w, 0.0], [0.0, 0.0, h]),
        rect([l, 0.0, 0.0], [0.0, w, 0.0], [0.0, 0.0, h]),
    ];
    let boxes = [
        (3.0, 3.0, 2.0, 1.0, 1.0),
        (15.0, 4.0, 1.5, 3.0, 2.0),
        (8.0, 11.0, 4.0, 1.0, 0.8),
        (19.0, 12.0, 1.0, 1.0, 2.5),
        (11.0, 6.0, 1.0, 2.0, 1.2),
    ];
    for (x, y, sx, sy, sz) in boxes {
        surfaces.push(rect([x, y, sz], [sx, 0.0, 0.0], [0.0, sy, 0.0]));
        surfaces.push(rect([x, y, 0.0], [sx, 0.0, 0.0], [0.0, 0.0, sz]));
        surfaces.push(rect([x, y + sy, 0.0], [sx, 0.0, 0.0], [0.0, 0.0, sz]));
        surfaces.push(rect([x, y, 0.0], [0.0, sy, 0.0], [0.0, 0.0, sz]));
        surfaces.push(rect([x + sx, y, 0.0], [0.0, sy, 0.0], [0.0, 0.0, sz]));
    }
    for (x, y) in [(6.0, 6.0), (6.0, 10.0), (12.0, 10.0), (18.0, 6.0), (18.0, 10.0)] {
        surfaces.push(Surface::Cylinder {
            base: Vector3::new(x, y, 0.0),
            axis: Vector3::new(0.0, 0.0, h),
            radius: 0.2,
        });
    }
    World { spec: WorldSpec::default(), surfaces }
}

/// Sensor position inside [`hall`], off the cell grid.
pub const HALL_SENSOR: [f64; 3] = [12.3, 8.2, 1.7];
