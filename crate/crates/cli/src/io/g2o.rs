//! Pose-graph dumps in the g2o text convention.

use std::path::Path;

use histoloop::pose_graph::PoseGraph;
use histoloop::RigidTransform;

use super::write_file;
use crate::Result;

fn pose_fields(p: &RigidTransform) -> String {
    let t = &p.translation;
    let [qx, qy, qz, qw] = p.quaternion();
    format!("{:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}", t.x, t.y, t.z, qx, qy, qz, qw)
}

pub fn format(graph: &PoseGraph) -> String {
    let mut out = String::new();
    for n in graph.nodes() {
        out += &format!("VERTEX_SE3:QUAT {} {}\n", n.keyframe_id, pose_fields(&n.pose));
    }
    if let Some(first) = graph.nodes().first() {
        out += &format!("FIX {}\n", first.keyframe_id);
    }
    for e in graph.edges() {
        out += &format!("EDGE_SE3:QUAT {} {} {}", e.from_id, e.to_id, pose_fields(&e.measurement));
        for r in 0..6 {
            for c in r..6 {
                out += &format!(" {:.9}", e.information[(r, c)]);
            }
        }
        out.push('\n');
    }
    out
}

pub fn write(path: &Path, graph: &PoseGraph) -> Result<()> {
    let text = format(graph);
    write_file(path, |w| w.write_all(text.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vertex_and_edge_lines() {
        let mut g = PoseGraph::new();
        g.add_node(0, RigidTransform::identity()).unwrap();
        g.add_node(1, RigidTransform::from_translation(nalgebra::Vector3::new(1.0, 0.0, 0.0))).unwrap();
        g.add_odometry_edge(0, &RigidTransform::identity(), 1, &g.nodes()[1].pose.clone())
            .unwrap();
        let text = format(&g);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("VERTEX_SE3:QUAT 1 1.000000000 0.000000000"));
        assert_eq!(lines[2], "FIX 0");
        let edge: Vec<&str> = lines[3].split(' ').collect();
        assert_eq!(edge.len(), 3 + 7 + 21);
    }
}
