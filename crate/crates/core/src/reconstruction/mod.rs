//! Frame registration, stitching and height integration.

pub mod flow;
pub mod pipeline;
pub mod poisson;
pub mod stitch;

pub use flow::{estimate_flow, FlowConfig, FlowEstimate};
pub use pipeline::{reconstruct_normals, reconstruct_scan, FramePose, Reconstruction, ReconstructionConfig};
pub use poisson::poisson_integrate;
pub use stitch::{default_steepness, sigmoid_weight_map, stitch, GlobalMosaic, WeightMap};

use crate::grid::Pose2D;

/// Cumulative poses; the first frame sits at the origin.
pub fn compose_poses(deltas: &[FlowEstimate]) -> Vec<Pose2D> {
    let mut poses = Vec::with_capacity(deltas.len() + 1);
    poses.push(Pose2D::ORIGIN);
    for d in deltas {
        let last = *poses.last().unwrap();
        poses.push(last + d.as_pose());
    }
    poses
}
