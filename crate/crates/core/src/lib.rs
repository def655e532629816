//! Multi-object tracking by tracklet association.
//!
//! Detections are linked into short reliable tracklets, refined with online
//! target-specific appearance metrics, scored pairwise by appearance and
//! Hankel-rank motion similarity, and joined into trajectories with a
//! min-cost flow over the whole sequence.

pub mod affinity;
pub mod association;
pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod flow;
pub mod io;
pub mod metric;
pub mod model;
pub mod pipeline;
pub mod synth;
pub mod tracklet_gen;

pub use error::{Error, Result};
pub use model::{BBox, Detection, RunConfig, Trajectory, Tracklet};
