//! Anchor-free, NMS-free 3D object detection for LiDAR point clouds.

pub mod dump;
pub mod error;
pub mod evalkit;
pub mod geom;
pub mod infer;
pub mod kv;
pub mod losses;
pub mod maps;
pub mod nn;
pub mod pipeline;
pub mod pointcloud;
pub mod targets;
pub mod voxelize;

pub use error::{Error, Result};
