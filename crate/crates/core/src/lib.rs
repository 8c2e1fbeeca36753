//! Geometry, pose preprocessing, supervision and data handling for 3D gaze
//! target detection from body pose and depth.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod pose;
pub mod supervision;

pub use error::{CoreError, Result};
pub use geometry::{CameraIntrinsics, DepthMap, FovHeatmaps, GazeVector, PointCloud, Retrieval3D, Vec3};
pub use grid::Grid;
