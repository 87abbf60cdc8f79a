//! Pinhole camera model, depth back-projection into the world frame, voxel
//! downsampling and fixed-radius nearest-neighbor matching.

mod camera;
mod cloud;
mod grid;
mod voxel;

pub use camera::{backproject, reproject, CameraIntrinsics, Pose};
pub use cloud::{LabeledPoint, LabeledPointCloud};
pub use grid::{radius_match, VoxelHashGrid};
pub use voxel::{voxel_downsample, voxel_key};
