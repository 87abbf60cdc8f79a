//! Multi-view instance identity fusion.
//!
//! Takes per-view depth, camera poses, crisp but view-inconsistent 2D
//! instance maps and view-consistent but coarse rendered ID maps, and
//! produces globally unique 3D instance IDs:
//!
//! 1. [`alignment`]: fill each crisp mask with the rendered ID it overlaps most.
//! 2. [`disambiguation`]: back-project masks, group them by rendered ID and
//!    split or merge identities by hierarchical 3D overlap.
//! 3. [`semantics`]: vote a semantic class for every instance across views.
//! 4. [`evaluation`]: AP, ARI/NMI and mIoU/mAcc.
//!
//! [`synthetic`] renders analytic scenes with ground truth and corrupts them
//! into realistic inputs; [`bundle`], [`ply`] and [`pipeline`] handle I/O and
//! orchestration.

pub mod alignment;
pub mod bundle;
pub mod disambiguation;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod image;
pub mod pipeline;
pub mod ply;
pub mod semantics;
pub mod synthetic;
mod union_find;

pub use error::{Error, Result};
pub use image::{DepthMap, Image, InstanceMap, SemanticMap};
pub use union_find::DisjointSet;
