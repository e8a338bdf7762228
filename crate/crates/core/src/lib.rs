//! Fusion and evaluation of dense 6D object pose predictions.
//!
//! The crate turns per-pixel network outputs (raw quaternions, center
//! directions, center depth, class scores) into one pose per object and
//! scores the result with the ADD / ADD-S area-under-curve protocol.
//!
//! - [`quat`]: quaternion algebra and the chordal (Markley) weighted average
//! - [`eigen`]: symmetric 4×4 Jacobi eigensolver backing the average
//! - [`aggregation`]: averaging, pruning and (weighted) RANSAC fusion
//! - [`hough`]: center voting, inliers and translation recovery
//! - [`losses`]: PLoss, SLoss, SMLoss, Qloss, pixel L2 and their combination
//! - [`metrics`]: ADD, ADD-S, AUC and class-wise summaries
//! - [`scene_io`]: file formats and the synthetic scene generator
//! - [`cli`]: the `posefuse` command line
//!
//! The numeric modules are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod aggregation;
pub mod cli;
pub mod dense;
pub mod eigen;
pub mod error;
pub mod hough;
pub mod losses;
pub mod metrics;
pub mod quat;
pub mod scalar;
pub mod scene_io;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Quat = quat::Quaternion<f64>;
pub type Quat32 = quat::Quaternion<f32>;
pub type Rotation = quat::RotationMatrix<f64>;
pub type QuatSet = quat::WeightedQuatSet<f64>;
pub type QuatSet32 = quat::WeightedQuatSet<f32>;
pub type Model = losses::ObjectModel<f64>;
pub type Pose = metrics::Pose<f64>;
pub type AggregationConfig = aggregation::AggregationConfig<f64>;
pub type Orientation = aggregation::AggregatedOrientation<f64>;
