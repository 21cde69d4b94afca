//! Moving object detection from a moving fisheye camera.
//!
//! Feature correspondences are lifted onto the unit projection sphere and
//! checked against four geometric constraints that every static point must
//! satisfy (epipolar plane, positive depth, positive height, anti-parallel).
//! The deviations are fused into a per-cell motion likelihood and segmented.
//! A synthetic scene simulator with a triangulation oracle provides ground truth.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod constraints;
pub mod io;
pub mod pipeline;
pub mod sim;

pub use camera::{CameraIntrinsics, PixelPoint, RoadFrame, SphereMapping, UnitRay};
pub use constraints::{CameraPose, ConstraintConfig, ConstraintDeviations, Correspondence};
