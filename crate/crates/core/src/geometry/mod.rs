//! Point-cloud construction and hybrid rigid/non-rigid drag deformation.
//!
//! All 3D positions are `(x, y, z)` with `x`, `y` in grid units and `z` the
//! rescaled depth. Points are stored in coordinates local to the estimated
//! object origin.

mod cloud;
mod hybrid;
mod rbf;
mod rigid;

use nalgebra::Vector3;
use thiserror::Error;

pub use cloud::{
    build_point_cloud, estimate_origin, filter_drag_subject, rescale_depth, CloudPoint,
    DragPartition, PointCloud,
};
pub use hybrid::{hybrid_drag, lift_pair, HybridDeformation};
pub use rbf::{
    eval_rbf, gamma_weight, multiquadric, select_fixed_points, solve_rbf, RbfField,
    PIVOT_TOLERANCE,
};
pub use rigid::{rigid_transform, rodrigues_rotation, DEGENERATE_NORM};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("depth map is constant ({0}); cannot rescale")]
    DegenerateDepthRange(f64),
    #[error("mask selects no cells")]
    EmptyMask,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("primary handle at ({x}, {y}) is not inside the mask")]
    HandleOutsideMask { x: f64, y: f64 },
    #[error("vector norm {0} is too small to define a rotation")]
    DegenerateVector(f64),
    #[error("vectors are antiparallel; rotation axis is ambiguous")]
    AmbiguousAxis,
    #[error("control points {0} and {1} coincide")]
    DuplicateControlPoint(usize, usize),
    #[error("linear system is singular (pivot {0:e})")]
    SingularSystem(f64),
    #[error("invalid drag: {0}")]
    InvalidDrag(String),
}
