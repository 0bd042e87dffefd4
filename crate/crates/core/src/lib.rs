//! Depth-aware drag warping of latent feature grids and three-branch
//! diffusion sampling.

pub mod api;
pub mod attention;
pub mod fgrid;
pub mod geometry;
pub mod grid;
pub mod imageio;
pub mod params;
pub mod pipeline;
pub mod projection;
pub mod rng;
pub mod sampler;

pub use grid::{DepthMap, DragPair, FeatureGrid, GridError, Mask};
