//! 2.5-D terrain grid built from foot support triangles.
//!
//! Each estimation cycle the latest contact positions of the four feet form
//! four support triangles (one per leg with its two neighbours). Cells whose
//! centres fall under at least one triangle are fused with the triangle
//! planes, weighted by the triangle confidences; all other cells are left
//! untouched. The support plane under the body is then extracted by PCA over
//! the valid cells inside the body footprint.

mod fusion;
mod grid;
mod plane;

pub use fusion::{
    build_support_triangles, neighbor_points, point_under_triangle, SupportTriangle,
};
pub use grid::{Cell, GridMap2p5};
pub use plane::{compute_plane, fit_plane_pca, fit_support_plane, Footprint};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TerrainError {
    #[error("degenerate plane: points are collinear or rank deficient")]
    DegeneratePlane,
    #[error("insufficient points for plane fit: {found} valid cells (need 3)")]
    InsufficientPoints { found: usize },
    #[error("leg index {0} out of range 0..=3")]
    InvalidLeg(usize),
    #[error("invalid map geometry: {0}")]
    InvalidGeometry(String),
    #[error("map format error: {0}")]
    Format(String),
}
