use nalgebra::{Matrix3, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{GridMap2p5, TerrainError};
use crate::geometry::PlaneParams;

/// Collinearity threshold on the cross-product norm.
const COLLINEAR_TOL: f64 = 1e-9;
/// Minimum gap between the two smallest covariance eigenvalues.
const EIGEN_GAP_TOL: f64 = 1e-12;

/// Plane through three points, `K = (p2 − p1) × (p3 − p1)`, `D = −K·p1`,
/// normalised to a unit upward normal.
pub fn compute_plane(
    p1: &Vector3<f64>,
    p2: &Vector3<f64>,
    p3: &Vector3<f64>,
) -> Result<PlaneParams, TerrainError> {
    let k = (p2 - p1).cross(&(p3 - p1));
    if !(k.norm() >= COLLINEAR_TOL) {
        return Err(TerrainError::DegeneratePlane);
    }
    PlaneParams::from_raw(k, -k.dot(p1)).normalize().ok_or(TerrainError::DegeneratePlane)
}

/// Least-squares plane by PCA: the normal is the eigenvector of the smallest
/// eigenvalue of the centred covariance `XᵀX / (N − 1)`, and the plane passes
/// through the centroid.
pub fn fit_plane_pca(points: &[Vector3<f64>]) -> Result<PlaneParams, TerrainError> {
    let n = points.len();
    if n < 3 {
        return Err(TerrainError::InsufficientPoints { found: n });
    }
    let mean = points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= (n - 1) as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l0, l1) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if l1 - l0 <= EIGEN_GAP_TOL {
        return Err(TerrainError::DegeneratePlane);
    }
    let normal = eig.eigenvectors.column(order[0]).into_owned();
    PlaneParams::through_point(normal, mean).ok_or(TerrainError::DegeneratePlane)
}

/// Axis-aligned rectangle in the xy-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub center: Vector2<f64>,
    pub half_extents: Vector2<f64>,
}

impl Footprint {
    /// Body footprint of `length × width` centred at `center`.
    pub fn body(center: Vector2<f64>, length: f64, width: f64) -> Self {
        Footprint { center, half_extents: Vector2::new(0.5 * length, 0.5 * width) }
    }

    pub fn min(&self) -> Vector2<f64> {
        self.center - self.half_extents
    }

    pub fn max(&self) -> Vector2<f64> {
        self.center + self.half_extents
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        let d = p - self.center;
        d.x.abs() <= self.half_extents.x && d.y.abs() <= self.half_extents.y
    }
}

/// Support plane from the valid cells whose centres lie inside `footprint`.
pub fn fit_support_plane(map: &GridMap2p5, footprint: &Footprint) -> Result<PlaneParams, TerrainError> {
    let mut points = Vec::new();
    if let Some(((x0, y0), (x1, y1))) = map.index_range(&footprint.min(), &footprint.max()) {
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let c = map.cell(ix, iy);
                let center = map.cell_center(ix, iy);
                if c.valid && footprint.contains(&center) {
                    points.push(Vector3::new(center.x, center.y, c.height));
                }
            }
        }
    }
    fit_plane_pca(&points)
}
