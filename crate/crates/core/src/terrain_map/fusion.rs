use nalgebra::{Vector2, Vector3};

use super::{compute_plane, GridMap2p5, TerrainError};
use crate::geometry::{Leg, PlaneParams};

/// Tolerance of the signed-area inside test; boundary points count as inside.
const AREA_TOL: f64 = 1e-12;

/// Local support plane spanned by three foot contact positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportTriangle {
    pub vertices: [Vector3<f64>; 3],
    pub plane: PlaneParams,
    pub prob: f64,
}

impl SupportTriangle {
    pub fn new(vertices: [Vector3<f64>; 3], prob: f64) -> Result<Self, TerrainError> {
        let plane = compute_plane(&vertices[0], &vertices[1], &vertices[2])?;
        Ok(SupportTriangle { vertices, plane, prob: prob.clamp(0.0, 1.0) })
    }

    /// Triangle of `leg` and its two neighbours; its confidence is the mean
    /// contact probability of the three feet.
    pub fn for_leg(leg: Leg, feet: &[Vector3<f64>; 4], contact_probs: &[f64; 4]) -> Result<Self, TerrainError> {
        let [a, b] = leg.neighbors();
        let vertices = [feet[leg.index()], feet[a.index()], feet[b.index()]];
        let prob = (contact_probs[leg.index()] + contact_probs[a.index()] + contact_probs[b.index()]) / 3.0;
        SupportTriangle::new(vertices, prob)
    }

    fn xy_bounds(&self) -> (Vector2<f64>, Vector2<f64>) {
        let mut lo = self.vertices[0].xy();
        let mut hi = lo;
        for v in &self.vertices[1..] {
            lo = lo.inf(&v.xy());
            hi = hi.sup(&v.xy());
        }
        (lo, hi)
    }
}

/// Positions of `leg_idx` and its two neighbouring legs, in that order.
pub fn neighbor_points(leg_idx: usize, feet: &[Vector3<f64>; 4]) -> Result<[Vector3<f64>; 3], TerrainError> {
    let leg = Leg::from_index(leg_idx).ok_or(TerrainError::InvalidLeg(leg_idx))?;
    let [a, b] = leg.neighbors();
    Ok([feet[leg.index()], feet[a.index()], feet[b.index()]])
}

/// The four per-leg triangles for this cycle; collinear ones are skipped.
pub fn build_support_triangles(feet: &[Vector3<f64>; 4], contact_probs: &[f64; 4]) -> Vec<SupportTriangle> {
    Leg::ALL
        .iter()
        .filter_map(|&leg| SupportTriangle::for_leg(leg, feet, contact_probs).ok())
        .collect()
}

fn orient(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

/// Closed inside test of `pos` against the xy-projection of the triangle.
pub fn point_under_triangle(pos: &Vector2<f64>, tri: &SupportTriangle) -> bool {
    let [a, b, c] = tri.vertices.map(|v| v.xy());
    if orient(&a, &b, &c).abs() <= AREA_TOL {
        return false;
    }
    let d1 = orient(&a, &b, pos);
    let d2 = orient(&b, &c, pos);
    let d3 = orient(&c, &a, pos);
    let has_neg = d1 < -AREA_TOL || d2 < -AREA_TOL || d3 < -AREA_TOL;
    let has_pos = d1 > AREA_TOL || d2 > AREA_TOL || d3 > AREA_TOL;
    !(has_neg && has_pos)
}

impl GridMap2p5 {
    /// Fuses the support triangles into every cell whose centre lies under at
    /// least one of them.
    ///
    /// With prior confidence `c₀` (zero for an invalid cell) and covering
    /// triangles of confidence `pₜ` and plane height `zₜ`:
    ///
    /// ```text
    /// h   = (c₀·h₀ + Σ pₜ·zₜ) / (c₀ + Σ pₜ)
    /// c   = (c₀·c₀ + Σpₜ · (1 − Π(1 − pₜ))) / (c₀ + Σ pₜ)
    /// ```
    ///
    /// Cells under no triangle are not touched.
    pub fn update_terrain(&mut self, triangles: &[SupportTriangle]) {
        let usable: Vec<&SupportTriangle> = triangles
            .iter()
            .filter(|t| t.plane.height_at(0.0, 0.0).is_some())
            .collect();
        if usable.is_empty() {
            return;
        }
        let (mut lo, mut hi) = usable[0].xy_bounds();
        for t in &usable[1..] {
            let (l, h) = t.xy_bounds();
            lo = lo.inf(&l);
            hi = hi.sup(&h);
        }
        let Some(((x0, y0), (x1, y1))) = self.index_range(&lo, &hi) else {
            return;
        };

        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let center = self.cell_center(ix, iy);
                let mut weight = 0.0;
                let mut weighted_height = 0.0;
                let mut miss = 1.0;
                let mut covered = false;
                for t in &usable {
                    if point_under_triangle(&center, t) {
                        covered = true;
                        // height_at is Some for every usable triangle
                        let z = t.plane.height_at(center.x, center.y).unwrap_or(0.0);
                        weight += t.prob;
                        weighted_height += t.prob * z;
                        miss *= 1.0 - t.prob;
                    }
                }
                if !covered {
                    continue;
                }
                let cell = self.cell_mut(ix, iy);
                let c0 = if cell.valid { cell.confidence } else { 0.0 };
                let h0 = if cell.valid { cell.height } else { 0.0 };
                let den = c0 + weight;
                if den <= 0.0 {
                    continue;
                }
                cell.height = (c0 * h0 + weighted_height) / den;
                cell.confidence = ((c0 * c0 + weight * (1.0 - miss)) / den).clamp(0.0, 1.0);
                cell.valid = true;
            }
        }
    }
}
