use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::PlaneParams;

/// Axis-aligned rectangle in the xy-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Bounds {
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.min[0] && p.x <= self.max[0] && p.y >= self.min[1] && p.y <= self.max[1]
    }
}

/// Terrain building blocks; the height is the sum of all contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    Flat {
        height: f64,
    },
    /// Rises at `angle_deg` along `azimuth_deg` for `length` metres from the
    /// line through `start`. With `hold` the end height continues past the
    /// ramp; otherwise the contribution is zero there.
    Ramp {
        start: [f64; 2],
        azimuth_deg: f64,
        angle_deg: f64,
        length: f64,
        #[serde(default = "default_true")]
        hold: bool,
        #[serde(default)]
        bounds: Option<Bounds>,
    },
    /// Raised box with vertical sides.
    Platform {
        min: [f64; 2],
        max: [f64; 2],
        height: f64,
    },
    /// Step down by `drop` beyond the line through `point`, facing `azimuth_deg`.
    Cliff {
        point: [f64; 2],
        azimuth_deg: f64,
        drop: f64,
    },
    /// `count` cosine bowls with centres drawn inside `region`; radius and
    /// depth are uniform in the given ranges. Realised from the run seed.
    Depressions {
        count: usize,
        region: Bounds,
        radius: [f64; 2],
        depth: [f64; 2],
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct TerrainModel {
    pub primitives: Vec<Primitive>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Feature {
    Offset(f64),
    Ramp { start: Vector2<f64>, dir: Vector2<f64>, slope: f64, length: f64, hold: bool, bounds: Option<Bounds> },
    Box { bounds: Bounds, height: f64 },
    Step { point: Vector2<f64>, dir: Vector2<f64>, drop: f64 },
    Bowl { center: Vector2<f64>, radius: f64, depth: f64 },
}

impl Feature {
    fn height(&self, p: &Vector2<f64>) -> f64 {
        match *self {
            Feature::Offset(h) => h,
            Feature::Ramp { start, dir, slope, length, hold, bounds } => {
                if bounds.is_some_and(|b| !b.contains(p)) {
                    return 0.0;
                }
                let s = (p - start).dot(&dir);
                if s <= 0.0 {
                    0.0
                } else if s <= length {
                    slope * s
                } else if hold {
                    slope * length
                } else {
                    0.0
                }
            }
            Feature::Box { bounds, height } => {
                if bounds.contains(p) {
                    height
                } else {
                    0.0
                }
            }
            Feature::Step { point, dir, drop } => {
                if (p - point).dot(&dir) > 0.0 {
                    -drop
                } else {
                    0.0
                }
            }
            Feature::Bowl { center, radius, depth } => {
                let r = (p - center).norm();
                if r < radius {
                    -0.5 * depth * (1.0 + (std::f64::consts::PI * r / radius).cos())
                } else {
                    0.0
                }
            }
        }
    }

    fn gradient(&self, p: &Vector2<f64>) -> Vector2<f64> {
        match *self {
            Feature::Ramp { start, dir, slope, length, bounds, .. } => {
                if bounds.is_some_and(|b| !b.contains(p)) {
                    return Vector2::zeros();
                }
                let s = (p - start).dot(&dir);
                if s > 0.0 && s < length {
                    dir * slope
                } else {
                    Vector2::zeros()
                }
            }
            Feature::Bowl { center, radius, depth } => {
                let d = p - center;
                let r = d.norm();
                if r > 0.0 && r < radius {
                    let k = std::f64::consts::PI / radius;
                    d * (0.5 * depth * k * (k * r).sin() / r)
                } else {
                    Vector2::zeros()
                }
            }
            _ => Vector2::zeros(),
        }
    }
}

/// A terrain model with its random parts drawn; evaluable everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Terrain {
    features: Vec<Feature>,
}

fn azimuth(deg: f64) -> Vector2<f64> {
    let a = deg.to_radians();
    Vector2::new(a.cos(), a.sin())
}

impl TerrainModel {
    pub fn realize(&self, seed: u64) -> Terrain {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut features = Vec::new();
        for prim in &self.primitives {
            match *prim {
                Primitive::Flat { height } => features.push(Feature::Offset(height)),
                Primitive::Ramp { start, azimuth_deg, angle_deg, length, hold, bounds } => features.push(Feature::Ramp {
                    start: start.into(),
                    dir: azimuth(azimuth_deg),
                    slope: angle_deg.to_radians().tan(),
                    length,
                    hold,
                    bounds,
                }),
                Primitive::Platform { min, max, height } => {
                    features.push(Feature::Box { bounds: Bounds { min, max }, height })
                }
                Primitive::Cliff { point, azimuth_deg, drop } => {
                    features.push(Feature::Step { point: point.into(), dir: azimuth(azimuth_deg), drop })
                }
                Primitive::Depressions { count, region, radius, depth } => {
                    for _ in 0..count {
                        let cx = region.min[0] + (region.max[0] - region.min[0]) * rng.random::<f64>();
                        let cy = region.min[1] + (region.max[1] - region.min[1]) * rng.random::<f64>();
                        let r = radius[0] + (radius[1] - radius[0]) * rng.random::<f64>();
                        let d = depth[0] + (depth[1] - depth[0]) * rng.random::<f64>();
                        features.push(Feature::Bowl { center: Vector2::new(cx, cy), radius: r, depth: d });
                    }
                }
            }
        }
        Terrain { features }
    }

    pub fn validate(&self) -> Result<(), String> {
        for prim in &self.primitives {
            let ok = match prim {
                Primitive::Flat { height } => height.is_finite(),
                Primitive::Ramp { start, azimuth_deg, angle_deg, length, .. } => {
                    start.iter().all(|v| v.is_finite())
                        && azimuth_deg.is_finite()
                        && angle_deg.abs() < 80.0
                        && *length >= 0.0
                }
                Primitive::Platform { min, max, height } => min[0] <= max[0] && min[1] <= max[1] && height.is_finite(),
                Primitive::Cliff { point, azimuth_deg, drop } => {
                    point.iter().all(|v| v.is_finite()) && azimuth_deg.is_finite() && drop.is_finite()
                }
                Primitive::Depressions { region, radius, depth, .. } => {
                    region.min[0] <= region.max[0]
                        && region.min[1] <= region.max[1]
                        && 0.0 < radius[0]
                        && radius[0] <= radius[1]
                        && 0.0 <= depth[0]
                        && depth[0] <= depth[1]
                }
            };
            if !ok {
                return Err(format!("invalid terrain primitive {prim:?}"));
            }
        }
        Ok(())
    }
}

impl Terrain {
    pub fn flat(height: f64) -> Self {
        Terrain { features: vec![Feature::Offset(height)] }
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        let p = Vector2::new(x, y);
        self.features.iter().map(|f| f.height(&p)).sum()
    }

    /// `(∂h/∂x, ∂h/∂y)`; zero across vertical steps.
    pub fn gradient(&self, x: f64, y: f64) -> Vector2<f64> {
        let p = Vector2::new(x, y);
        self.features.iter().map(|f| f.gradient(&p)).sum()
    }

    /// Upward unit normal.
    pub fn normal(&self, x: f64, y: f64) -> Vector3<f64> {
        let g = self.gradient(x, y);
        Vector3::new(-g.x, -g.y, 1.0).normalize()
    }

    /// Tangent plane at `(x, y)`.
    pub fn tangent_plane(&self, x: f64, y: f64) -> PlaneParams {
        let n = self.normal(x, y);
        PlaneParams::through_point(n, Vector3::new(x, y, self.height(x, y))).unwrap_or_else(|| PlaneParams::horizontal(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ramp(angle: f64, hold: bool) -> TerrainModel {
        TerrainModel {
            primitives: vec![Primitive::Ramp {
                start: [1.0, 0.0],
                azimuth_deg: 0.0,
                angle_deg: angle,
                length: 2.0,
                hold,
                bounds: None,
            }],
        }
    }

    #[test]
    fn ramp_heights_and_normal() {
        let t = ramp(10.0, true).realize(0);
        let tan = 10f64.to_radians().tan();
        assert_eq!(t.height(0.5, 3.0), 0.0);
        assert_relative_eq!(t.height(2.0, -1.0), tan, epsilon = 1e-15);
        assert_relative_eq!(t.height(5.0, 0.0), 2.0 * tan, epsilon = 1e-15);
        let n = t.normal(2.0, 0.0);
        assert_relative_eq!(n.z.acos().to_degrees(), 10.0, epsilon = 1e-9);
        let open = ramp(10.0, false).realize(0);
        assert_eq!(open.height(5.0, 0.0), 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let model = TerrainModel {
            primitives: vec![
                Primitive::Ramp { start: [0.0, 0.0], azimuth_deg: 30.0, angle_deg: 15.0, length: 5.0, hold: true, bounds: None },
                Primitive::Depressions {
                    count: 6,
                    region: Bounds { min: [0.0, -1.0], max: [3.0, 1.0] },
                    radius: [0.4, 0.9],
                    depth: [0.02, 0.06],
                },
            ],
        };
        let t = model.realize(7);
        let h = 1e-6;
        for &(x, y) in &[(0.7, 0.2), (1.3, -0.4), (2.2, 0.5), (2.9, 0.9)] {
            let g = t.gradient(x, y);
            let gx = (t.height(x + h, y) - t.height(x - h, y)) / (2.0 * h);
            let gy = (t.height(x, y + h) - t.height(x, y - h)) / (2.0 * h);
            assert_relative_eq!(g.x, gx, epsilon = 1e-7);
            assert_relative_eq!(g.y, gy, epsilon = 1e-7);
        }
    }

    #[test]
    fn depressions_depend_on_seed_only() {
        let model = TerrainModel {
            primitives: vec![Primitive::Depressions {
                count: 4,
                region: Bounds { min: [0.0, 0.0], max: [2.0, 2.0] },
                radius: [0.3, 0.6],
                depth: [0.05, 0.05],
            }],
        };
        assert_eq!(model.realize(3), model.realize(3));
        assert_ne!(model.realize(3), model.realize(4));
    }

    #[test]
    fn cliff_and_platform() {
        let model = TerrainModel {
            primitives: vec![
                Primitive::Platform { min: [0.0, 0.0], max: [1.0, 1.0], height: 0.6 },
                Primitive::Cliff { point: [5.0, 0.0], azimuth_deg: 0.0, drop: 1.0 },
            ],
        };
        let t = model.realize(0);
        assert_eq!(t.height(0.5, 0.5), 0.6);
        assert_eq!(t.height(1.5, 0.5), 0.0);
        assert_eq!(t.height(5.5, 0.5), -1.0);
        assert_eq!(t.gradient(0.5, 0.5), Vector2::zeros());
    }
}
