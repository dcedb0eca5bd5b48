//! Ray-cast synthetic scans with analytic labels and normals.
//!
//! Every pixel-center ray of a projection model is intersected with a set of
//! planar and box primitives; the nearest hit becomes one point. Because the
//! points lie on pixel-center rays, projecting them reproduces the generating
//! pixel.

use crate::dataset::TrainIndex;
use crate::error::Result;
use crate::projection::{Pixel, PointCloud, SphericalProjectionModel};

/// Axis-aligned box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    fn contains(&self, p: [f64; 3], eps: f64) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] - eps && p[k] <= self.max[k] + eps)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Surface {
    /// Points with `dot(normal, p) = offset`, optionally clipped to a box.
    Plane {
        normal: [f64; 3],
        offset: f64,
        extent: Option<Aabb>,
    },
    /// Solid box seen from outside, or its inner faces if the sensor is inside.
    Cuboid(Aabb),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Primitive {
    pub surface: Surface,
    pub label: TrainIndex,
    pub reflectivity: f32,
}

/// Nearest intersection along a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub distance: f64,
    /// Unit surface normal facing the sensor.
    pub normal: [f64; 3],
    pub label: TrainIndex,
    pub reflectivity: f32,
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = dot(a, a).sqrt();
    a.map(|c| c / n)
}

impl Primitive {
    fn intersect(&self, dir: [f64; 3]) -> Option<(f64, [f64; 3])> {
        match self.surface {
            Surface::Plane {
                normal,
                offset,
                extent,
            } => {
                let denom = dot(normal, dir);
                if denom == 0.0 {
                    return None;
                }
                let t = offset / denom;
                if t <= 0.0 {
                    return None;
                }
                let p = dir.map(|c| c * t);
                if extent.is_some_and(|b| !b.contains(p, 1e-9)) {
                    return None;
                }
                let n = if denom > 0.0 { normal.map(|c| -c) } else { normal };
                Some((t, n))
            }
            Surface::Cuboid(b) => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                let (mut axis_near, mut axis_far) = (0, 0);
                #[allow(clippy::needless_range_loop)]
                for k in 0..3 {
                    if dir[k] == 0.0 {
                        if b.min[k] > 0.0 || b.max[k] < 0.0 {
                            return None;
                        }
                        continue;
                    }
                    let (t0, t1) = (b.min[k] / dir[k], b.max[k] / dir[k]);
                    let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
                    if lo > t_near {
                        t_near = lo;
                        axis_near = k;
                    }
                    if hi < t_far {
                        t_far = hi;
                        axis_far = k;
                    }
                }
                if t_near > t_far || t_far <= 0.0 {
                    return None;
                }
                let (t, axis) = if t_near > 0.0 {
                    (t_near, axis_near)
                } else {
                    (t_far, axis_far)
                };
                let mut n = [0.0; 3];
                n[axis] = -dir[axis].signum();
                Some((t, n))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
    /// Returns beyond this range are dropped.
    pub max_range: f64,
    /// Returns whose `|cos(incidence)|` falls below this are dropped.
    pub min_cos_incidence: f64,
}

/// A generated scan with per-point ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScan {
    pub cloud: PointCloud,
    pub labels: Vec<TrainIndex>,
    /// Analytic sensor-facing unit normal of each point's surface.
    pub normals: Vec<[f64; 3]>,
    /// Pixel whose center ray produced each point.
    pub pixels: Vec<Pixel>,
}

impl Scene {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        Self {
            primitives,
            max_range: 120.0,
            min_cos_incidence: 0.0,
        }
    }

    pub fn cast(&self, dir: [f64; 3]) -> Option<Hit> {
        let dir = normalize(dir);
        let mut best: Option<Hit> = None;
        for prim in &self.primitives {
            let Some((t, normal)) = prim.intersect(dir) else {
                continue;
            };
            if best.is_some_and(|b| b.distance <= t) {
                continue;
            }
            best = Some(Hit {
                distance: t,
                normal,
                label: prim.label,
                reflectivity: prim.reflectivity,
            });
        }
        best.filter(|h| {
            h.distance <= self.max_range && dot(h.normal, dir).abs() >= self.min_cos_incidence
        })
    }

    /// Casts every pixel-center ray of `model`, in row-major pixel order.
    pub fn scan(&self, model: &SphericalProjectionModel) -> Result<SyntheticScan> {
        let n = model.width() * model.height();
        let mut points = Vec::with_capacity(n);
        let mut refl = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut pixels = Vec::with_capacity(n);
        for v in 0..model.height() {
            for u in 0..model.width() {
                let dir = model.ray(u, v)?;
                let Some(hit) = self.cast(dir) else {
                    continue;
                };
                let cos = dot(hit.normal, dir).abs() as f32;
                points.push(dir.map(|c| (c * hit.distance) as f32));
                refl.push((hit.reflectivity * (0.5 + 0.5 * cos)).clamp(0.0, 1.0));
                labels.push(hit.label);
                normals.push(hit.normal);
                pixels.push(Pixel { u, v });
            }
        }
        Ok(SyntheticScan {
            cloud: PointCloud::new(points, refl)?,
            labels,
            normals,
            pixels,
        })
    }
}

/// Infinite plane at perpendicular `distance` from the sensor with the
/// given normal (pointing away from the sensor side is fine, hits are
/// reported sensor-facing).
pub fn plane(normal: [f64; 3], distance: f64, label: TrainIndex) -> Primitive {
    let normal = normalize(normal);
    Primitive {
        surface: Surface::Plane {
            normal,
            offset: distance,
            extent: None,
        },
        label,
        reflectivity: 0.6,
    }
}

/// Labels used by the built-in scenes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SceneLabels {
    pub ground: TrainIndex,
    pub wall: TrainIndex,
    pub object: TrainIndex,
}

/// Wide street: ground 1.8 m below the sensor out to x = +-24 m, building
/// facades 18 m left and 16 m right running along x, and a car-sized box on
/// the road. The ground ends about where grazing returns start failing the
/// range-jump guard.
pub fn urban_block(labels: SceneLabels) -> Scene {
    let ground_z = -1.8;
    let (left, right) = (18.0, -16.0);
    let facade = |y: f64| Primitive {
        surface: Surface::Plane {
            normal: [0.0, 1.0, 0.0],
            offset: y,
            extent: Some(Aabb::new([-40.0, y, ground_z], [40.0, y, ground_z + 12.0])),
        },
        label: labels.wall,
        reflectivity: 0.45,
    };
    let mut scene = Scene::new(vec![
        Primitive {
            surface: Surface::Plane {
                normal: [0.0, 0.0, 1.0],
                offset: ground_z,
                extent: Some(Aabb::new([-24.0, right, ground_z], [24.0, left, ground_z])),
            },
            label: labels.ground,
            reflectivity: 0.2,
        },
        facade(left),
        facade(right),
        Primitive {
            surface: Surface::Cuboid(Aabb::new([12.0, -6.6, ground_z], [16.5, -4.8, ground_z + 1.5])),
            label: labels.object,
            reflectivity: 0.8,
        },
    ]);
    scene.max_range = 60.0;
    scene
}

/// Closed box room around the sensor, so every ray returns: floor 1.8 m
/// below, ceiling 6 m above, walls at mixed distances.
pub fn enclosure(labels: SceneLabels) -> Scene {
    let (min, max) = ([-30.0, -8.0, -1.8], [25.0, 10.0, 6.0]);
    let face = |axis: usize, at: f64, label: TrainIndex| {
        let mut normal = [0.0; 3];
        normal[axis] = 1.0;
        let (mut lo, mut hi) = (min, max);
        lo[axis] = at;
        hi[axis] = at;
        Primitive {
            surface: Surface::Plane {
                normal,
                offset: at,
                extent: Some(Aabb::new(lo, hi)),
            },
            label,
            reflectivity: 0.5,
        }
    };
    let mut prims = vec![face(2, min[2], labels.ground), face(2, max[2], labels.wall)];
    for axis in 0..2 {
        prims.push(face(axis, min[axis], labels.wall));
        prims.push(face(axis, max[axis], labels.wall));
    }
    prims.push(Primitive {
        surface: Surface::Cuboid(Aabb::new([4.0, 2.0, -1.8], [8.0, 4.0, -0.2])),
        label: labels.object,
        reflectivity: 0.9,
    });
    let mut scene = Scene::new(prims);
    scene.max_range = 200.0;
    scene
}

/// One point per pixel at `range(u, v)` along the pixel-center ray.
pub fn ray_grid_cloud(
    model: &SphericalProjectionModel,
    range: impl Fn(usize, usize) -> f64,
) -> Result<PointCloud> {
    let mut points = Vec::with_capacity(model.width() * model.height());
    for v in 0..model.height() {
        for u in 0..model.width() {
            let r = range(u, v);
            points.push(model.ray(u, v)?.map(|c| (c * r) as f32));
        }
    }
    let refl = vec![0.5; points.len()];
    PointCloud::new(points, refl)
}
