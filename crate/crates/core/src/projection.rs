//! Spherical projection of point clouds into range images.
//!
//! Azimuth is `atan2(y, x)` in `(-pi, pi]`. Column 0 starts at `phi = -pi`
//! (behind the vehicle) and columns increase counterclockwise seen from above.
//! Inclination is measured from the positive z-axis, so row 0 is the topmost
//! beam. Pixel indices are obtained with `floor`, never rounding.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw sensor payload: Cartesian points with reflectivity in `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<[f32; 3]>,
    reflectivity: Vec<f32>,
}

impl PointCloud {
    pub fn new(points: Vec<[f32; 3]>, reflectivity: Vec<f32>) -> Result<Self> {
        if points.len() != reflectivity.len() {
            return Err(Error::CountMismatch {
                expected: points.len(),
                found: reflectivity.len(),
            });
        }
        for (record, (p, r)) in points.iter().zip(&reflectivity).enumerate() {
            if !(p.iter().all(|c| c.is_finite()) && r.is_finite()) {
                return Err(Error::NonFinite { record });
            }
            if !(0.0..=1.0).contains(r) {
                return Err(Error::InvalidArgument(format!(
                    "reflectivity {r} of point {record} outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            points,
            reflectivity,
        })
    }

    /// Caller guarantees what [`PointCloud::new`] checks.
    pub(crate) fn from_checked(points: Vec<[f32; 3]>, reflectivity: Vec<f32>) -> Self {
        debug_assert_eq!(points.len(), reflectivity.len());
        Self {
            points,
            reflectivity,
        }
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    pub fn reflectivity(&self) -> &[f32] {
        &self.reflectivity
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Azimuth, inclination and range of a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphericalCoords {
    /// Azimuth in `(-pi, pi]`.
    pub phi: f64,
    /// Inclination from +z in `[0, pi]`.
    pub theta: f64,
    pub r: f64,
}

impl SphericalCoords {
    pub fn to_cartesian(&self) -> [f64; 3] {
        let (sin_t, cos_t) = self.theta.sin_cos();
        let (sin_p, cos_p) = self.phi.sin_cos();
        [
            self.r * sin_t * cos_p,
            self.r * sin_t * sin_p,
            self.r * cos_t,
        ]
    }
}

pub fn cartesian_to_spherical(point: [f64; 3]) -> Result<SphericalCoords> {
    let [x, y, z] = point;
    if !(x.is_finite() && y.is_finite() && z.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite point {point:?}"
        )));
    }
    if x == 0.0 && y == 0.0 && z == 0.0 {
        return Err(Error::Degenerate("the origin has no direction"));
    }
    Ok(spherical_unchecked(x, y, z))
}

/// `floor(x)` as an integer; `f64::floor` is a libm call on baseline x86-64.
#[inline]
fn floor_index(x: f64) -> Option<i64> {
    if x.is_nan() || x.abs() >= 1e15 {
        return None;
    }
    let t = x as i64;
    Some(if t as f64 > x { t - 1 } else { t })
}

#[inline]
fn spherical_unchecked(x: f64, y: f64, z: f64) -> SphericalCoords {
    // Plain sqrt instead of hypot: coordinates are far from overflow and
    // hypot is several times slower.
    let planar_sq = x * x + y * y;
    let planar = planar_sq.sqrt();
    let mut phi = y.atan2(x);
    if phi == -PI {
        phi = PI;
    }
    SphericalCoords {
        phi,
        theta: planar.atan2(z),
        r: (planar_sq + z * z).sqrt(),
    }
}

/// Integer pixel position, `u` is the column and `v` the row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pixel {
    pub u: usize,
    pub v: usize,
}

/// Sensors with built-in projection presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SensorPreset {
    /// Ouster OS2-128, 128x2048, elevation +-11.25 degrees.
    #[serde(rename = "os2-128")]
    Os2_128,
    /// Velodyne HDL-64E at 64x512, elevation +3 to -25 degrees.
    #[serde(rename = "hdl64-512")]
    Hdl64_512,
    /// Velodyne HDL-64E at 64x2048.
    #[serde(rename = "hdl64-2048")]
    Hdl64_2048,
}

impl SensorPreset {
    pub const ALL: [SensorPreset; 3] = [Self::Os2_128, Self::Hdl64_512, Self::Hdl64_2048];

    pub fn name(self) -> &'static str {
        match self {
            Self::Os2_128 => "os2-128",
            Self::Hdl64_512 => "hdl64-512",
            Self::Hdl64_2048 => "hdl64-2048",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

/// The affine discretization from `(phi, theta)` to pixel coordinates:
/// `u = phi / delta_phi + c_phi`, `v = theta / delta_theta + c_theta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphericalProjectionModel {
    delta_phi: f64,
    delta_theta: f64,
    c_phi: f64,
    c_theta: f64,
    width: usize,
    height: usize,
}

impl SphericalProjectionModel {
    pub fn new(
        delta_phi: f64,
        delta_theta: f64,
        c_phi: f64,
        c_theta: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let finite = [delta_phi, delta_theta, c_phi, c_theta]
            .iter()
            .all(|v| v.is_finite());
        if !finite || delta_phi <= 0.0 || delta_theta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "projection steps must be finite and positive (got {delta_phi}, {delta_theta})"
            )));
        }
        if width < 2 || height < 2 {
            return Err(Error::InvalidArgument(format!(
                "image must be at least 2x2 (got {width}x{height})"
            )));
        }
        Ok(Self {
            delta_phi,
            delta_theta,
            c_phi,
            c_theta,
            width,
            height,
        })
    }

    /// Full 360 degree azimuth sweep with the given elevation limits in
    /// degrees above (positive) and below (negative) the horizon.
    pub fn full_turn(
        width: usize,
        height: usize,
        elevation_max_deg: f64,
        elevation_min_deg: f64,
    ) -> Result<Self> {
        if elevation_max_deg <= elevation_min_deg
            || elevation_max_deg > 90.0
            || elevation_min_deg < -90.0
        {
            return Err(Error::InvalidArgument(format!(
                "elevation span [{elevation_min_deg}, {elevation_max_deg}] is not a valid interval"
            )));
        }
        let theta_min = (90.0 - elevation_max_deg).to_radians();
        let theta_max = (90.0 - elevation_min_deg).to_radians();
        Self::from_field_of_view(width, height, -PI, PI, theta_min, theta_max)
    }

    /// Maps `[phi_min, phi_max)` onto `[0, width)` and `[theta_min, theta_max)`
    /// onto `[0, height)`.
    pub fn from_field_of_view(
        width: usize,
        height: usize,
        phi_min: f64,
        phi_max: f64,
        theta_min: f64,
        theta_max: f64,
    ) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidArgument(format!(
                "image must be at least 2x2 (got {width}x{height})"
            )));
        }
        let delta_phi = (phi_max - phi_min) / width as f64;
        let delta_theta = (theta_max - theta_min) / height as f64;
        Self::new(
            delta_phi,
            delta_theta,
            -phi_min / delta_phi,
            -theta_min / delta_theta,
            width,
            height,
        )
    }

    pub fn preset(sensor: SensorPreset) -> Self {
        let built = match sensor {
            SensorPreset::Os2_128 => Self::full_turn(2048, 128, 11.25, -11.25),
            SensorPreset::Hdl64_512 => Self::full_turn(512, 64, 3.0, -25.0),
            SensorPreset::Hdl64_2048 => Self::full_turn(2048, 64, 3.0, -25.0),
        };
        built.expect("presets are valid models")
    }

    pub fn delta_phi(&self) -> f64 {
        self.delta_phi
    }

    pub fn delta_theta(&self) -> f64 {
        self.delta_theta
    }

    pub fn c_phi(&self) -> f64 {
        self.c_phi
    }

    pub fn c_theta(&self) -> f64 {
        self.c_theta
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// True when the columns cover the whole azimuth circle, in which case
    /// column indices wrap and `phi = pi` lands in column 0.
    pub fn is_full_turn(&self) -> bool {
        (self.width as f64 * self.delta_phi - TAU).abs() <= 1e-9 * TAU
    }

    /// Pixel hit by a direction, or `None` outside the field of view.
    pub fn project(&self, s: &SphericalCoords) -> Option<Pixel> {
        let v = floor_index(s.theta / self.delta_theta + self.c_theta)?;
        if v < 0 || v >= self.height as i64 {
            return None;
        }
        let mut u = floor_index(s.phi / self.delta_phi + self.c_phi)?;
        let w = self.width as i64;
        if u < 0 || u >= w {
            if !self.is_full_turn() {
                return None;
            }
            u = u.rem_euclid(w);
        }
        Some(Pixel {
            u: u as usize,
            v: v as usize,
        })
    }

    /// Angles of the ray through the center of pixel `(u, v)`.
    pub fn pixel_center(&self, u: usize, v: usize) -> Result<(f64, f64)> {
        if u >= self.width || v >= self.height {
            return Err(Error::PixelOutOfBounds {
                u: u as i64,
                v: v as i64,
                width: self.width,
                height: self.height,
            });
        }
        let phi = (u as f64 + 0.5 - self.c_phi) * self.delta_phi;
        let theta = (v as f64 + 0.5 - self.c_theta) * self.delta_theta;
        Ok((phi, theta))
    }

    /// Unit direction of the pixel-center ray.
    pub fn ray(&self, u: usize, v: usize) -> Result<[f64; 3]> {
        let (phi, theta) = self.pixel_center(u, v)?;
        Ok(SphericalCoords { phi, theta, r: 1.0 }.to_cartesian())
    }
}

/// Free-function form of [`SphericalProjectionModel::project`].
pub fn project_point(s: &SphericalCoords, model: &SphericalProjectionModel) -> Option<Pixel> {
    model.project(s)
}

pub fn default_model(sensor: SensorPreset) -> SphericalProjectionModel {
    SphericalProjectionModel::preset(sensor)
}

/// Cartesian point at `range` along the center ray of pixel `(u, v)`.
pub fn unproject_pixel(
    u: usize,
    v: usize,
    range: f64,
    model: &SphericalProjectionModel,
) -> Result<[f64; 3]> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "range must be positive and finite (got {range})"
        )));
    }
    let (phi, theta) = model.pixel_center(u, v)?;
    Ok(SphericalCoords { phi, theta, r: range }.to_cartesian())
}

/// Model description accepted from configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelConfig {
    Preset {
        preset: SensorPreset,
    },
    FullTurn {
        width: usize,
        height: usize,
        elevation_max_deg: f64,
        elevation_min_deg: f64,
    },
    Explicit {
        delta_phi: f64,
        delta_theta: f64,
        c_phi: f64,
        c_theta: f64,
        width: usize,
        height: usize,
    },
}

impl ModelConfig {
    pub fn build(&self) -> Result<SphericalProjectionModel> {
        match *self {
            ModelConfig::Preset { preset } => Ok(SphericalProjectionModel::preset(preset)),
            ModelConfig::FullTurn {
                width,
                height,
                elevation_max_deg,
                elevation_min_deg,
            } => SphericalProjectionModel::full_turn(
                width,
                height,
                elevation_max_deg,
                elevation_min_deg,
            ),
            ModelConfig::Explicit {
                delta_phi,
                delta_theta,
                c_phi,
                c_theta,
                width,
                height,
            } => SphericalProjectionModel::new(delta_phi, delta_theta, c_phi, c_theta, width, height),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("model config: {e}")))
    }
}

/// Multi-channel staggered spherical image, row-major with `index = v * width + u`.
///
/// Invalid pixels hold zeros in every channel; the explicit mask is the only
/// source of truth for validity.
#[derive(Clone, Debug, PartialEq)]
pub struct RangeImage {
    width: usize,
    height: usize,
    azimuth_wraps: bool,
    xyz: Vec<[f32; 3]>,
    range: Vec<f32>,
    reflectivity: Vec<f32>,
    valid: Vec<bool>,
    source_index: Vec<u32>,
}

impl RangeImage {
    pub fn empty(width: usize, height: usize, azimuth_wraps: bool) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            azimuth_wraps,
            xyz: vec![[0.0; 3]; n],
            range: vec![0.0; n],
            reflectivity: vec![0.0; n],
            valid: vec![false; n],
            source_index: vec![0; n],
        }
    }

    /// Builds an image directly from per-pixel samples; `None` marks an empty
    /// pixel. Source indices are set to the pixel index.
    pub fn from_pixels(
        width: usize,
        height: usize,
        azimuth_wraps: bool,
        pixels: &[Option<([f32; 3], f32)>],
    ) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::CountMismatch {
                expected: width * height,
                found: pixels.len(),
            });
        }
        let mut image = Self::empty(width, height, azimuth_wraps);
        for (i, px) in pixels.iter().enumerate() {
            if let Some((p, refl)) = *px {
                if !(p.iter().all(|c| c.is_finite()) && refl.is_finite()) {
                    return Err(Error::NonFinite { record: i });
                }
                image.set(i, p, norm3(p), refl, i as u32);
            }
        }
        Ok(image)
    }

    #[inline]
    fn set(&mut self, i: usize, p: [f32; 3], range: f32, refl: f32, src: u32) {
        self.xyz[i] = p;
        self.range[i] = range;
        self.reflectivity[i] = refl;
        self.valid[i] = true;
        self.source_index[i] = src;
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn azimuth_wraps(&self) -> bool {
        self.azimuth_wraps
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    pub fn xyz(&self) -> &[[f32; 3]] {
        &self.xyz
    }

    pub fn range(&self) -> &[f32] {
        &self.range
    }

    pub fn reflectivity(&self) -> &[f32] {
        &self.reflectivity
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Index into the originating cloud of the point stored at pixel `i`.
    pub fn source_index(&self, i: usize) -> Option<usize> {
        self.valid[i].then(|| self.source_index[i] as usize)
    }

    pub fn point(&self, u: usize, v: usize) -> Option<[f32; 3]> {
        let i = self.index(u, v);
        self.valid[i].then(|| self.xyz[i])
    }
}

#[inline]
fn norm3(p: [f32; 3]) -> f32 {
    let [x, y, z] = p.map(f64::from);
    (x * x + y * y + z * z).sqrt() as f32
}

/// Rasterizes a cloud into a range image.
///
/// On pixel collisions the nearest point wins; exact range ties keep the lower
/// source index. Points exactly at the origin are skipped.
/// Upper bound on `|atan2_approx - atan2|` in radians. The polynomial is
/// accurate to about 5e-16; the bound leaves three orders of magnitude.
const ATAN_APPROX_ERROR: f64 = 1e-12;

const ATAN_POLY: [f64; 10] = [
    0.9999999999999999,
    -0.3333333333323762,
    0.19999999980208094,
    -0.14285712752620902,
    0.11111051285842655,
    -0.09089567758384892,
    0.07673887743499251,
    -0.06507922780650129,
    0.05030576147882384,
    -0.025389583950450767,
];

/// Polynomial atan2 for finite input with `(y, x) != (0, 0)`. Written with
/// selects only so that batches of it vectorize.
#[inline(always)]
fn atan2_approx(y: f64, x: f64) -> f64 {
    let (ax, ay) = (x.abs(), y.abs());
    let swap = ay > ax;
    let num = if swap { ax } else { ay };
    let den = if swap { ay } else { ax };
    // atan(a) = pi/4 + atan((a - 1) / (a + 1)) keeps the argument below
    // tan(pi/8); with a = num / den that is a single division either way.
    let big = num > (std::f64::consts::SQRT_2 - 1.0) * den;
    let t = if big { num - den } else { num } / if big { num + den } else { den };
    let base = if big { FRAC_PI_4 } else { 0.0 };
    let t2 = t * t;
    let poly = ATAN_POLY.iter().rev().fold(0.0, |acc, &c| acc * t2 + c);
    let r = base + t * poly;
    let r = if swap { FRAC_PI_2 - r } else { r };
    let r = if x < 0.0 { PI - r } else { r };
    if y < 0.0 {
        -r
    } else {
        r
    }
}

const PROJECT_BATCH: usize = 64;

/// Pixel lookup through [`atan2_approx`]. It defers (returns `None`) whenever
/// an approximate fractional index lies within the error bound of a cell
/// edge, so every answer it does give equals [`SphericalProjectionModel::project`].
struct FastProjector<'a> {
    model: &'a SphericalProjectionModel,
    inv_delta_phi: f64,
    inv_delta_theta: f64,
    margin_u: f64,
    margin_v: f64,
}

/// Fractional column/row indices and ranges of one batch of points.
struct IndexBatch {
    fu: [f64; PROJECT_BATCH],
    fv: [f64; PROJECT_BATCH],
    r: [f64; PROJECT_BATCH],
}

impl<'a> FastProjector<'a> {
    fn new(model: &'a SphericalProjectionModel) -> Self {
        // Angle error plus a few ulps of the scaled index, which also covers
        // multiplying by a rounded reciprocal instead of dividing.
        let slack = |delta: f64, extent: f64| {
            2.0 * ATAN_APPROX_ERROR / delta + 16.0 * f64::EPSILON * (extent + 1.0)
        };
        let extent_u = (PI / model.delta_phi).abs() + model.c_phi.abs();
        let extent_v = (PI / model.delta_theta).abs() + model.c_theta.abs();
        Self {
            inv_delta_phi: 1.0 / model.delta_phi,
            inv_delta_theta: 1.0 / model.delta_theta,
            margin_u: slack(model.delta_phi.abs(), extent_u),
            margin_v: slack(model.delta_theta.abs(), extent_v),
            model,
        }
    }

    /// Fills `out` for `points` (at most one batch). NaN marks an index the
    /// exact path has to decide: straight up/down has no azimuth, and the
    /// exact path folds -pi onto pi.
    #[inline]
    fn indices(&self, points: &[[f32; 3]], out: &mut IndexBatch) {
        let (c_phi, c_theta) = (self.model.c_phi, self.model.c_theta);
        for (k, p) in points.iter().enumerate().take(PROJECT_BATCH) {
            let [x, y, z] = p.map(f64::from);
            let planar_sq = x * x + y * y;
            let planar = planar_sq.sqrt();
            out.r[k] = (planar_sq + z * z).sqrt();
            let fv = atan2_approx(planar, z) * self.inv_delta_theta + c_theta;
            out.fv[k] = if planar == 0.0 { f64::NAN } else { fv };
            let phi = atan2_approx(y, x);
            let fu = phi * self.inv_delta_phi + c_phi;
            out.fu[k] = if phi.abs() >= PI - 2.0 * ATAN_APPROX_ERROR {
                f64::NAN
            } else {
                fu
            };
        }
    }

    /// `Some(answer)` when decidable, `None` means "use the exact path".
    #[inline]
    fn decide(&self, fu: f64, fv: f64) -> Option<Option<Pixel>> {
        let m = self.model;
        let v = floor_index(fv)?;
        if fv - v as f64 <= self.margin_v || (v + 1) as f64 - fv <= self.margin_v {
            return None;
        }
        if v < 0 || v >= m.height as i64 {
            return Some(None);
        }
        let mut u = floor_index(fu)?;
        if fu - u as f64 <= self.margin_u || (u + 1) as f64 - fu <= self.margin_u {
            return None;
        }
        let w = m.width as i64;
        if u < 0 || u >= w {
            if !m.is_full_turn() {
                return Some(None);
            }
            u = u.rem_euclid(w);
        }
        Some(Some(Pixel {
            u: u as usize,
            v: v as usize,
        }))
    }
}

pub fn build_range_image(
    cloud: &PointCloud,
    model: &SphericalProjectionModel,
) -> Result<RangeImage> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("point cloud has no points"));
    }
    if cloud.len() > u32::MAX as usize {
        return Err(Error::InvalidArgument(format!(
            "cloud of {} points exceeds the index range",
            cloud.len()
        )));
    }
    let mut image = RangeImage::empty(model.width(), model.height(), model.is_full_turn());
    let fast = FastProjector::new(model);
    let mut batch = IndexBatch {
        fu: [0.0; PROJECT_BATCH],
        fv: [0.0; PROJECT_BATCH],
        r: [0.0; PROJECT_BATCH],
    };
    let points = cloud.points().chunks(PROJECT_BATCH);
    let refls = cloud.reflectivity().chunks(PROJECT_BATCH);
    for (chunk, (pts, refl)) in points.zip(refls).enumerate() {
        fast.indices(pts, &mut batch);
        for (k, (&p, &refl)) in pts.iter().zip(refl).enumerate() {
            let [x, y, z] = p.map(f64::from);
            if x == 0.0 && y == 0.0 && z == 0.0 {
                continue;
            }
            let px = match fast.decide(batch.fu[k], batch.fv[k]) {
                Some(px) => px,
                None => model.project(&spherical_unchecked(x, y, z)),
            };
            let Some(px) = px else {
                continue;
            };
            let idx = image.index(px.u, px.v);
            let range = batch.r[k] as f32;
            let i = chunk * PROJECT_BATCH + k;
            // Ascending source order means an equal range never displaces the holder.
            if !image.valid[idx] || range < image.range[idx] {
                image.set(idx, p, range, refl, i as u32);
            }
        }
    }
    Ok(image)
}
