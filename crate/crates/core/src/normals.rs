//! Surface normals from forward-difference gradients of a range image.
//!
//! `du(u, v) = P(u + 1, v) - P(u, v)` and `dv(u, v) = P(u, v + 1) - P(u, v)`;
//! the normal is `du x dv` normalized and turned to face the sensor.

use image::{Rgb, RgbImage};

use crate::error::Result;
use crate::projection::RangeImage;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalConfig {
    /// Constant part of the range-jump threshold, meters.
    pub jump_abs: f32,
    /// Range-proportional part of the range-jump threshold.
    pub jump_rel: f32,
    /// Cross-product norms below this (m^2) yield no normal.
    pub min_cross_norm: f64,
}

impl Default for NormalConfig {
    fn default() -> Self {
        Self {
            jump_abs: 0.5,
            jump_rel: 0.03,
            min_cross_norm: 1e-9,
        }
    }
}

impl NormalConfig {
    /// Largest range difference a gradient may bridge at range `r`.
    #[inline]
    pub fn jump_threshold(&self, r: f32) -> f32 {
        self.jump_abs + self.jump_rel * r
    }
}

/// Per-pixel horizontal (`du`) and vertical (`dv`) point differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientImage {
    width: usize,
    height: usize,
    du: Vec<[f32; 3]>,
    dv: Vec<[f32; 3]>,
    du_valid: Vec<bool>,
    dv_valid: Vec<bool>,
}

impl GradientImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn du(&self) -> &[[f32; 3]] {
        &self.du
    }

    pub fn dv(&self) -> &[[f32; 3]] {
        &self.dv
    }

    pub fn du_valid(&self) -> &[bool] {
        &self.du_valid
    }

    pub fn dv_valid(&self) -> &[bool] {
        &self.dv_valid
    }

    /// Both gradients defined at pixel `i`.
    pub fn valid(&self, i: usize) -> bool {
        self.du_valid[i] && self.dv_valid[i]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalImage {
    width: usize,
    height: usize,
    normals: Vec<[f32; 3]>,
    valid: Vec<bool>,
}

impl NormalImage {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            normals: vec![[0.0; 3]; width * height],
            valid: vec![false; width * height],
        }
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

    pub fn normals(&self) -> &[[f32; 3]] {
        &self.normals
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn normal(&self, u: usize, v: usize) -> Option<[f32; 3]> {
        let i = v * self.width + u;
        self.valid[i].then(|| self.normals[i])
    }
}

#[inline]
fn sub(a: [f32; 3], b: [f32; 3]) -> [f32; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn directional_gradients(image: &RangeImage) -> GradientImage {
    directional_gradients_with(image, &NormalConfig::default())
}

pub fn directional_gradients_with(image: &RangeImage, cfg: &NormalConfig) -> GradientImage {
    let (w, h) = image.dims();
    let n = w * h;
    let xyz = image.xyz();
    let range = image.range();
    let valid = image.valid();
    let mut out = GradientImage {
        width: w,
        height: h,
        du: vec![[0.0; 3]; n],
        dv: vec![[0.0; 3]; n],
        du_valid: vec![false; n],
        dv_valid: vec![false; n],
    };
    let connected =
        |c: usize, nb: usize| valid[nb] && (range[nb] - range[c]).abs() <= cfg.jump_threshold(range[c]);

    for v in 0..h {
        let row = v * w;
        for u in 0..w {
            let c = row + u;
            if !valid[c] {
                continue;
            }
            let right = if u + 1 < w {
                Some(c + 1)
            } else if image.azimuth_wraps() {
                Some(row)
            } else {
                None
            };
            if let Some(nb) = right.filter(|&nb| connected(c, nb)) {
                out.du[c] = sub(xyz[nb], xyz[c]);
                out.du_valid[c] = true;
            }
            if v + 1 < h {
                let nb = c + w;
                if connected(c, nb) {
                    out.dv[c] = sub(xyz[nb], xyz[c]);
                    out.dv_valid[c] = true;
                }
            }
        }
    }
    out
}

pub fn compute_normals(image: &RangeImage) -> NormalImage {
    compute_normals_with(image, &NormalConfig::default())
}

/// Same result as [`normals_from_gradients`] over [`directional_gradients_with`],
/// in one pass without materializing the gradients.
pub fn compute_normals_with(image: &RangeImage, cfg: &NormalConfig) -> NormalImage {
    let (w, h) = image.dims();
    let xyz = image.xyz();
    let range = image.range();
    let valid = image.valid();
    let mut out = NormalImage::empty(w, h);
    let connected =
        |c: usize, nb: usize| valid[nb] && (range[nb] - range[c]).abs() <= cfg.jump_threshold(range[c]);
    for v in 0..h.saturating_sub(1) {
        let row = v * w;
        for u in 0..w {
            let c = row + u;
            let right = if u + 1 < w {
                c + 1
            } else if image.azimuth_wraps() {
                row
            } else {
                continue;
            };
            if !valid[c] || !connected(c, right) || !connected(c, c + w) {
                continue;
            }
            if let Some(n) = oriented_normal(xyz[c], sub(xyz[right], xyz[c]), sub(xyz[c + w], xyz[c]), cfg) {
                out.normals[c] = n;
                out.valid[c] = true;
            }
        }
    }
    out
}

#[inline]
fn oriented_normal(p: [f32; 3], du: [f32; 3], dv: [f32; 3], cfg: &NormalConfig) -> Option<[f32; 3]> {
    let a = du.map(f64::from);
    let b = dv.map(f64::from);
    let cross = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    let norm = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    if norm.is_nan() || norm < cfg.min_cross_norm {
        return None;
    }
    let p = p.map(f64::from);
    let facing = cross[0] * p[0] + cross[1] * p[1] + cross[2] * p[2];
    let scale = if facing > 0.0 { -1.0 / norm } else { 1.0 / norm };
    Some(cross.map(|c| (c * scale) as f32))
}

/// Normalized `du x dv`, oriented so that `dot(n, -p) >= 0`.
pub fn normals_from_gradients(
    image: &RangeImage,
    grads: &GradientImage,
    cfg: &NormalConfig,
) -> NormalImage {
    let (w, h) = image.dims();
    let mut out = NormalImage::empty(w, h);
    for i in 0..w * h {
        if !grads.valid(i) {
            continue;
        }
        if let Some(n) = oriented_normal(image.xyz()[i], grads.du[i], grads.dv[i], cfg) {
            out.normals[i] = n;
            out.valid[i] = true;
        }
    }
    out
}

/// Maps each component `c` to `round(255 * (c + 1) / 2)` (half-up); invalid
/// pixels are black.
pub fn normals_to_rgb(normals: &NormalImage) -> RgbImage {
    let mut img = RgbImage::new(normals.width as u32, normals.height as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        if normals.valid[i] {
            *px = Rgb(normals.normals[i].map(normal_component_to_u8));
        }
    }
    img
}

#[inline]
fn normal_component_to_u8(c: f32) -> u8 {
    (255.0 * (f64::from(c) + 1.0) / 2.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Fails unless the image dims match; used by consumers that pair normals with
/// their range image.
pub(crate) fn check_aligned(image: &RangeImage, normals: &NormalImage) -> Result<()> {
    if image.dims() != normals.dims() {
        return Err(crate::Error::DimensionMismatch {
            left: image.dims(),
            right: normals.dims(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(w: usize, h: usize, f: impl Fn(usize, usize) -> Option<[f32; 3]>) -> RangeImage {
        let px: Vec<_> = (0..h)
            .flat_map(|v| (0..w).map(move |u| (u, v)))
            .map(|(u, v)| f(u, v).map(|p| (p, 0.5)))
            .collect();
        RangeImage::from_pixels(w, h, true, &px).unwrap()
    }

    #[test]
    fn constant_image_has_zero_gradients() {
        let img = grid(6, 4, |_, _| Some([3.0, 1.0, -1.0]));
        let g = directional_gradients(&img);
        for i in 0..24 {
            assert!(g.du_valid()[i]);
            assert_eq!(g.du()[i], [0.0; 3]);
            assert_eq!(g.dv()[i], [0.0; 3]);
        }
        // Last row has no lower neighbor.
        assert!((18..24).all(|i| !g.dv_valid()[i]));
        assert!((0..18).all(|i| g.dv_valid()[i]));
    }

    #[test]
    fn linear_ramp_gradient() {
        let img = RangeImage::from_pixels(
            5,
            3,
            false,
            &(0..15)
                .map(|i| Some(([10.0 + 0.1 * (i % 5) as f32, 2.0, 0.0], 0.0)))
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let g = directional_gradients(&img);
        for v in 0..3 {
            for u in 0..4 {
                let d = g.du()[v * 5 + u];
                assert!((d[0] - 0.1).abs() < 1e-5, "{d:?}");
                assert_eq!(&d[1..], &[0.0, 0.0]);
            }
            // No wrap on a partial-azimuth image.
            assert!(!g.du_valid()[v * 5 + 4]);
        }
    }

    #[test]
    fn last_column_wraps_to_first() {
        let img = grid(4, 2, |u, _| Some([5.0, u as f32 * 0.1, 0.0]));
        let g = directional_gradients(&img);
        assert!(g.du_valid()[3]);
        let d = g.du()[3];
        assert_eq!(d, sub([5.0, 0.0, 0.0], [5.0, 0.3, 0.0]));
    }

    #[test]
    fn range_jump_breaks_gradient() {
        let img = grid(4, 2, |u, _| {
            let r = if u == 2 { 20.0 } else { 5.0 };
            Some([r, u as f32 * 0.05, 0.0])
        });
        let g = directional_gradients(&img);
        assert!(g.du_valid()[0]);
        assert!(!g.du_valid()[1]);
        assert!(!g.du_valid()[2]);
        assert!(g.du_valid()[3]);
    }

    #[test]
    fn invalid_neighbor_breaks_gradient() {
        let img = grid(4, 3, |u, v| (u != 1 || v != 1).then_some([5.0, u as f32, v as f32]));
        let g = directional_gradients(&img);
        assert!(!g.du_valid()[4]);
        assert!(!g.dv_valid()[1]);
        assert!(!g.du_valid()[5] && !g.dv_valid()[5]);
    }

    #[test]
    fn collinear_gradients_are_degenerate() {
        // All points on one line: du parallel to dv.
        let img = grid(4, 4, |u, v| Some([5.0 + 0.01 * (u + v) as f32, 0.0, 0.0]));
        let n = compute_normals(&img);
        assert_eq!(n.valid_count(), 0);
        assert!(n.normals().iter().all(|c| *c == [0.0; 3]));
    }

    #[test]
    fn wall_normal_faces_sensor() {
        let img = grid(8, 8, |u, v| Some([4.0, u as f32 * 0.1, -(v as f32) * 0.1]));
        let n = compute_normals(&img);
        let nv = n.normal(2, 2).unwrap();
        assert_eq!(nv, [-1.0, 0.0, 0.0]);
    }

    #[test]
    fn rgb_mapping() {
        let mut n = NormalImage::empty(3, 1);
        n.normals[0] = [0.0, 0.0, 1.0];
        n.valid[0] = true;
        n.normals[1] = [-1.0, 0.0, 0.0];
        n.valid[1] = true;
        n.normals[2] = [0.3, 0.3, 0.3];
        let rgb = normals_to_rgb(&n);
        assert_eq!(rgb.get_pixel(0, 0).0, [128, 128, 255]);
        assert_eq!(rgb.get_pixel(1, 0).0, [0, 128, 128]);
        assert_eq!(rgb.get_pixel(2, 0).0, [0, 0, 0]);
    }

    #[test]
    fn fused_pass_matches_two_stage() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for wraps in [false, true] {
            let px: Vec<_> = (0..40 * 12)
                .map(|_| {
                    rng.gen_bool(0.8).then(|| {
                        let p = [rng.gen_range(2.0f32..4.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                        (p, 0.5)
                    })
                })
                .collect();
            let img = RangeImage::from_pixels(40, 12, wraps, &px).unwrap();
            let cfg = NormalConfig::default();
            let two = normals_from_gradients(&img, &directional_gradients_with(&img, &cfg), &cfg);
            let fused = compute_normals_with(&img, &cfg);
            assert_eq!(two.valid, fused.valid);
            let bits = |n: &NormalImage| n.normals.iter().flat_map(|c| c.map(f32::to_bits)).collect::<Vec<_>>();
            assert_eq!(bits(&two), bits(&fused));
            assert!(fused.valid_count() > 0);
        }
    }
}
