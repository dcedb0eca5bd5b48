//! 8-bit image rendering of range-image channels, labels and class statistics.

use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::dataset::{ClassDistribution, ClassSchema, LabelImage};
use crate::error::{Error, Result};
use crate::normals::{normals_to_rgb, NormalImage};
use crate::projection::RangeImage;

/// Reflectivity as `round(255 * r)`; empty pixels are black.
pub fn reflectivity_to_gray(image: &RangeImage) -> GrayImage {
    let mut out = GrayImage::new(image.width() as u32, image.height() as u32);
    for (i, px) in out.pixels_mut().enumerate() {
        if image.valid()[i] {
            let r = f64::from(image.reflectivity()[i]).clamp(0.0, 1.0);
            *px = Luma([(255.0 * r + 0.5).floor() as u8]);
        }
    }
    out
}

/// Label colors from the schema; ignored and invalid pixels are black.
pub fn labels_to_rgb(labels: &LabelImage, schema: &ClassSchema) -> RgbImage {
    let mut out = RgbImage::new(labels.width() as u32, labels.height() as u32);
    for (i, px) in out.pixels_mut().enumerate() {
        if labels.valid()[i] {
            if let Some(c) = schema.class_color(labels.labels()[i]) {
                *px = Rgb(c);
            }
        }
    }
    out
}

/// Stacks equal-width panels top to bottom.
pub fn stack_vertical(panels: &[RgbImage]) -> Result<RgbImage> {
    let Some(first) = panels.first() else {
        return Err(Error::EmptyInput("no panels to stack"));
    };
    let width = first.width();
    if let Some(p) = panels.iter().find(|p| p.width() != width) {
        return Err(Error::DimensionMismatch {
            left: (width as usize, first.height() as usize),
            right: (p.width() as usize, p.height() as usize),
        });
    }
    let height = panels.iter().map(|p| p.height()).sum();
    let mut out = RgbImage::new(width, height);
    let mut y0 = 0;
    for p in panels {
        image::imageops::replace(&mut out, p, 0, i64::from(y0));
        y0 += p.height();
    }
    Ok(out)
}

/// Reflectivity, normals and labels panels in that order.
pub struct ScanPanels {
    pub reflectivity: GrayImage,
    pub normals: RgbImage,
    pub labels: RgbImage,
}

impl ScanPanels {
    pub fn render(
        image: &RangeImage,
        normals: &NormalImage,
        labels: &LabelImage,
        schema: &ClassSchema,
    ) -> Self {
        Self {
            reflectivity: reflectivity_to_gray(image),
            normals: normals_to_rgb(normals),
            labels: labels_to_rgb(labels, schema),
        }
    }

    pub fn stacked(&self) -> RgbImage {
        let gray = image::DynamicImage::ImageLuma8(self.reflectivity.clone()).to_rgb8();
        stack_vertical(&[gray, self.normals.clone(), self.labels.clone()])
            .expect("panels share the image width")
    }
}

pub fn save_png(path: impl AsRef<Path>, img: &impl PngEncodable) -> Result<()> {
    let path = path.as_ref();
    img.save_png(path).map_err(|e| e.in_file(path))
}

/// Images that can be written as PNG.
pub trait PngEncodable {
    fn save_png(&self, path: &Path) -> Result<()>;
}

impl PngEncodable for RgbImage {
    fn save_png(&self, path: &Path) -> Result<()> {
        Ok(self.save_with_format(path, image::ImageFormat::Png)?)
    }
}

impl PngEncodable for GrayImage {
    fn save_png(&self, path: &Path) -> Result<()> {
        Ok(self.save_with_format(path, image::ImageFormat::Png)?)
    }
}

const CHART_BAR_WIDTH: u32 = 24;
const CHART_GAP: u32 = 6;
const CHART_HEIGHT: u32 = 240;
const CHART_MARGIN: u32 = 10;

/// Bar chart of class counts on a log10 y-axis, bars in class colors.
///
/// Bar height is proportional to `log10(count)` relative to the largest
/// decade; empty classes draw no bar. Horizontal gray lines mark decades.
pub fn distribution_chart(dist: &ClassDistribution, schema: &ClassSchema) -> RgbImage {
    let n = dist.counts().len() as u32;
    let width = 2 * CHART_MARGIN + n * CHART_BAR_WIDTH + n.saturating_sub(1) * CHART_GAP;
    let height = CHART_HEIGHT + 2 * CHART_MARGIN;
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let max = dist.counts().iter().copied().max().unwrap_or(0);
    if max == 0 {
        return img;
    }
    let decades = ((max as f64).log10().ceil()).max(1.0);
    let baseline = CHART_MARGIN + CHART_HEIGHT;
    for d in 0..=decades as u32 {
        let y = baseline - (f64::from(d) / decades * f64::from(CHART_HEIGHT)) as u32;
        for x in 0..width {
            img.put_pixel(x, y.min(height - 1), Rgb([200, 200, 200]));
        }
    }
    for (k, &count) in dist.counts().iter().enumerate() {
        if count == 0 {
            continue;
        }
        // log10(1) = 0 would vanish; give single counts a one-pixel bar.
        let frac = (count as f64).log10() / decades;
        let bar = ((frac * f64::from(CHART_HEIGHT)).round() as u32).clamp(1, CHART_HEIGHT);
        let color = Rgb(schema.class_color(k as u16).unwrap_or([0, 0, 0]));
        let x0 = CHART_MARGIN + k as u32 * (CHART_BAR_WIDTH + CHART_GAP);
        for x in x0..x0 + CHART_BAR_WIDTH {
            for y in baseline - bar..baseline {
                img.put_pixel(x, y, color);
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gray_mapping() {
        let img = RangeImage::from_pixels(
            3,
            1,
            false,
            &[Some(([1.0, 0.0, 0.0], 1.0)), Some(([1.0, 0.0, 0.0], 0.5)), None],
        )
        .unwrap();
        let g = reflectivity_to_gray(&img);
        assert_eq!(g.as_raw(), &[255, 128, 0]);
    }

    #[test]
    fn label_colors() {
        let s = ClassSchema::semantic_thab();
        let road = s.class_index("road").unwrap();
        let li = LabelImage::new(3, 1, vec![road, 255, 0], vec![true, true, false], 255).unwrap();
        let rgb = labels_to_rgb(&li, &s);
        assert_eq!(rgb.get_pixel(0, 0).0, s.class_color(road).unwrap());
        assert_eq!(rgb.get_pixel(1, 0).0, [0, 0, 0]);
        assert_eq!(rgb.get_pixel(2, 0).0, [0, 0, 0]);
    }

    #[test]
    fn stacking() {
        let a = RgbImage::from_pixel(4, 2, Rgb([1, 1, 1]));
        let b = RgbImage::from_pixel(4, 3, Rgb([2, 2, 2]));
        let s = stack_vertical(&[a, b]).unwrap();
        assert_eq!(s.dimensions(), (4, 5));
        assert_eq!(s.get_pixel(0, 1).0, [1, 1, 1]);
        assert_eq!(s.get_pixel(0, 2).0, [2, 2, 2]);
        assert!(stack_vertical(&[RgbImage::new(2, 2), RgbImage::new(3, 2)]).is_err());
        assert!(stack_vertical(&[]).is_err());
    }

    #[test]
    fn chart_bars_are_log_scaled() {
        let s = ClassSchema::semantic_thab();
        let mut d = ClassDistribution::new(s.num_classes());
        d.add(&vec![0; 1000]);
        d.add(&[1; 10]);
        let img = distribution_chart(&d, &s);
        let bar_height = |k: u32| {
            let x = CHART_MARGIN + k * (CHART_BAR_WIDTH + CHART_GAP) + CHART_BAR_WIDTH / 2;
            (0..img.height())
                .filter(|&y| img.get_pixel(x, y).0 == s.class_color(k as u16).unwrap())
                .count()
        };
        assert_eq!(bar_height(0), CHART_HEIGHT as usize);
        assert_eq!(bar_height(1), (CHART_HEIGHT / 3) as usize);
        assert_eq!(bar_height(2), 0);
    }
}
