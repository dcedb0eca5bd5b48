//! Segmentation backends.
//!
//! A backend consumes the range image and its normals, i.e. the channels
//! `reflectivity, range, x, y, z, nx, ny, nz`, and returns a label image with
//! the same shape and valid mask. Two implementations ship here: a geometric
//! rule-based baseline and a loader for externally computed predictions.

use std::path::Path;

use crate::dataset::{self, project_labels, ClassSchema, LabelImage, TrainIndex};
use crate::error::{Error, Result};
use crate::evaluation::ProbabilityImage;
use crate::normals::{check_aligned, NormalImage};
use crate::projection::RangeImage;

/// Channel order of [`network_input`].
pub const INPUT_CHANNELS: [&str; 8] = ["reflectivity", "range", "x", "y", "z", "nx", "ny", "nz"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BackendDescriptor {
    pub name: String,
    pub input_channels: Vec<&'static str>,
    pub num_classes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    pub labels: LabelImage,
    pub probabilities: Option<ProbabilityImage>,
}

pub trait Segmenter: Send + Sync {
    fn descriptor(&self) -> BackendDescriptor;

    fn segment(&self, image: &RangeImage, normals: &NormalImage) -> Result<Segmentation>;
}

/// Stacks the eight input channels as a channel-major `8 x H x W` tensor.
/// Invalid pixels are all zeros.
pub fn network_input(image: &RangeImage, normals: &NormalImage) -> Result<Vec<f32>> {
    check_aligned(image, normals)?;
    let n = image.width() * image.height();
    let mut out = vec![0.0f32; INPUT_CHANNELS.len() * n];
    let (refl, rest) = out.split_at_mut(n);
    let (range, rest) = rest.split_at_mut(n);
    let (xyz, nrm) = rest.split_at_mut(3 * n);
    for i in 0..n {
        if !image.valid()[i] {
            continue;
        }
        refl[i] = image.reflectivity()[i];
        range[i] = image.range()[i];
        for k in 0..3 {
            xyz[k * n + i] = image.xyz()[i][k];
            nrm[k * n + i] = normals.normals()[i][k];
        }
    }
    Ok(out)
}

/// Train indices assigned by the geometric baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClassBindings {
    pub ground: TrainIndex,
    pub vertical: TrainIndex,
    pub other: TrainIndex,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometricBaselineConfig {
    /// Minimum `|n_z|` for ground.
    pub ground_nz_threshold: f32,
    /// Half-width in meters of the ground band around `-sensor_height`.
    pub ground_height_band: f32,
    /// Sensor height above the ground, meters.
    pub sensor_height: f32,
    /// Maximum `|n_z|` for vertical structure.
    pub vertical_nz_threshold: f32,
    pub bindings: ClassBindings,
    pub num_classes: usize,
    pub ignore_index: TrainIndex,
}

impl GeometricBaselineConfig {
    /// Binds ground to `road`, vertical structure to `building` and everything
    /// else to `car`.
    pub fn for_schema(schema: &ClassSchema) -> Result<Self> {
        let find = |name: &str| {
            schema
                .class_index(name)
                .ok_or_else(|| Error::Schema(format!("schema has no class {name:?}")))
        };
        let cfg = Self {
            ground_nz_threshold: 0.85,
            ground_height_band: 0.5,
            sensor_height: 1.8,
            vertical_nz_threshold: 0.30,
            bindings: ClassBindings {
                ground: find("road")?,
                vertical: find("building")?,
                other: find("car")?,
            },
            num_classes: schema.num_classes(),
            ignore_index: schema.ignore_index(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.ground_nz_threshold) || !unit.contains(&self.vertical_nz_threshold) {
            return Err(Error::InvalidArgument("normal thresholds must lie in [0, 1]".into()));
        }
        if self.ground_height_band.is_nan() || self.ground_height_band < 0.0 || !self.sensor_height.is_finite() {
            return Err(Error::InvalidArgument("invalid ground band".into()));
        }
        let b = self.bindings;
        if [b.ground, b.vertical, b.other]
            .iter()
            .any(|&t| usize::from(t) >= self.num_classes)
        {
            return Err(Error::InvalidArgument(format!(
                "class bindings {b:?} outside [0, {})",
                self.num_classes
            )));
        }
        Ok(())
    }
}

impl Default for GeometricBaselineConfig {
    fn default() -> Self {
        Self::for_schema(&ClassSchema::semantic_thab()).expect("bundled schema has the bound classes")
    }
}

/// Labels valid pixels from normal direction and height alone; pixels
/// without a normal fall through to the `other` binding.
pub fn segment_geometric(
    image: &RangeImage,
    normals: &NormalImage,
    cfg: &GeometricBaselineConfig,
) -> Result<LabelImage> {
    check_aligned(image, normals)?;
    let ground_z = -cfg.sensor_height;
    let labels = (0..image.width() * image.height())
        .map(|i| {
            if !image.valid()[i] {
                return cfg.ignore_index;
            }
            if !normals.valid()[i] {
                return cfg.bindings.other;
            }
            let nz = normals.normals()[i][2].abs();
            let z = image.xyz()[i][2];
            if nz >= cfg.ground_nz_threshold && (z - ground_z).abs() <= cfg.ground_height_band {
                cfg.bindings.ground
            } else if nz <= cfg.vertical_nz_threshold {
                cfg.bindings.vertical
            } else {
                cfg.bindings.other
            }
        })
        .collect();
    LabelImage::new(
        image.width(),
        image.height(),
        labels,
        image.valid().to_vec(),
        cfg.ignore_index,
    )
}

#[derive(Clone, Debug)]
pub struct GeometricBaseline {
    cfg: GeometricBaselineConfig,
}

impl GeometricBaseline {
    pub fn new(cfg: GeometricBaselineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &GeometricBaselineConfig {
        &self.cfg
    }
}

impl Segmenter for GeometricBaseline {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "geometric".into(),
            input_channels: vec!["z", "nx", "ny", "nz"],
            num_classes: self.cfg.num_classes,
        }
    }

    fn segment(&self, image: &RangeImage, normals: &NormalImage) -> Result<Segmentation> {
        Ok(Segmentation {
            labels: segment_geometric(image, normals, &self.cfg)?,
            probabilities: None,
        })
    }
}

/// Reads a prediction file in the label format whose semantic field holds
/// train indices. Every value must be a train class or `ignore_index`.
pub fn load_predictions(
    path: impl AsRef<Path>,
    expected_count: usize,
    num_classes: usize,
    ignore_index: TrainIndex,
) -> Result<Vec<TrainIndex>> {
    let path = path.as_ref();
    let labels = dataset::read_labels_unchecked(path, expected_count)?;
    let bad: std::collections::BTreeSet<u32> = labels
        .semantic
        .iter()
        .filter(|&&l| usize::from(l) >= num_classes && l != ignore_index)
        .map(|&l| u32::from(l))
        .collect();
    if !bad.is_empty() {
        return Err(Error::UnknownLabel {
            ids: bad.into_iter().collect(),
        }
        .in_file(path));
    }
    Ok(labels.semantic)
}

pub fn write_predictions(path: impl AsRef<Path>, labels: &[TrainIndex]) -> Result<()> {
    dataset::write_labels(path, &dataset::PointLabels::from_semantic(labels.to_vec()))
}

/// Per-point predictions for one scan, mapped to pixels with the range
/// image's source indices. Emits one-hot probabilities.
#[derive(Clone, Debug)]
pub struct PrecomputedPredictions {
    labels: Vec<TrainIndex>,
    num_classes: usize,
    ignore_index: TrainIndex,
}

impl PrecomputedPredictions {
    pub fn new(labels: Vec<TrainIndex>, num_classes: usize, ignore_index: TrainIndex) -> Self {
        Self {
            labels,
            num_classes,
            ignore_index,
        }
    }

    pub fn from_file(
        path: impl AsRef<Path>,
        expected_count: usize,
        schema: &ClassSchema,
    ) -> Result<Self> {
        let labels = load_predictions(path, expected_count, schema.num_classes(), schema.ignore_index())?;
        Ok(Self::new(labels, schema.num_classes(), schema.ignore_index()))
    }

    pub fn labels(&self) -> &[TrainIndex] {
        &self.labels
    }
}

impl Segmenter for PrecomputedPredictions {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor {
            name: "precomputed".into(),
            input_channels: Vec::new(),
            num_classes: self.num_classes,
        }
    }

    fn segment(&self, image: &RangeImage, normals: &NormalImage) -> Result<Segmentation> {
        check_aligned(image, normals)?;
        let labels = project_labels(&self.labels, image, self.ignore_index)?;
        let probabilities = ProbabilityImage::one_hot(&labels, self.num_classes)?;
        Ok(Segmentation {
            labels,
            probabilities: Some(probabilities),
        })
    }
}
