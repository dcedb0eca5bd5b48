//! Range-view processing for high-resolution LiDAR scans.
//!
//! The pipeline turns unordered point clouds into spherical range images
//! ([`projection`]), estimates per-pixel surface normals ([`normals`]), runs a
//! pluggable segmenter over the stacked channels ([`backends`]) and scores the
//! result with confusion-matrix metrics and segmentation losses
//! ([`evaluation`]). [`dataset`] reads and writes the SemanticKITTI binary
//! layout, and [`bench`] times the stages against a real-time budget.

pub mod backends;
pub mod bench;
pub mod dataset;
mod error;
pub mod evaluation;
pub mod normals;
pub mod projection;
pub mod render;
pub mod synthetic;

pub use backends::{GeometricBaseline, GeometricBaselineConfig, Segmenter};
pub use dataset::{ClassSchema, LabelImage, PointLabels};
pub use error::{Error, Result};
pub use evaluation::{ConfusionMatrix, EvalReport, LossParams};
pub use normals::{GradientImage, NormalImage};
pub use projection::{PointCloud, RangeImage, SensorPreset, SphericalCoords, SphericalProjectionModel};
