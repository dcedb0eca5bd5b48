//! Python bindings: projection model, range images, normals, network input,
//! IoU accumulation and the training losses. Arrays cross the boundary as
//! numpy arrays in row-major `(H, W, ...)` layout.

use numpy::ndarray::{Array2, Array3};
use numpy::{IntoPyArray, PyArray2, PyArray3, PyReadonlyArray1, PyReadonlyArray2, PyReadonlyArray3};
use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;

use rangekit_core::evaluation::{cross_entropy, soft_dice, tversky, ProbabilityImage};
use rangekit_core::projection::{build_range_image, cartesian_to_spherical as to_spherical, unproject_pixel};
use rangekit_core::{backends, normals, ClassSchema, LabelImage, LossParams, PointCloud, SensorPreset};

fn value_err(e: rangekit_core::Error) -> PyErr {
    match e {
        rangekit_core::Error::PixelOutOfBounds { .. } => PyIndexError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Spherical projection model of a rotating LiDAR.
#[pyclass(name = "SensorModel", module = "rangekit", frozen)]
struct SensorModel {
    inner: rangekit_core::SphericalProjectionModel,
}

#[pymethods]
impl SensorModel {
    /// Full 360 degree model from image size and elevation limits in degrees.
    #[new]
    fn new(width: usize, height: usize, elevation_max_deg: f64, elevation_min_deg: f64) -> PyResult<Self> {
        let inner = rangekit_core::SphericalProjectionModel::full_turn(width, height, elevation_max_deg, elevation_min_deg)
            .map_err(value_err)?;
        Ok(Self { inner })
    }

    /// One of `os2-128`, `hdl64-512`, `hdl64-2048`.
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        let p = SensorPreset::from_name(name).ok_or_else(|| PyValueError::new_err(format!("unknown preset {name:?}")))?;
        Ok(Self {
            inner: rangekit_core::SphericalProjectionModel::preset(p),
        })
    }

    #[staticmethod]
    fn presets() -> Vec<&'static str> {
        SensorPreset::ALL.iter().map(|p| p.name()).collect()
    }

    /// Explicit steps and offsets, in radians and pixels.
    #[staticmethod]
    fn from_steps(
        delta_phi: f64,
        delta_theta: f64,
        c_phi: f64,
        c_theta: f64,
        width: usize,
        height: usize,
    ) -> PyResult<Self> {
        let inner = rangekit_core::SphericalProjectionModel::new(delta_phi, delta_theta, c_phi, c_theta, width, height)
            .map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn delta_phi(&self) -> f64 {
        self.inner.delta_phi()
    }

    #[getter]
    fn delta_theta(&self) -> f64 {
        self.inner.delta_theta()
    }

    #[getter]
    fn c_phi(&self) -> f64 {
        self.inner.c_phi()
    }

    #[getter]
    fn c_theta(&self) -> f64 {
        self.inner.c_theta()
    }

    #[getter]
    fn full_turn(&self) -> bool {
        self.inner.is_full_turn()
    }

    /// Pixel `(u, v)` of a Cartesian point, or None outside the image.
    fn project(&self, x: f64, y: f64, z: f64) -> PyResult<Option<(usize, usize)>> {
        let s = to_spherical([x, y, z]).map_err(value_err)?;
        Ok(self.inner.project(&s).map(|p| (p.u, p.v)))
    }

    /// Point at `range` along the center ray of pixel `(u, v)`.
    fn unproject(&self, u: usize, v: usize, range: f64) -> PyResult<(f64, f64, f64)> {
        let [x, y, z] = unproject_pixel(u, v, range, &self.inner).map_err(value_err)?;
        Ok((x, y, z))
    }

    /// Azimuth and polar angle of a pixel center.
    fn pixel_center(&self, u: usize, v: usize) -> PyResult<(f64, f64)> {
        self.inner.pixel_center(u, v).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "SensorModel(width={}, height={}, delta_phi={}, delta_theta={})",
            self.inner.width(),
            self.inner.height(),
            self.inner.delta_phi(),
            self.inner.delta_theta()
        )
    }
}

/// `(r, phi, theta)` of a Cartesian point; phi in `(-pi, pi]`, theta from +z.
#[pyfunction]
fn cartesian_to_spherical(x: f64, y: f64, z: f64) -> PyResult<(f64, f64, f64)> {
    let s = to_spherical([x, y, z]).map_err(value_err)?;
    Ok((s.r, s.phi, s.theta))
}

#[pyclass(name = "RangeImage", module = "rangekit", frozen)]
struct RangeImage {
    inner: rangekit_core::RangeImage,
}

#[pymethods]
impl RangeImage {
    /// Projects `points` (N, 3) with per-point `reflectivity` (N,).
    #[new]
    fn new(
        points: PyReadonlyArray2<'_, f32>,
        reflectivity: PyReadonlyArray1<'_, f32>,
        model: &SensorModel,
    ) -> PyResult<Self> {
        let pts = points.as_array();
        if pts.ncols() != 3 {
            return Err(PyValueError::new_err("points must have shape (N, 3)"));
        }
        let points: Vec<[f32; 3]> = pts.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect();
        let cloud = PointCloud::new(points, reflectivity.as_array().to_vec()).map_err(value_err)?;
        let inner = build_range_image(&cloud, &model.inner).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.height(), self.inner.width())
    }

    #[getter]
    fn valid_count(&self) -> usize {
        self.inner.valid_count()
    }

    fn range<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f32>> {
        self.grid(self.inner.range().to_vec()).into_pyarray(py)
    }

    fn reflectivity<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f32>> {
        self.grid(self.inner.reflectivity().to_vec()).into_pyarray(py)
    }

    fn valid<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<bool>> {
        self.grid(self.inner.valid().to_vec()).into_pyarray(py)
    }

    fn xyz<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray3<f32>> {
        let flat = self.inner.xyz().iter().flatten().copied().collect();
        Array3::from_shape_vec((self.inner.height(), self.inner.width(), 3), flat)
            .expect("xyz has H*W points")
            .into_pyarray(py)
    }

    /// Index of the point stored at each pixel, -1 where empty.
    fn source_index<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<i64>> {
        let n = self.inner.width() * self.inner.height();
        let idx = (0..n)
            .map(|i| self.inner.source_index(i).map_or(-1, |s| s as i64))
            .collect();
        self.grid(idx).into_pyarray(py)
    }

    /// Unit sensor-facing normals (H, W, 3) and their validity mask (H, W).
    fn normals<'py>(&self, py: Python<'py>) -> (Bound<'py, PyArray3<f32>>, Bound<'py, PyArray2<bool>>) {
        let n = normals::compute_normals(&self.inner);
        let flat = n.normals().iter().flatten().copied().collect();
        let arr = Array3::from_shape_vec((n.height(), n.width(), 3), flat).expect("H*W normals");
        (arr.into_pyarray(py), self.grid(n.valid().to_vec()).into_pyarray(py))
    }

    /// Channel-major network input (8, H, W).
    fn network_input<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyArray3<f32>>> {
        let n = normals::compute_normals(&self.inner);
        let t = backends::network_input(&self.inner, &n).map_err(value_err)?;
        let (w, h) = self.inner.dims();
        Ok(Array3::from_shape_vec((t.len() / (w * h), h, w), t)
            .expect("channel count divides the tensor")
            .into_pyarray(py))
    }
}

impl RangeImage {
    fn grid<T>(&self, v: Vec<T>) -> Array2<T> {
        Array2::from_shape_vec((self.inner.height(), self.inner.width()), v).expect("one value per pixel")
    }
}

fn label_image(labels: &PyReadonlyArray2<'_, u16>, ignore_index: u16) -> PyResult<LabelImage> {
    let a = labels.as_array();
    let (h, w) = a.dim();
    let flat: Vec<u16> = a.iter().copied().collect();
    let valid = flat.iter().map(|&l| l != ignore_index).collect();
    LabelImage::new(w, h, flat, valid, ignore_index).map_err(value_err)
}

fn probability_image(probs: &PyReadonlyArray3<'_, f64>) -> PyResult<ProbabilityImage> {
    let a = probs.as_array();
    let (h, w, c) = a.dim();
    ProbabilityImage::new(w, h, c, a.iter().copied().collect()).map_err(value_err)
}

/// Confusion counts over train classes; pixels labeled `ignore_index` in the
/// truth are skipped.
#[pyclass(name = "ConfusionMatrix", module = "rangekit")]
struct ConfusionMatrix {
    inner: rangekit_core::ConfusionMatrix,
    ignore_index: u16,
}

#[pymethods]
impl ConfusionMatrix {
    #[new]
    #[pyo3(signature = (classes, ignore_index = 255))]
    fn new(classes: usize, ignore_index: u16) -> Self {
        Self {
            inner: rangekit_core::ConfusionMatrix::new(classes),
            ignore_index,
        }
    }

    /// Adds one predicted/truth pair of (H, W) uint16 label images.
    fn add(&mut self, predicted: PyReadonlyArray2<'_, u16>, truth: PyReadonlyArray2<'_, u16>) -> PyResult<()> {
        let p = label_image(&predicted, self.ignore_index)?;
        let t = label_image(&truth, self.ignore_index)?;
        self.inner.add_images(&p, &t).map_err(value_err)
    }

    /// Counts indexed `[truth, predicted]`.
    fn counts<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<u64>> {
        let c = self.inner.num_classes();
        Array2::from_shape_fn((c, c), |(t, p)| self.inner.get(t, p)).into_pyarray(py)
    }

    /// IoU per class, None where the class never occurs.
    fn per_class_iou(&self) -> Vec<Option<f64>> {
        self.inner.report().per_class_iou()
    }

    /// Mean IoU over present classes, or over `classes` when given.
    #[pyo3(signature = (classes = None))]
    fn miou(&self, classes: Option<Vec<usize>>) -> Option<f64> {
        let r = self.inner.report();
        match classes {
            Some(c) => r.miou_over(&c),
            None => r.miou(),
        }
    }
}

/// Tversky loss of (H, W, C) probabilities against (H, W) labels.
#[pyfunction]
#[pyo3(signature = (probs, labels, alpha = 0.3, beta = 0.7, smooth = 1e-6, ignore_index = 255))]
fn tversky_loss(
    probs: PyReadonlyArray3<'_, f64>,
    labels: PyReadonlyArray2<'_, u16>,
    alpha: f64,
    beta: f64,
    smooth: f64,
    ignore_index: u16,
) -> PyResult<f64> {
    let p = probability_image(&probs)?;
    let mut params = LossParams::new(p.num_classes());
    params.alpha = alpha;
    params.beta = beta;
    params.smooth = smooth;
    tversky(&p, &label_image(&labels, ignore_index)?, &params).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (probs, labels, smooth = 1e-6, ignore_index = 255))]
fn soft_dice_loss(
    probs: PyReadonlyArray3<'_, f64>,
    labels: PyReadonlyArray2<'_, u16>,
    smooth: f64,
    ignore_index: u16,
) -> PyResult<f64> {
    soft_dice(&probability_image(&probs)?, &label_image(&labels, ignore_index)?, smooth).map_err(value_err)
}

/// Weighted cross-entropy; unit weights when `weights` is None.
#[pyfunction]
#[pyo3(signature = (probs, labels, weights = None, ignore_index = 255))]
fn cross_entropy_loss(
    probs: PyReadonlyArray3<'_, f64>,
    labels: PyReadonlyArray2<'_, u16>,
    weights: Option<Vec<f64>>,
    ignore_index: u16,
) -> PyResult<f64> {
    let p = probability_image(&probs)?;
    let w = weights.unwrap_or_else(|| vec![1.0; p.num_classes()]);
    cross_entropy(&p, &label_image(&labels, ignore_index)?, &w).map_err(value_err)
}

/// Train class names of a built-in schema (`thab` or `kitti`).
#[pyfunction]
#[pyo3(signature = (name = "thab"))]
fn class_names(name: &str) -> PyResult<Vec<String>> {
    let schema = match name {
        "thab" => ClassSchema::semantic_thab(),
        "kitti" => ClassSchema::semantic_kitti(),
        _ => return Err(PyValueError::new_err(format!("unknown schema {name:?}"))),
    };
    Ok(schema.classes().iter().map(|c| c.name.clone()).collect())
}

#[pymodule]
#[pyo3(name = "rangekit")]
fn rangekit_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<SensorModel>()?;
    m.add_class::<RangeImage>()?;
    m.add_class::<ConfusionMatrix>()?;
    m.add_function(wrap_pyfunction!(cartesian_to_spherical, m)?)?;
    m.add_function(wrap_pyfunction!(tversky_loss, m)?)?;
    m.add_function(wrap_pyfunction!(soft_dice_loss, m)?)?;
    m.add_function(wrap_pyfunction!(cross_entropy_loss, m)?)?;
    m.add_function(wrap_pyfunction!(class_names, m)?)?;
    Ok(())
}
