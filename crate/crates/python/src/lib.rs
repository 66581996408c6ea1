//! Python bindings for `fanwarp`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use fanwarp::augment as aug;
use fanwarp::dataset::{self, GroupBy};
use fanwarp::geometry::{self, EdgeSlope, Point2, ProbeKind};
use fanwarp::rng::ItemRng;
use fanwarp::{baseline, phantom, raster, windowfit, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn probe_from(s: &str) -> PyResult<ProbeKind> {
    s.parse().map_err(PyValueError::new_err)
}

fn points(v: Vec<(f64, f64)>) -> PyResult<[Point2; 4]> {
    let pts: Vec<Point2> = v.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
    <[Point2; 4]>::try_from(pts).map_err(|_| PyValueError::new_err("expected exactly 4 points"))
}

/// Four-corner viewing window with a probe kind.
#[pyclass(name = "ViewingWindow", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyWindow(geometry::ViewingWindow);

#[pymethods]
impl PyWindow {
    /// `annotation` is p1_left.x, p1_left.y, p2_left.x, p2_left.y, p1_right.x,
    /// p1_right.y, p2_right.x, p2_right.y.
    #[new]
    fn new(annotation: [f64; 8], probe: &str) -> PyResult<Self> {
        geometry::ViewingWindow::from_annotation(annotation, probe_from(probe)?)
            .map(PyWindow)
            .map_err(to_py)
    }

    #[getter]
    fn annotation(&self) -> [f64; 8] {
        self.0.to_annotation()
    }

    #[getter]
    fn probe(&self) -> &'static str {
        self.0.probe.as_str()
    }

    /// Corners in annotation order as (x, y) tuples.
    fn corners(&self) -> Vec<(f64, f64)> {
        self.0.corners().iter().map(|p| (p.x, p.y)).collect()
    }

    fn area(&self) -> f64 {
        self.0.area()
    }

    fn translated(&self, dx: f64, dy: f64) -> Self {
        PyWindow(self.0.translated(dx, dy))
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("ViewingWindow({:?}, {:?})", self.0.to_annotation(), self.0.probe.as_str())
    }
}

/// 3x3 projective transform, normalized so the bottom-right entry is 1.
#[pyclass(name = "Homography", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyHomography(geometry::Homography);

#[pymethods]
impl PyHomography {
    /// Builds from 9 row-major entries.
    #[new]
    fn new(values: [f64; 9]) -> PyResult<Self> {
        geometry::Homography::from_row_major(values)
            .map(PyHomography)
            .map_err(to_py)
    }

    #[staticmethod]
    fn identity() -> Self {
        PyHomography(geometry::Homography::IDENTITY)
    }

    /// Row-major entries.
    #[getter]
    fn values(&self) -> [f64; 9] {
        self.0.to_row_major()
    }

    fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    fn apply(&self, x: f64, y: f64) -> PyResult<(f64, f64)> {
        let p = self.0.apply(Point2::new(x, y)).map_err(to_py)?;
        Ok((p.x, p.y))
    }

    fn invert(&self) -> PyResult<Self> {
        self.0.invert().map(PyHomography).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Homography({:?})", self.0.to_row_major())
    }
}

/// Single-channel image with intensities in [0, 1].
#[pyclass(name = "GrayImage", skip_from_py_object)]
#[derive(Clone)]
struct PyImage(raster::GrayImage);

#[pymethods]
impl PyImage {
    /// Row-major intensities, `width * height` of them.
    #[new]
    fn new(width: usize, height: usize, data: Vec<f32>) -> PyResult<Self> {
        raster::GrayImage::new(width, height, data)
            .map(PyImage)
            .map_err(to_py)
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, value: f32) -> PyResult<Self> {
        raster::GrayImage::filled(width, height, value)
            .map(PyImage)
            .map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        raster::load_image(path).map(PyImage).map_err(to_py)
    }

    /// Writes PNG or PGM, chosen by extension.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        raster::save_image(&self.0, path).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height()
    }

    fn data(&self) -> Vec<f32> {
        self.0.data().to_vec()
    }

    fn get(&self, x: usize, y: usize) -> PyResult<f32> {
        if x >= self.0.width() || y >= self.0.height() {
            return Err(PyValueError::new_err(format!("pixel ({x}, {y}) out of bounds")));
        }
        Ok(self.0.get(x, y))
    }

    fn mean(&self) -> f64 {
        self.0.mean()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("GrayImage({}x{})", self.0.width(), self.0.height())
    }
}

/// Slope-sampling parameters. Unspecified fields keep their defaults.
#[pyclass(name = "AugmentPolicy", skip_from_py_object)]
#[derive(Clone)]
struct PyPolicy {
    #[pyo3(get, set)]
    convex_sigma: f64,
    #[pyo3(get, set)]
    linear_center: f64,
    #[pyo3(get, set)]
    linear_sigma: f64,
    #[pyo3(get, set)]
    s_min: f64,
    #[pyo3(get, set)]
    max_retries: u32,
    #[pyo3(get, set)]
    apply_linear_transform: bool,
    #[pyo3(get, set)]
    apply_convex_jitter: bool,
}

impl From<aug::AugmentPolicy> for PyPolicy {
    fn from(p: aug::AugmentPolicy) -> Self {
        PyPolicy {
            convex_sigma: p.convex_sigma,
            linear_center: p.linear_center,
            linear_sigma: p.linear_sigma,
            s_min: p.s_min,
            max_retries: p.max_retries,
            apply_linear_transform: p.apply_linear_transform,
            apply_convex_jitter: p.apply_convex_jitter,
        }
    }
}

impl PyPolicy {
    fn inner(&self) -> PyResult<aug::AugmentPolicy> {
        let p = aug::AugmentPolicy {
            convex_sigma: self.convex_sigma,
            linear_center: self.linear_center,
            linear_sigma: self.linear_sigma,
            s_min: self.s_min,
            max_retries: self.max_retries,
            apply_linear_transform: self.apply_linear_transform,
            apply_convex_jitter: self.apply_convex_jitter,
        };
        p.validate().map_err(to_py)?;
        Ok(p)
    }
}

#[pymethods]
impl PyPolicy {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut p = PyPolicy::from(aug::AugmentPolicy::default());
        if let Some(kwargs) = kwargs {
            for (key, value) in kwargs.iter() {
                let key: String = key.extract()?;
                match key.as_str() {
                    "convex_sigma" => p.convex_sigma = value.extract()?,
                    "linear_center" => p.linear_center = value.extract()?,
                    "linear_sigma" => p.linear_sigma = value.extract()?,
                    "s_min" => p.s_min = value.extract()?,
                    "max_retries" => p.max_retries = value.extract()?,
                    "apply_linear_transform" => p.apply_linear_transform = value.extract()?,
                    "apply_convex_jitter" => p.apply_convex_jitter = value.extract()?,
                    other => return Err(PyValueError::new_err(format!("unknown policy field {other:?}"))),
                }
            }
        }
        p.inner()?;
        Ok(p)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        aug::AugmentPolicy::load(path).map(PyPolicy::from).map_err(to_py)
    }

    #[staticmethod]
    fn disabled() -> Self {
        PyPolicy::from(aug::AugmentPolicy::disabled())
    }

    fn __repr__(&self) -> String {
        format!(
            "AugmentPolicy(convex_sigma={}, linear_center={}, linear_sigma={}, s_min={}, max_retries={}, \
             apply_linear_transform={}, apply_convex_jitter={})",
            self.convex_sigma,
            self.linear_center,
            self.linear_sigma,
            self.s_min,
            self.max_retries,
            self.apply_linear_transform,
            self.apply_convex_jitter
        )
    }
}

/// (left, right) edge slopes; vertical edges give `inf`.
#[pyfunction]
fn edge_slopes(window: &PyWindow) -> PyResult<(f64, f64)> {
    let (l, r) = geometry::edge_slopes(&window.0).map_err(to_py)?;
    Ok((l.value(), r.value()))
}

#[pyfunction]
#[pyo3(signature = (window, slope, s_min = 0.5))]
fn resample_window(window: &PyWindow, slope: f64, s_min: f64) -> PyResult<PyWindow> {
    let slope = EdgeSlope::new(slope).ok_or_else(|| PyValueError::new_err(format!("invalid slope {slope}")))?;
    geometry::resample_window(&window.0, slope, s_min)
        .map(PyWindow)
        .map_err(to_py)
}

/// Exact homography taking 4 source points to 4 destination points.
#[pyfunction]
fn estimate_homography(src: Vec<(f64, f64)>, dst: Vec<(f64, f64)>) -> PyResult<PyHomography> {
    geometry::estimate_homography(&points(src)?, &points(dst)?)
        .map(PyHomography)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (image, homography, fill = 0.0))]
fn warp_image(image: &PyImage, homography: &PyHomography, fill: f32) -> PyResult<PyImage> {
    raster::warp_image(&image.0, &homography.0, fill)
        .map(PyImage)
        .map_err(to_py)
}

/// Row-major inside/outside flags for a `width` x `height` raster.
#[pyfunction]
fn render_mask(window: &PyWindow, width: usize, height: usize) -> PyResult<Vec<bool>> {
    raster::render_mask(&window.0, width, height)
        .map(|m| m.data().to_vec())
        .map_err(to_py)
}

#[pyfunction]
fn downsample(image: &PyImage, width: usize, height: usize) -> PyResult<PyImage> {
    raster::downsample(&image.0, width, height)
        .map(PyImage)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (image, threshold = windowfit::DEFAULT_THRESHOLD))]
fn estimate_window(image: &PyImage, threshold: f32) -> PyResult<PyWindow> {
    windowfit::estimate_window(&image.0, threshold)
        .map(PyWindow)
        .map_err(to_py)
}

/// Augments one image with randomness derived from `(seed, item_id, epoch)`.
#[pyfunction]
#[pyo3(signature = (image, window, policy, seed, item_id, epoch = 0))]
fn augment(
    image: &PyImage,
    window: &PyWindow,
    policy: &PyPolicy,
    seed: u64,
    item_id: &str,
    epoch: u64,
) -> PyResult<(PyImage, PyWindow)> {
    let mut rng = ItemRng::derive(seed, item_id, epoch);
    let (img, w) = aug::augment(&image.0, &window.0, &policy.inner()?, &mut rng).map_err(to_py)?;
    Ok((PyImage(img), PyWindow(w)))
}

#[pyfunction]
#[pyo3(signature = (center, sigma, seed, item_id, epoch = 0, s_min = 0.5, max_retries = 10))]
fn sample_slope(
    center: f64,
    sigma: f64,
    seed: u64,
    item_id: &str,
    epoch: u64,
    s_min: f64,
    max_retries: u32,
) -> f64 {
    let mut rng = ItemRng::derive(seed, item_id, epoch);
    aug::sample_slope(center, sigma, s_min, max_retries, &mut rng).value()
}

/// Rank-statistic AUC; `None` when only one class is present.
#[pyfunction]
fn auc(scores: Vec<f64>, positives: Vec<bool>) -> PyResult<Option<f64>> {
    if scores.len() != positives.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    Ok(baseline::auc(&scores, &positives))
}

#[pyfunction]
#[pyo3(signature = (scores, positives, threshold = 0.5))]
fn accuracy(scores: Vec<f64>, positives: Vec<bool>, threshold: f64) -> PyResult<f64> {
    if scores.len() != positives.len() {
        return Err(PyValueError::new_err("scores and labels differ in length"));
    }
    Ok(baseline::accuracy(&scores, &positives, threshold))
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_u64() {
            Some(u) => u.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

/// Manifest records as dicts.
#[pyfunction]
fn load_manifest<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let records = dataset::load_manifest(path).map_err(to_py)?;
    json_to_py(py, &serde_json::to_value(records).expect("records serialize"))
}

/// Counts by probe kind and label, as a dict.
#[pyfunction]
fn stats<'py>(py: Python<'py>, manifest: PathBuf) -> PyResult<Bound<'py, PyAny>> {
    let records = dataset::load_manifest(manifest).map_err(to_py)?;
    json_to_py(py, &serde_json::to_value(dataset::stats(&records)).expect("stats serialize"))
}

/// Splits a manifest; returns `{id: "train" | "val" | "test"}`.
#[pyfunction]
#[pyo3(signature = (manifest, seed, fractions = dataset::DEFAULT_FRACTIONS, group_by = "video"))]
fn split<'py>(
    py: Python<'py>,
    manifest: PathBuf,
    seed: u64,
    fractions: [f64; 3],
    group_by: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let group_by: GroupBy = group_by.parse().map_err(PyValueError::new_err)?;
    let records = dataset::load_manifest(manifest).map_err(to_py)?;
    let report = dataset::split_by(&records, fractions, seed, group_by).map_err(to_py)?;
    json_to_py(py, &serde_json::to_value(&report.assignment).expect("assignment serializes"))
}

/// Writes `n` phantom frames and a manifest under `out_dir`; returns the
/// manifest path.
#[pyfunction]
fn generate_phantoms(py: Python<'_>, n: usize, convex_fraction: f64, seed: u64, out_dir: PathBuf) -> PyResult<PathBuf> {
    py.detach(|| phantom::generate(n, convex_fraction, seed, &out_dir))
        .map_err(to_py)?;
    Ok(out_dir.join(phantom::MANIFEST_NAME))
}

#[pymodule]
#[pyo3(name = "fanwarp")]
fn fanwarp_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyWindow>()?;
    m.add_class::<PyHomography>()?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(edge_slopes, m)?)?;
    m.add_function(wrap_pyfunction!(resample_window, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_homography, m)?)?;
    m.add_function(wrap_pyfunction!(warp_image, m)?)?;
    m.add_function(wrap_pyfunction!(render_mask, m)?)?;
    m.add_function(wrap_pyfunction!(downsample, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_window, m)?)?;
    m.add_function(wrap_pyfunction!(augment, m)?)?;
    m.add_function(wrap_pyfunction!(sample_slope, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(load_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(stats, m)?)?;
    m.add_function(wrap_pyfunction!(split, m)?)?;
    m.add_function(wrap_pyfunction!(generate_phantoms, m)?)?;
    Ok(())
}
