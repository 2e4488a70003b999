//! Python bindings for the starscreen pre-screening engine.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use starscreen::image_io::{self, GrayImage};
use starscreen::screening::{self, Candidate, Quantizer, ScreeningConfig, ScreeningResult};
use starscreen::second_stage::{self, MatchResult};
use starscreen::synth_bench::{self, GroundTruth};
use starscreen::Error;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        Error::UnsupportedFormat(_) | Error::MalformedHeader(_) | Error::MaxvalTooLarge(_) => {
            PyIOError::new_err(err.to_string())
        }
        Error::NoCandidates | Error::RetriesExhausted(_) => {
            PyRuntimeError::new_err(err.to_string())
        }
        _ => PyValueError::new_err(err.to_string()),
    }
}

/// 8-bit grayscale image stored row-major.
#[pyclass(name = "GrayImage", module = "starscreen_py")]
#[derive(Clone)]
struct PyGrayImage {
    inner: GrayImage,
}

#[pymethods]
impl PyGrayImage {
    #[new]
    fn new(width: usize, height: usize, data: Vec<u8>) -> PyResult<Self> {
        Ok(Self {
            inner: GrayImage::new(width, height, data).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            inner: GrayImage::filled(width, height, value),
        }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: image_io::load_pgm(path).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn from_pgm(bytes: &[u8]) -> PyResult<Self> {
        Ok(Self {
            inner: image_io::decode_pgm(bytes).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        image_io::save_pgm(&self.inner, path).map_err(to_py)
    }

    fn to_pgm<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &image_io::encode_pgm(&self.inner))
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn data<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.data())
    }

    fn get(&self, x: usize, y: usize) -> PyResult<u8> {
        if x >= self.inner.width() || y >= self.inner.height() {
            return Err(PyValueError::new_err("pixel out of bounds"));
        }
        Ok(self.inner.get(x, y))
    }

    fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> PyResult<Self> {
        Ok(Self {
            inner: image_io::crop(&self.inner, x0, y0, width, height).map_err(to_py)?,
        })
    }

    fn resize(&self, width: usize, height: usize) -> Self {
        Self {
            inner: image_io::resize_bilinear(&self.inner, width, height),
        }
    }

    #[pyo3(signature = (angle, fill = 0))]
    fn rotate(&self, angle: f64, fill: u8) -> Self {
        Self {
            inner: image_io::rotate(&self.inner, angle, fill),
        }
    }

    fn std_dev(&self) -> f64 {
        image_io::std_dev(&self.inner)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("GrayImage({}x{})", self.inner.width(), self.inner.height())
    }
}

/// Screening parameters; every field has the library default.
#[pyclass(name = "ScreeningConfig", module = "starscreen_py")]
#[derive(Clone)]
struct PyScreeningConfig {
    inner: ScreeningConfig,
}

#[pymethods]
impl PyScreeningConfig {
    #[new]
    #[pyo3(signature = (
        alpha = 0.5, beta = 2.0, scale_step = std::f64::consts::SQRT_2, rings = 3,
        q_mean = 8.0, q_std = 8.0, q_grad = 8.0, stride = 1, min_template_std = 1.0
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        alpha: f64,
        beta: f64,
        scale_step: f64,
        rings: usize,
        q_mean: f64,
        q_std: f64,
        q_grad: f64,
        stride: usize,
        min_template_std: f64,
    ) -> PyResult<Self> {
        let inner = ScreeningConfig {
            alpha,
            beta,
            lambda: scale_step,
            ring_count: rings,
            quantizer: Quantizer {
                q_mean,
                q_std,
                q_grad,
            },
            stride,
            min_template_std,
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn ladder(&self, template_side: usize) -> Vec<usize> {
        screening::ladder(template_side, &self.inner)
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn rings(&self) -> usize {
        self.inner.ring_count
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "ScreeningConfig(alpha={}, beta={}, rings={}, q=({}, {}, {}), stride={})",
            c.alpha,
            c.beta,
            c.ring_count,
            c.quantizer.q_mean,
            c.quantizer.q_std,
            c.quantizer.q_grad,
            c.stride
        )
    }
}

#[pyclass(name = "ScreeningResult", module = "starscreen_py")]
struct PyScreeningResult {
    inner: ScreeningResult,
}

#[pymethods]
impl PyScreeningResult {
    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    #[getter]
    fn ladder(&self) -> Vec<usize> {
        self.inner.ladder()
    }

    /// Kept candidates as `(cx, cy, m)` tuples.
    fn candidates(&self) -> Vec<(usize, usize, usize)> {
        self.inner.candidates().map(|c| (c.cx, c.cy, c.m)).collect()
    }

    fn contains(&self, cx: usize, cy: usize, m: usize) -> bool {
        self.inner
            .candidates()
            .any(|c| *c == Candidate { cx, cy, m })
    }

    fn region_mask(&self) -> PyGrayImage {
        PyGrayImage {
            inner: self.inner.region_mask_image(),
        }
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = &self.inner.stats;
        let d = PyDict::new(py);
        d.set_item("patches_tested", s.patches_tested)?;
        d.set_item("patches_kept", s.patches_kept)?;
        d.set_item("patch_pruning", s.patch_pruning)?;
        d.set_item("region_pruning", s.region_pruning)?;
        d.set_item("screen_time", s.screen_time_s)?;
        Ok(d)
    }

    fn __len__(&self) -> usize {
        self.inner.candidate_count()
    }
}

fn match_dict<'py>(py: Python<'py>, r: &MatchResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("cx", r.cx)?;
    d.set_item("cy", r.cy)?;
    d.set_item("m", r.m)?;
    d.set_item("scale", r.scale)?;
    d.set_item("angle", r.angle)?;
    d.set_item("score", r.score)?;
    Ok(d)
}

fn truth_dict<'py>(py: Python<'py>, t: &GroundTruth) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("center", t.center)?;
    d.set_item("side", t.side)?;
    d.set_item("angle", t.angle)?;
    d.set_item("scale", t.scale)?;
    d.set_item("footprint", t.footprint.clone())?;
    Ok(d)
}

/// Screen `image` for patches that may match `template`.
#[pyfunction]
#[pyo3(signature = (image, template, config = None))]
fn screen(
    py: Python<'_>,
    image: &PyGrayImage,
    template: &PyGrayImage,
    config: Option<&PyScreeningConfig>,
) -> PyResult<PyScreeningResult> {
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    let (img, tpl) = (image.inner.clone(), template.inner.clone());
    let inner = py
        .allow_threads(move || screening::screen(&img, &tpl, &cfg))
        .map_err(to_py)?;
    Ok(PyScreeningResult { inner })
}

/// Best rotated NCC match among the kept candidates.
#[pyfunction]
#[pyo3(signature = (image, template, result, angle_step = 10.0))]
fn match_candidates<'py>(
    py: Python<'py>,
    image: &PyGrayImage,
    template: &PyGrayImage,
    result: &PyScreeningResult,
    angle_step: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r =
        second_stage::match_candidates(&image.inner, &template.inner, &result.inner, angle_step)
            .map_err(to_py)?;
    match_dict(py, &r)
}

/// Rotated NCC over every position for each patch size in `sizes`.
#[pyfunction]
#[pyo3(signature = (image, template, sizes, angle_step = 10.0))]
fn full_search<'py>(
    py: Python<'py>,
    image: &PyGrayImage,
    template: &PyGrayImage,
    sizes: Vec<usize>,
    angle_step: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = second_stage::full_search(&image.inner, &template.inner, &sizes, angle_step)
        .map_err(to_py)?;
    match_dict(py, &r)
}

/// Zero-mean NCC between `probe` and the window centred at `(cx, cy)`.
#[pyfunction]
fn ncc_score(image: &PyGrayImage, probe: &PyGrayImage, cx: usize, cy: usize) -> PyResult<f64> {
    second_stage::ncc_score(&image.inner, &probe.inner, cx, cy).map_err(to_py)
}

/// Draw a rotated, rescaled template with its ground truth.
#[pyfunction]
#[pyo3(signature = (image, seed, scale_min = 0.5, scale_max = 2.0, std_threshold = 20.0, out_side = 32))]
fn make_case<'py>(
    py: Python<'py>,
    image: &PyGrayImage,
    seed: u64,
    scale_min: f64,
    scale_max: f64,
    std_threshold: f64,
    out_side: usize,
) -> PyResult<(PyGrayImage, Bound<'py, PyDict>)> {
    let (t, truth) = synth_bench::make_case(
        &image.inner,
        seed,
        (scale_min, scale_max),
        std_threshold,
        out_side,
    )
    .map_err(to_py)?;
    Ok((PyGrayImage { inner: t }, truth_dict(py, &truth)?))
}

/// Fraction of `footprint` pixels inside the kept region.
#[pyfunction]
fn overlap_preserved(result: &PyScreeningResult, footprint: Vec<(usize, usize)>) -> PyResult<f64> {
    let r = &result.inner;
    if footprint
        .iter()
        .any(|&(x, y)| x >= r.width || y >= r.height)
    {
        return Err(PyValueError::new_err("footprint pixel outside the image"));
    }
    Ok(synth_bench::overlap_with_mask(
        &r.region_mask,
        r.width,
        &footprint,
    ))
}

/// Photo-like synthetic test scene.
#[pyfunction]
fn synthetic_scene(width: usize, height: usize, seed: u64) -> PyResult<PyGrayImage> {
    if width == 0 || height == 0 {
        return Err(PyValueError::new_err("scene must be non-empty"));
    }
    Ok(PyGrayImage {
        inner: synth_bench::synthetic_scene(width, height, seed),
    })
}

#[pymodule]
fn starscreen_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrayImage>()?;
    m.add_class::<PyScreeningConfig>()?;
    m.add_class::<PyScreeningResult>()?;
    m.add_function(wrap_pyfunction!(screen, m)?)?;
    m.add_function(wrap_pyfunction!(match_candidates, m)?)?;
    m.add_function(wrap_pyfunction!(full_search, m)?)?;
    m.add_function(wrap_pyfunction!(ncc_score, m)?)?;
    m.add_function(wrap_pyfunction!(make_case, m)?)?;
    m.add_function(wrap_pyfunction!(overlap_preserved, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_scene, m)?)?;
    Ok(())
}
