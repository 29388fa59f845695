//! Python bindings: images, metrics, degradations, the student network,
//! the rule teacher, the curriculum policy and the training entry points.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use fusecurr::agent::{log_prob, policy_forward, sample_action, PolicyParams, State, ACTION_DIM};
use fusecurr::config::TrainConfig;
use fusecurr::degrade::{degrade_image, DegradationParams};
use fusecurr::fusenet::{rule_teacher_fuse, StudentNet};
use fusecurr::imgio::{load_pgm, save_pgm, Image};
use fusecurr::metrics;
use fusecurr::trainer;

create_exception!(fusecurr, FusecurrError, PyException);

fn err(e: fusecurr::Error) -> PyErr {
    FusecurrError::new_err(format!("{}: {e}", e.kind()))
}

/// Grayscale image with samples in `[0, 1]`, stored row-major.
#[pyclass(name = "Image", module = "fusecurr", frozen)]
struct PyImage {
    inner: Image,
}

#[pymethods]
impl PyImage {
    #[new]
    fn new(height: usize, width: usize, data: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: Image::new(height, width, data).map_err(err)? })
    }

    #[staticmethod]
    fn filled(height: usize, width: usize, value: f64) -> PyResult<Self> {
        Ok(Self { inner: Image::filled(height, width, value).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: load_pgm(path).map_err(err)? })
    }

    #[pyo3(signature = (path, maxval = 255))]
    fn save(&self, path: PathBuf, maxval: u32) -> PyResult<()> {
        save_pgm(&self.inner, path, maxval).map_err(err)
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    fn data(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn get(&self, row: usize, col: usize) -> PyResult<f64> {
        if row >= self.inner.height() || col >= self.inner.width() {
            return Err(pyo3::exceptions::PyIndexError::new_err("pixel index out of range"));
        }
        Ok(self.inner.get(row, col))
    }

    fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> PyResult<Self> {
        Ok(Self { inner: self.inner.crop(top, left, height, width).map_err(err)? })
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.inner.height(), self.inner.width())
    }
}

#[pyfunction]
fn avg_gradient(img: &PyImage) -> f64 {
    metrics::avg_gradient(&img.inner)
}

#[pyfunction]
fn spatial_frequency(img: &PyImage) -> f64 {
    metrics::spatial_frequency(&img.inner)
}

#[pyfunction]
fn edge_intensity(img: &PyImage) -> f64 {
    metrics::edge_intensity(&img.inner)
}

#[pyfunction]
fn entropy(img: &PyImage) -> f64 {
    metrics::entropy(&img.inner)
}

#[pyfunction]
fn std_dev(img: &PyImage) -> f64 {
    metrics::std_dev(&img.inner)
}

#[pyfunction]
fn iqa_star(img: &PyImage) -> f64 {
    metrics::iqa_star(&img.inner)
}

#[pyfunction]
fn vif(reference: &PyImage, distorted: &PyImage) -> PyResult<f64> {
    metrics::vif(&reference.inner, &distorted.inner).map_err(err)
}

#[pyfunction]
fn viff(ir: &PyImage, vi: &PyImage, fused: &PyImage) -> PyResult<f64> {
    metrics::viff_fusion(&ir.inner, &vi.inner, &fused.inner).map_err(err)
}

/// The five state metrics as a dict keyed `ag`, `ei`, `vif`, `sd`, `iqa`.
#[pyfunction]
fn metric_vector(fused: &PyImage, ir: &PyImage, vi: &PyImage) -> PyResult<BTreeMap<&'static str, f64>> {
    let m = metrics::metric_vector(&fused.inner, &ir.inner, &vi.inner).map_err(err)?;
    Ok(metrics::METRIC_NAMES.into_iter().zip(m.to_array()).collect())
}

#[pyfunction]
#[pyo3(signature = (img, blur = 0.0, compress = 0.0, brightness = 0.5, contrast = 0.5, noise = 0.0, seed = 0))]
fn degrade(
    img: &PyImage,
    blur: f64,
    compress: f64,
    brightness: f64,
    contrast: f64,
    noise: f64,
    seed: u64,
) -> PyResult<PyImage> {
    let p = DegradationParams::new(blur, compress, brightness, contrast, noise).map_err(err)?;
    Ok(PyImage { inner: degrade_image(&img.inner, &p, seed) })
}

#[pyfunction]
fn rule_teacher(ir: &PyImage, vi: &PyImage) -> PyResult<PyImage> {
    Ok(PyImage { inner: rule_teacher_fuse(&ir.inner, &vi.inner).map_err(err)? })
}

/// The compact two-encoder fusion network.
#[pyclass(name = "StudentNet", module = "fusecurr")]
struct PyStudentNet {
    inner: StudentNet,
}

#[pymethods]
impl PyStudentNet {
    #[new]
    #[pyo3(signature = (seed = 0))]
    fn new(seed: u64) -> Self {
        Self { inner: StudentNet::new(seed) }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: StudentNet::load(path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn forward(&self, ir: &PyImage, vi: &PyImage) -> PyResult<PyImage> {
        Ok(PyImage { inner: self.inner.forward(&ir.inner, &vi.inner).map_err(err)? })
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }
}

fn to_state(v: &[f64]) -> PyResult<State> {
    State::from_slice(v).map_err(err)
}

fn to_raw(v: &[f64]) -> PyResult<[f64; ACTION_DIM]> {
    v.try_into()
        .map_err(|_| FusecurrError::new_err(format!("raw action needs {ACTION_DIM} components, got {}", v.len())))
}

/// Gaussian curriculum policy over raw actions.
#[pyclass(name = "Policy", module = "fusecurr")]
struct PyPolicy {
    inner: PolicyParams,
}

#[pymethods]
impl PyPolicy {
    #[new]
    #[pyo3(signature = (seed = 0))]
    fn new(seed: u64) -> Self {
        Self { inner: PolicyParams::new(seed) }
    }

    /// `(mean, log_std)` for a 10-component state.
    fn forward(&self, state: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let out = policy_forward(&self.inner, &to_state(&state)?).map_err(err)?;
        Ok((out.mean.to_vec(), out.log_std.to_vec()))
    }

    /// Returns a dict with `raw`, `alpha_t`, `alpha_s`, `degradation` and `log_prob`.
    fn act<'py>(&self, py: Python<'py>, state: Vec<f64>, noise_seed: u64) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
        let out = policy_forward(&self.inner, &to_state(&state)?).map_err(err)?;
        let s = sample_action(&out.mean, &out.log_std, noise_seed);
        let d = pyo3::types::PyDict::new(py);
        d.set_item("raw", s.raw.to_vec())?;
        d.set_item("alpha_t", s.action.alpha_t)?;
        d.set_item("alpha_s", s.action.alpha_s)?;
        d.set_item("degradation", s.action.d.to_array().to_vec())?;
        d.set_item("log_prob", s.log_prob)?;
        Ok(d)
    }

    fn log_prob(&self, state: Vec<f64>, raw: Vec<f64>) -> PyResult<f64> {
        log_prob(&self.inner, &to_state(&state)?, &to_raw(&raw)?).map_err(err)
    }
}

#[pyfunction]
fn returns_window(rewards: Vec<f64>, p: usize) -> Vec<f64> {
    fusecurr::agent::returns_window(&rewards, p)
}

/// Writes a synthetic dataset and returns the created paths.
#[pyfunction]
#[pyo3(signature = (out_dir, pairs = 4, size = 64, seed = 0))]
fn synth(out_dir: PathBuf, pairs: usize, size: usize, seed: u64) -> PyResult<Vec<PathBuf>> {
    trainer::make_synthetic_dataset(out_dir, pairs, size, seed).map_err(err)
}

fn config_from(overrides: BTreeMap<String, String>) -> PyResult<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for (k, v) in &overrides {
        cfg.set(k, v).map_err(err)?;
    }
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// The effective `key = value` configuration for the given overrides.
#[pyfunction]
#[pyo3(signature = (overrides = BTreeMap::new()))]
fn config_dump(overrides: BTreeMap<String, String>) -> PyResult<String> {
    Ok(config_from(overrides)?.dump())
}

/// Full training run; keys are the config-file keys, values strings.
/// Returns `(pretrain_mean_l_t, rewards)`.
#[pyfunction]
fn train(py: Python<'_>, overrides: BTreeMap<String, String>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let cfg = config_from(overrides)?;
    let report = py.detach(|| trainer::train(&cfg)).map_err(err)?;
    Ok((report.pretrain_lt, report.rows.iter().map(|r| r.reward.r).collect()))
}

#[pymodule(name = "fusecurr")]
fn fusecurr_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FusecurrError", m.py().get_type::<FusecurrError>())?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyStudentNet>()?;
    m.add_class::<PyPolicy>()?;
    m.add_function(wrap_pyfunction!(avg_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(spatial_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(edge_intensity, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(std_dev, m)?)?;
    m.add_function(wrap_pyfunction!(iqa_star, m)?)?;
    m.add_function(wrap_pyfunction!(vif, m)?)?;
    m.add_function(wrap_pyfunction!(viff, m)?)?;
    m.add_function(wrap_pyfunction!(metric_vector, m)?)?;
    m.add_function(wrap_pyfunction!(degrade, m)?)?;
    m.add_function(wrap_pyfunction!(rule_teacher, m)?)?;
    m.add_function(wrap_pyfunction!(returns_window, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(config_dump, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
