//! Python bindings: feature extraction, synthetic data, training,
//! inference, metrics, and gradient checking.
//!
//! Configuration dicts use the same flat dotted keys as the CLI config
//! file, e.g. `{"model.lstm_hidden": 16, "train.lr": 1e-3}`.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

use listenhead_core::audio;
use listenhead_core::data;
use listenhead_core::error::Error;
use listenhead_core::eval;
use listenhead_core::model::{CoeffDims, CoeffFrame, CoeffSequence, ListenerHeadModel};
use listenhead_core::runconfig::ConfigBag;
use listenhead_core::train;

fn to_pyerr(err: Error) -> PyErr {
    match err {
        Error::Config(_) | Error::Contract(_) => PyValueError::new_err(err.to_string()),
        Error::Data(_) | Error::Io(_) => PyIOError::new_err(err.to_string()),
        Error::Numeric(_) => PyArithmeticError::new_err(err.to_string()),
    }
}

fn py_to_json(v: &Bound<'_, PyAny>) -> PyResult<Value> {
    if let Ok(b) = v.cast::<pyo3::types::PyBool>() {
        return Ok(Value::Bool(b.is_true()));
    }
    if let Ok(i) = v.extract::<u64>() {
        return Ok(Value::from(i));
    }
    if let Ok(i) = v.extract::<i64>() {
        return Ok(Value::from(i));
    }
    if let Ok(f) = v.extract::<f64>() {
        return Ok(Value::from(f));
    }
    if let Ok(s) = v.extract::<String>() {
        return Ok(Value::from(s));
    }
    if let Ok(list) = v.extract::<Vec<u64>>() {
        return Ok(Value::from(list));
    }
    Err(PyValueError::new_err(format!(
        "unsupported config value: {v:?}"
    )))
}

fn bag_from(config: Option<&Bound<'_, PyDict>>) -> PyResult<ConfigBag> {
    let mut bag = ConfigBag::default();
    if let Some(dict) = config {
        for (k, v) in dict.iter() {
            let key: String = k.extract()?;
            let value = py_to_json(&v)?;
            bag.set(&key, &value).map_err(to_pyerr)?;
        }
    }
    Ok(bag)
}

fn rows_to_image(rows: &[Vec<f64>]) -> PyResult<eval::GrayImage> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("image must have at least one row"));
    }
    let width = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * width);
    for row in rows {
        if row.len() != width {
            return Err(PyValueError::new_err("image rows have unequal lengths"));
        }
        data.extend_from_slice(row);
    }
    eval::GrayImage::new(rows.len(), width, data).map_err(to_pyerr)
}

fn rows_to_sequence(
    rows: &[Vec<f64>],
    angle: usize,
    translation: usize,
) -> PyResult<CoeffSequence> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("coefficient sequence is empty"));
    }
    let width = rows[0].len();
    if width <= angle + translation {
        return Err(PyValueError::new_err(format!(
            "rows have {width} columns; need more than angle + translation = {}",
            angle + translation
        )));
    }
    let dims = CoeffDims {
        angle,
        translation,
        expression: width - angle - translation,
    };
    let frames = rows
        .iter()
        .map(|r| CoeffFrame::from_flat(&dims, r).map_err(to_pyerr))
        .collect::<PyResult<Vec<_>>>()?;
    CoeffSequence::new(dims, frames).map_err(to_pyerr)
}

/// 45-column acoustic feature rows (one per video frame at 30 fps).
#[pyfunction]
#[pyo3(signature = (audio_path, window_len=1024, n_mels=26))]
fn extract_features(audio_path: PathBuf, window_len: usize, n_mels: usize) -> PyResult<Vec<Vec<f64>>> {
    let cfg = audio::FrontendConfig { window_len, n_mels };
    let feats = audio::extract_features_from_file(&audio_path, &cfg).map_err(to_pyerr)?;
    Ok(feats.rows().iter().map(|r| r.to_vec()).collect())
}

/// Write a deterministic synthetic dataset; returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, seed=0, clips=4, duration=2.0, angle_dim=3, translation_dim=3, expression_dim=64))]
#[allow(clippy::too_many_arguments)]
fn generate_synthetic(
    out_dir: PathBuf,
    seed: u64,
    clips: usize,
    duration: f64,
    angle_dim: usize,
    translation_dim: usize,
    expression_dim: usize,
) -> PyResult<String> {
    let dims = CoeffDims {
        angle: angle_dim,
        translation: translation_dim,
        expression: expression_dim,
    };
    let manifest = data::synthetic::generate_synthetic(&out_dir, seed, clips, duration, &dims)
        .map_err(to_pyerr)?;
    Ok(manifest.display().to_string())
}

/// Train on a manifest; writes a checkpoint to `out` after every epoch
/// and returns per-epoch loss dicts.
#[pyfunction]
#[pyo3(signature = (manifest, out, config=None))]
fn train_model(
    py: Python<'_>,
    manifest: PathBuf,
    out: PathBuf,
    config: Option<&Bound<'_, PyDict>>,
) -> PyResult<Vec<Py<PyDict>>> {
    let bag = bag_from(config)?;
    let model_cfg = bag.model_config().map_err(to_pyerr)?;
    let mut train_cfg = bag.train_config().map_err(to_pyerr)?;
    train_cfg.checkpoint_path = Some(out);
    let frontend = bag.frontend_config().map_err(to_pyerr)?;

    let loaded = data::load_clips(
        &manifest,
        &frontend,
        &model_cfg.coeff_dims,
        Some(data::Split::Train),
    )
    .map_err(to_pyerr)?;
    let clips: Vec<_> = loaded.into_iter().map(|l| l.clip).collect();

    let model = ListenerHeadModel::init(model_cfg).map_err(to_pyerr)?;
    let mut state = train::TrainState::new(model, &train_cfg);
    let report = train::train(&mut state, &clips, &train_cfg).map_err(to_pyerr)?;

    report
        .epochs
        .iter()
        .map(|e| {
            let d = PyDict::new(py);
            d.set_item("epoch", e.epoch)?;
            d.set_item("angle", e.angle)?;
            d.set_item("translation", e.translation)?;
            d.set_item("expression", e.expression)?;
            d.set_item("motion", e.motion)?;
            d.set_item("total", e.total)?;
            d.set_item("mean_per_frame", e.mean_per_frame)?;
            Ok(d.unbind())
        })
        .collect()
}

/// A trained model loaded from a checkpoint.
#[pyclass]
struct Model {
    inner: ListenerHeadModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Model> {
        let ckpt = train::load_checkpoint(&path).map_err(to_pyerr)?;
        Ok(Model { inner: ckpt.model })
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    #[getter]
    fn coeff_width(&self) -> usize {
        self.inner.config.coeff_dims.width()
    }

    #[getter]
    fn receptive_field(&self) -> usize {
        self.inner.config.receptive_field()
    }

    /// Predict coefficient rows for a WAV file given a flat reference
    /// frame (angle | translation | expression).
    #[pyo3(signature = (audio_path, ref_frame, window_len=1024, n_mels=26))]
    fn predict(
        &self,
        audio_path: PathBuf,
        ref_frame: Vec<f64>,
        window_len: usize,
        n_mels: usize,
    ) -> PyResult<Vec<Vec<f64>>> {
        let cfg = audio::FrontendConfig { window_len, n_mels };
        let feats = audio::extract_features_from_file(&audio_path, &cfg).map_err(to_pyerr)?;
        let dims = self.inner.config.coeff_dims;
        let reference = CoeffFrame::from_flat(&dims, &ref_frame).map_err(to_pyerr)?;
        let out = self.inner.predict(&feats, &reference).map_err(to_pyerr)?;
        Ok(out.frames().iter().map(|f| f.to_flat()).collect())
    }
}

/// Per-group mean absolute error x100 between coefficient row lists.
#[pyfunction]
#[pyo3(signature = (pred, gt, angle_dim=3, translation_dim=3))]
fn feature_distance(
    py: Python<'_>,
    pred: Vec<Vec<f64>>,
    gt: Vec<Vec<f64>>,
    angle_dim: usize,
    translation_dim: usize,
) -> PyResult<Py<PyDict>> {
    let p = rows_to_sequence(&pred, angle_dim, translation_dim)?;
    let g = rows_to_sequence(&gt, angle_dim, translation_dim)?;
    let r = eval::feature_distance(&p, &g).map_err(to_pyerr)?;
    let d = PyDict::new(py);
    d.set_item("angle", r.angle)?;
    d.set_item("exp", r.expression)?;
    d.set_item("trans", r.translation)?;
    Ok(d.unbind())
}

/// Composite training loss between coefficient row lists.
#[pyfunction]
#[pyo3(signature = (pred, gt, angle_dim=3, translation_dim=3, motion_on_angle=false))]
fn composite_loss(
    py: Python<'_>,
    pred: Vec<Vec<f64>>,
    gt: Vec<Vec<f64>>,
    angle_dim: usize,
    translation_dim: usize,
    motion_on_angle: bool,
) -> PyResult<Py<PyDict>> {
    let p = rows_to_sequence(&pred, angle_dim, translation_dim)?;
    let g = rows_to_sequence(&gt, angle_dim, translation_dim)?;
    let opts = train::LossOptions { motion_on_angle };
    let l = train::composite_loss(&p, &g, &opts).map_err(to_pyerr)?;
    let d = PyDict::new(py);
    d.set_item("angle_term", l.angle_term)?;
    d.set_item("translation_term", l.translation_term)?;
    d.set_item("expression_term", l.expression_term)?;
    d.set_item("motion_term", l.motion_term)?;
    d.set_item("total", l.total)?;
    Ok(d.unbind())
}

/// PSNR in dB between two images given as nested row lists.
#[pyfunction]
#[pyo3(signature = (a, b, peak=255.0))]
fn psnr(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, peak: f64) -> PyResult<f64> {
    eval::psnr(&rows_to_image(&a)?, &rows_to_image(&b)?, peak).map_err(to_pyerr)
}

/// SSIM between two images given as nested row lists.
#[pyfunction]
fn ssim(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    eval::ssim(&rows_to_image(&a)?, &rows_to_image(&b)?).map_err(to_pyerr)
}

/// No-reference blur score in [0, 1]; higher is sharper.
#[pyfunction]
fn cpbd(a: Vec<Vec<f64>>) -> PyResult<f64> {
    eval::cpbd(&rows_to_image(&a)?, &eval::CpbdConfig::default())
        .map(|r| r.value)
        .map_err(to_pyerr)
}

/// Average (ssim, psnr, cpbd) over paired PNG frame directories.
#[pyfunction]
fn eval_frames(pred_dir: PathBuf, gt_dir: PathBuf) -> PyResult<(f64, f64, f64)> {
    eval::evaluate_frame_dirs(&pred_dir, &gt_dir).map_err(to_pyerr)
}

/// Full-model gradient check against central finite differences.
#[pyfunction]
#[pyo3(signature = (config=None, seed=0, frames=3, epsilon=3e-4, tolerance=1e-4))]
fn grad_check(
    py: Python<'_>,
    config: Option<&Bound<'_, PyDict>>,
    seed: u64,
    frames: usize,
    epsilon: f64,
    tolerance: f64,
) -> PyResult<Py<PyDict>> {
    let bag = bag_from(config)?;
    let model_cfg = bag.model_config().map_err(to_pyerr)?;
    let model = ListenerHeadModel::init(model_cfg).map_err(to_pyerr)?;
    let report =
        train::grad_check_model(&model, frames, seed, epsilon, tolerance).map_err(to_pyerr)?;
    let d = PyDict::new(py);
    d.set_item("max_relative_error", report.max_relative_error)?;
    d.set_item("pass", report.pass)?;
    d.set_item("params", model.param_count())?;
    Ok(d.unbind())
}

/// Past-context span of the conv stack: `1 + (K - 1) * sum(dilations)`.
#[pyfunction]
fn receptive_field(kernel_size: usize, dilation_schedule: Vec<usize>) -> usize {
    1 + (kernel_size - 1) * dilation_schedule.iter().sum::<usize>()
}

/// Canonical 45-column feature CSV header.
#[pyfunction]
fn feature_csv_header(py: Python<'_>) -> PyResult<Py<PyList>> {
    let header = audio::csv_header();
    let items: Vec<&str> = header.split(',').collect();
    Ok(PyList::new(py, items)?.unbind())
}

#[pymodule]
fn listenhead(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(feature_distance, m)?)?;
    m.add_function(wrap_pyfunction!(composite_loss, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(cpbd, m)?)?;
    m.add_function(wrap_pyfunction!(eval_frames, m)?)?;
    m.add_function(wrap_pyfunction!(grad_check, m)?)?;
    m.add_function(wrap_pyfunction!(receptive_field, m)?)?;
    m.add_function(wrap_pyfunction!(feature_csv_header, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
