//! Python bindings: features, inference, tracking and evaluation.

use std::path::PathBuf;
use std::sync::Arc;

use ::lyrictrack as engine;
use engine::features::{extract, resample, AudioBuffer, FeatureConfig, FeatureMatrix, Variant};
use engine::net::{Network, NetworkSpec, WeightStore};
use engine::posteriogram::{self as pgm, BlankStripper, PhonemeVocab};
use engine::tracker::{AlignmentEvent, TrackerConfig, TrackerState};
use engine::{Error, Matrix};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::File { .. } | Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f32>>) -> PyResult<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    Matrix::from_rows(cols, rows).map_err(py_err)
}

fn to_lists(m: &Matrix) -> Vec<Vec<f32>> {
    m.iter_rows().map(<[f32]>::to_vec).collect()
}

/// Time x 60 phoneme posteriogram, stored as log-probabilities.
#[pyclass(name = "Posteriogram", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPosteriogram {
    inner: pgm::Posteriogram,
}

#[pymethods]
impl PyPosteriogram {
    #[staticmethod]
    #[pyo3(signature = (rows, frame_period_ms = 40.0))]
    fn from_probabilities(rows: Vec<Vec<f32>>, frame_period_ms: f64) -> PyResult<Self> {
        let inner = pgm::Posteriogram::from_probabilities(&matrix(rows)?, frame_period_ms, PhonemeVocab::default())
            .map_err(py_err)?;
        Ok(PyPosteriogram { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = pgm::Posteriogram::load(&path).map_err(py_err)?;
        Ok(PyPosteriogram { inner })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(py_err)
    }

    #[getter]
    fn n_frames(&self) -> usize {
        self.inner.n_frames()
    }

    #[getter]
    fn frame_period_ms(&self) -> f64 {
        self.inner.frame_period_ms()
    }

    fn log_probs(&self) -> Vec<Vec<f32>> {
        to_lists(self.inner.data())
    }

    fn probabilities(&self) -> Vec<Vec<f32>> {
        to_lists(&pgm::to_probabilities(&self.inner))
    }

    fn vocab(&self) -> Vec<String> {
        self.inner.vocab().tokens().to_vec()
    }

    fn __len__(&self) -> usize {
        self.inner.n_frames()
    }

    fn __repr__(&self) -> String {
        format!(
            "Posteriogram(n_frames={}, frame_period_ms={})",
            self.inner.n_frames(),
            self.inner.frame_period_ms()
        )
    }
}

#[pyclass(name = "AlignmentEvent", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyEvent {
    target_index: usize,
    target_time_ms: f64,
    reference_index: usize,
    reference_time_ms: f64,
    normalized_cost: f64,
    exhausted: bool,
}

impl From<AlignmentEvent> for PyEvent {
    fn from(e: AlignmentEvent) -> Self {
        PyEvent {
            target_index: e.target_index,
            target_time_ms: e.target_time_ms,
            reference_index: e.reference_index,
            reference_time_ms: e.reference_time_ms,
            normalized_cost: e.normalized_cost,
            exhausted: e.exhausted,
        }
    }
}

#[pymethods]
impl PyEvent {
    fn __repr__(&self) -> String {
        format!(
            "AlignmentEvent(target_time_ms={}, reference_time_ms={}, normalized_cost={:.4})",
            self.target_time_ms, self.reference_time_ms, self.normalized_cost
        )
    }
}

fn tracker_config(window: usize, monotonic: bool) -> TrackerConfig {
    TrackerConfig {
        window_frames: window,
        monotonic,
        ..TrackerConfig::default()
    }
}

/// Online tracker fed one probability row at a time. Blank frames are
/// skipped and return `None`.
#[pyclass(name = "Tracker")]
struct PyTracker {
    state: TrackerState,
    stripper: BlankStripper,
}

#[pymethods]
impl PyTracker {
    #[new]
    #[pyo3(signature = (reference, window = 8000, monotonic = true))]
    fn new(reference: &PyPosteriogram, window: usize, monotonic: bool) -> PyResult<Self> {
        let prepared = engine::replay::prepare_reference(&reference.inner).map_err(py_err)?;
        let blank = prepared.stripped().vocab.blank_index();
        let state = TrackerState::new(prepared, tracker_config(window, monotonic)).map_err(py_err)?;
        Ok(PyTracker {
            state,
            stripper: BlankStripper::new(blank),
        })
    }

    fn step(&mut self, probabilities: Vec<f32>) -> PyResult<Option<PyEvent>> {
        let Some(index) = self.stripper.push(&probabilities) else {
            return Ok(None);
        };
        self.state
            .step(&probabilities, index)
            .map(|e| Some(e.into()))
            .map_err(py_err)
    }

    fn reset(&mut self) {
        self.state.reset();
        self.stripper = BlankStripper::new(self.state.reference().stripped().vocab.blank_index());
    }

    /// Current position as a stripped reference index.
    #[getter]
    fn position(&self) -> usize {
        self.state.position()
    }

    #[getter]
    fn window_frames(&self) -> usize {
        self.state.config().window_frames
    }

    #[getter]
    fn last_distance_evals(&self) -> usize {
        self.state.last_distance_evals()
    }
}

#[pyfunction]
#[pyo3(signature = (spec = "builtin:table1"))]
fn receptive_field(spec: &str) -> PyResult<(usize, usize)> {
    let spec = NetworkSpec::from_arg(spec).map_err(py_err)?;
    Ok(engine::net::receptive_field(&spec))
}

/// Feature rows for mono samples; resamples to the variant's rate.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate_hz, variant = "model80"))]
fn extract_features(samples: Vec<f64>, sample_rate_hz: u32, variant: &str) -> PyResult<Vec<Vec<f32>>> {
    let variant: Variant = variant.parse().map_err(py_err)?;
    let config = FeatureConfig::for_variant(variant);
    let mut audio = AudioBuffer::new(samples, sample_rate_hz).map_err(py_err)?;
    if sample_rate_hz != config.sample_rate_hz {
        audio = resample(&audio, config.sample_rate_hz).map_err(py_err)?;
    }
    Ok(to_lists(&extract(&audio, &config).map_err(py_err)?.data))
}

/// Batch inference over 80-dim feature rows, with weights from `weights_path`
/// or randomly initialized from `seed`.
#[pyfunction]
#[pyo3(signature = (features, weights_path = None, seed = 0))]
fn infer(features: Vec<Vec<f32>>, weights_path: Option<PathBuf>, seed: u64) -> PyResult<PyPosteriogram> {
    let spec = NetworkSpec::table1();
    let weights = match weights_path {
        Some(p) => WeightStore::load(&p),
        None => WeightStore::random(&spec, seed),
    }
    .map_err(py_err)?;
    let features = FeatureMatrix {
        data: matrix(features)?,
        frame_period_ms: spec.input_period_ms,
        first_frame_center_ms: 0.0,
    };
    let net = Arc::new(Network::new(spec, &weights).map_err(py_err)?);
    let inner = net.infer(&features, PhonemeVocab::default()).map_err(py_err)?;
    Ok(PyPosteriogram { inner })
}

#[pyfunction]
fn cosine_distance(u: Vec<f32>, v: Vec<f32>) -> PyResult<f64> {
    engine::tracker::cosine_distance(&u, &v).map_err(py_err)
}

/// Replays `target` against `reference` and returns every event.
#[pyfunction]
#[pyo3(signature = (reference, target, window = 8000, monotonic = true))]
fn track(
    reference: &PyPosteriogram,
    target: &PyPosteriogram,
    window: usize,
    monotonic: bool,
) -> PyResult<Vec<PyEvent>> {
    let prepared = engine::replay::prepare_reference(&reference.inner).map_err(py_err)?;
    let events = engine::replay::replay_posteriogram(prepared, &target.inner, tracker_config(window, monotonic))
        .map_err(py_err)?;
    Ok(events.into_iter().map(PyEvent::from).collect())
}

/// Returns `(mean_error_ms, pct_within_1s)`.
#[pyfunction]
fn metrics(detected_ms: Vec<f64>, truth_ms: Vec<f64>) -> PyResult<(f64, f64)> {
    let m = engine::eval::metrics(&detected_ms, &truth_ms).map_err(py_err)?;
    Ok((m.mean_error_ms, m.pct_within_1s))
}

#[pyfunction]
#[pyo3(signature = (n_frames, seed = 0))]
fn synthetic_reference(n_frames: usize, seed: u64) -> PyResult<PyPosteriogram> {
    let inner = engine::synth::synthetic_reference(n_frames, seed).map_err(py_err)?;
    Ok(PyPosteriogram { inner })
}

/// Warps `reference` along `(reference_ms, target_ms)` breakpoints. Returns
/// the target and the reference frame each target frame came from.
#[pyfunction]
#[pyo3(signature = (reference, breakpoints, noise_level = 0.0, seed = 0))]
fn synth_warp(
    reference: &PyPosteriogram,
    breakpoints: Vec<(f64, f64)>,
    noise_level: f64,
    seed: u64,
) -> PyResult<(PyPosteriogram, Vec<usize>)> {
    let spec = engine::synth::WarpSpec {
        breakpoints,
        noise_level,
    };
    let (inner, truth) = engine::synth::synth_warp(&reference.inner, &spec, seed).map_err(py_err)?;
    Ok((PyPosteriogram { inner }, truth.source_frames))
}

#[pymodule]
fn lyrictrack_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPosteriogram>()?;
    m.add_class::<PyEvent>()?;
    m.add_class::<PyTracker>()?;
    m.add_function(wrap_pyfunction!(receptive_field, m)?)?;
    m.add_function(wrap_pyfunction!(extract_features, m)?)?;
    m.add_function(wrap_pyfunction!(infer, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_distance, m)?)?;
    m.add_function(wrap_pyfunction!(track, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(synthetic_reference, m)?)?;
    m.add_function(wrap_pyfunction!(synth_warp, m)?)?;
    m.add("DEFAULT_WINDOW_FRAMES", engine::tracker::DEFAULT_WINDOW_FRAMES)?;
    Ok(())
}
