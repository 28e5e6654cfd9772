//! Python bindings: piano rolls, the correlation model, the follower and
//! the evaluation metrics.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};
use pyo3::IntoPyObjectExt;

use scorefollow::augment::{apply_chain, default_chain, parse_chain, RngSeed};
use scorefollow::dataset::synth::{synth_piece, SynthConfig};
use scorefollow::eval::{self, DEFAULT_THRESHOLDS_MS};
use scorefollow::follower::{self, FollowTrace, FollowerConfig, Source, TraceEntry};
use scorefollow::midi_io::{self, parse_smf, to_piano_roll, write_smf, DEFAULT_FRAME_DURATION};
use scorefollow::osc::{self, OscArg, OscMessage};
use scorefollow::tyke::{self, read_checkpoint, write_checkpoint, ModelParams};
use scorefollow::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        Error::InvalidConfig(_) | Error::Parse { .. } | Error::UnsupportedOscArg(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Binary 128-pitch piano roll.
#[pyclass(name = "PianoRoll", module = "scorefollow_py")]
struct PyRoll {
    inner: midi_io::PianoRoll,
}

#[pymethods]
impl PyRoll {
    #[staticmethod]
    #[pyo3(signature = (n_frames, frame_duration = DEFAULT_FRAME_DURATION))]
    fn zeros(n_frames: usize, frame_duration: f64) -> Self {
        Self {
            inner: midi_io::PianoRoll::zeros(n_frames, frame_duration),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (data, frame_duration = DEFAULT_FRAME_DURATION))]
    fn from_midi_bytes(data: &[u8], frame_duration: f64) -> PyResult<Self> {
        let seq = parse_smf(data).map_err(py_err)?;
        Ok(Self {
            inner: to_piano_roll(&seq, frame_duration),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (path, frame_duration = DEFAULT_FRAME_DURATION))]
    fn from_midi_file(path: PathBuf, frame_duration: f64) -> PyResult<Self> {
        let data = std::fs::read(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_midi_bytes(&data, frame_duration)
    }

    #[getter]
    fn n_frames(&self) -> usize {
        self.inner.n_frames()
    }

    #[getter]
    fn frame_duration(&self) -> f64 {
        self.inner.frame_duration()
    }

    fn get(&self, pitch: usize, frame: usize) -> PyResult<bool> {
        if pitch >= midi_io::PITCHES || frame >= self.inner.n_frames() {
            return Err(PyValueError::new_err("cell out of range"));
        }
        Ok(self.inner.get(pitch, frame))
    }

    fn set(&mut self, pitch: usize, frame: usize, on: bool) -> PyResult<()> {
        if pitch >= midi_io::PITCHES || frame >= self.inner.n_frames() {
            return Err(PyValueError::new_err("cell out of range"));
        }
        self.inner.set(pitch, frame, on);
        Ok(())
    }

    /// `length` columns from `start`, zero-padded outside the roll.
    fn slice(&self, start: isize, length: usize) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.slice(start, length, true).map_err(py_err)?,
        })
    }

    /// `(pitch, frame)` of every set cell.
    fn active_cells(&self) -> Vec<(usize, usize)> {
        self.inner.active_cells()
    }

    fn count_active(&self) -> usize {
        self.inner.count_active()
    }

    fn tempo_rescale(&self, factor: f64) -> PyResult<Self> {
        Ok(Self {
            inner: eval::tempo_rescale(&self.inner, factor).map_err(py_err)?,
        })
    }

    fn to_pgm<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.render_pgm())
    }

    fn __len__(&self) -> usize {
        self.inner.n_frames()
    }

    fn __repr__(&self) -> String {
        format!(
            "PianoRoll(n_frames={}, frame_duration={}, active={})",
            self.inner.n_frames(),
            self.inner.frame_duration(),
            self.inner.count_active()
        )
    }
}

/// Dual-encoder correlation model.
#[pyclass(name = "Model", module = "scorefollow_py")]
struct PyModel {
    inner: ModelParams,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    #[pyo3(signature = (latent = 64, kernel = 3, seed = 0))]
    fn random(latent: usize, kernel: usize, seed: u64) -> Self {
        Self {
            inner: ModelParams::random(latent, kernel, &mut RngSeed(seed).rng()),
        }
    }

    /// Identity encoders: the output equals raw piano-roll correlation.
    #[staticmethod]
    #[pyo3(signature = (kernel = 3))]
    fn delta(kernel: usize) -> Self {
        Self {
            inner: ModelParams::delta(kernel),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let file = File::open(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Ok(Self {
            inner: read_checkpoint(BufReader::new(file)).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let file = File::create(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        write_checkpoint(&self.inner, BufWriter::new(file)).map_err(py_err)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    #[getter]
    fn latent_channels(&self) -> usize {
        self.inner.latent_channels()
    }

    #[getter]
    fn kernel(&self) -> usize {
        self.inner.kernel()
    }

    /// Correlation scores for every window right-edge position.
    fn forward(&self, context: &PyRoll, window: &PyRoll) -> PyResult<Vec<f64>> {
        Ok(self.inner.forward(&context.inner, &window.inner).map_err(py_err)?.0)
    }

    fn predict(&self, context: &PyRoll, window: &PyRoll) -> PyResult<usize> {
        let out = self.inner.forward(&context.inner, &window.inner).map_err(py_err)?;
        tyke::predict(out.values()).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(latent_channels={}, kernel={}, params={})",
            self.inner.latent_channels(),
            self.inner.kernel(),
            self.inner.param_count()
        )
    }
}

/// Index of the maximum, lowest index on ties.
#[pyfunction]
fn predict(scores: Vec<f64>) -> PyResult<usize> {
    tyke::predict(&scores).map_err(py_err)
}

/// Position predicted by raw piano-roll correlation.
#[pyfunction]
fn baseline_predict(context: &PyRoll, window: &PyRoll) -> PyResult<usize> {
    tyke::baseline_predict(&context.inner, &window.inner).map_err(py_err)
}

/// `(pitch, onset_s, duration_s, velocity, track)` for every note.
#[pyfunction]
fn parse_midi_notes(data: &[u8]) -> PyResult<Vec<(u8, f64, f64, u8, usize)>> {
    let seq = parse_smf(data).map_err(py_err)?;
    Ok(seq
        .notes
        .iter()
        .map(|n| (n.pitch, n.onset, n.duration, n.velocity, n.track))
        .collect())
}

/// A synthetic piano piece as Standard MIDI File bytes, optionally led by a
/// count-in chord of `count_in_frames` frames.
#[pyfunction]
#[pyo3(signature = (duration, seed = 0, count_in_frames = 0))]
fn synth_midi<'py>(py: Python<'py>, duration: f64, seed: u64, count_in_frames: usize) -> PyResult<Bound<'py, PyBytes>> {
    if !(duration > 0.0) {
        return Err(PyValueError::new_err("duration must be positive"));
    }
    let cfg = SynthConfig::new(duration).with_count_in(count_in_frames);
    let seq = synth_piece(&cfg, RngSeed(seed));
    Ok(PyBytes::new(py, &write_smf(&seq, 480)))
}

/// Applies an augmentation chain (built-in when `chain` is None) to MIDI
/// bytes and returns the augmented file.
#[pyfunction]
#[pyo3(signature = (data, seed = 0, chain = None))]
fn augment_midi<'py>(py: Python<'py>, data: &[u8], seed: u64, chain: Option<&str>) -> PyResult<Bound<'py, PyBytes>> {
    let seq = parse_smf(data).map_err(py_err)?;
    let specs = match chain {
        Some(text) => parse_chain(text).map_err(py_err)?,
        None => default_chain(),
    };
    let out = apply_chain(&seq, &specs, &mut RngSeed(seed).rng());
    Ok(PyBytes::new(py, &write_smf(&out, 480)))
}

type TraceTuple = (usize, f64, f64, usize, String);

/// Simulated real-time following; returns
/// `(tick, sim_time_s, wall_latency_ms, score_frame, source)` rows.
#[pyfunction]
#[pyo3(signature = (score, performance, model, c = 1250, w = 500, fe = 10.0))]
fn follow(score: &PyRoll, performance: &PyRoll, model: &PyModel, c: usize, w: usize, fe: f64) -> PyResult<Vec<TraceTuple>> {
    let cfg = FollowerConfig {
        c,
        w,
        f_e: fe,
        frame_duration: score.inner.frame_duration(),
        ..FollowerConfig::default()
    };
    let trace = follower::run_follow(&score.inner, &performance.inner, &model.inner, &cfg).map_err(py_err)?;
    Ok(trace
        .entries
        .into_iter()
        .map(|e| (e.tick, e.sim_time_s, e.wall_latency_ms, e.score_frame, e.source.to_string()))
        .collect())
}

fn trace_from_tuples(rows: Vec<TraceTuple>) -> PyResult<FollowTrace> {
    let entries = rows
        .into_iter()
        .map(|(tick, sim_time_s, wall_latency_ms, score_frame, source)| {
            Ok(TraceEntry {
                tick,
                sim_time_s,
                wall_latency_ms,
                score_frame,
                source: source.parse::<Source>().map_err(py_err)?,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok(FollowTrace { entries })
}

/// Metrics of a trace against DTW ground truth, as a dict with `rows`
/// (`(theta_ms, misalign_rate_pct, mean_err_ms, sd_err_ms)`), `n_events`,
/// `latency_mean_ms` and `latency_sd_ms`.
#[pyfunction]
#[pyo3(signature = (trace, score, performance, thresholds = None, include_stabilizing = false))]
fn evaluate<'py>(
    py: Python<'py>,
    trace: Vec<TraceTuple>,
    score: &PyRoll,
    performance: &PyRoll,
    thresholds: Option<Vec<f64>>,
    include_stabilizing: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let trace = trace_from_tuples(trace)?;
    let thresholds = thresholds.unwrap_or_else(|| DEFAULT_THRESHOLDS_MS.to_vec());
    let report = eval::evaluate(&trace, &score.inner, &performance.inner, &thresholds, include_stabilizing)
        .map_err(py_err)?;
    let rows: Vec<(f64, f64, f64, f64)> = report
        .rows
        .iter()
        .map(|r| (r.theta_ms, r.misalign_rate_pct, r.mean_err_ms, r.sd_err_ms))
        .collect();
    let out = PyDict::new(py);
    out.set_item("rows", rows)?;
    out.set_item("n_events", report.n_events)?;
    out.set_item("latency_mean_ms", report.latency_mean_ms)?;
    out.set_item("latency_sd_ms", report.latency_sd_ms)?;
    Ok(out)
}

/// DTW warping path `(pairs, cost)` between two rolls.
#[pyfunction]
fn dtw_align(performance: &PyRoll, score: &PyRoll) -> PyResult<(Vec<(usize, usize)>, u64)> {
    let path = eval::dtw_align(&performance.inner, &score.inner).map_err(py_err)?;
    Ok((path.pairs, path.cost))
}

/// OSC 1.0 packet for `address` with int, float or str arguments.
#[pyfunction]
#[pyo3(signature = (address, args = Vec::new()))]
fn osc_encode<'py>(py: Python<'py>, address: &str, args: Vec<Bound<'py, PyAny>>) -> PyResult<Bound<'py, PyBytes>> {
    let args = args
        .iter()
        .map(|a| {
            if let Ok(v) = a.extract::<i32>() {
                Ok(OscArg::Int(v))
            } else if let Ok(v) = a.extract::<f32>() {
                Ok(OscArg::Float(v))
            } else if let Ok(v) = a.extract::<String>() {
                Ok(OscArg::Str(v))
            } else {
                Err(PyValueError::new_err(format!("unsupported OSC argument {a}")))
            }
        })
        .collect::<PyResult<Vec<_>>>()?;
    let bytes = osc::encode(&OscMessage::new(address, args)).map_err(py_err)?;
    Ok(PyBytes::new(py, &bytes))
}

/// `(address, args)` decoded from an OSC packet.
#[pyfunction]
fn osc_decode(py: Python<'_>, data: &[u8]) -> PyResult<(String, Vec<Py<PyAny>>)> {
    let msg = osc::decode(data).map_err(py_err)?;
    let args = msg
        .args
        .into_iter()
        .map(|a| match a {
            OscArg::Int(v) => v.into_py_any(py),
            OscArg::Float(v) => v.into_py_any(py),
            OscArg::Str(v) => v.into_py_any(py),
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((msg.address, args))
}

#[pymodule]
fn scorefollow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DEFAULT_FRAME_DURATION", DEFAULT_FRAME_DURATION)?;
    m.add_class::<PyRoll>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(baseline_predict, m)?)?;
    m.add_function(wrap_pyfunction!(parse_midi_notes, m)?)?;
    m.add_function(wrap_pyfunction!(synth_midi, m)?)?;
    m.add_function(wrap_pyfunction!(augment_midi, m)?)?;
    m.add_function(wrap_pyfunction!(follow, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(dtw_align, m)?)?;
    m.add_function(wrap_pyfunction!(osc_encode, m)?)?;
    m.add_function(wrap_pyfunction!(osc_decode, m)?)?;
    Ok(())
}
