//! Python bindings: kernels, toy targets, training, time-domain rendering,
//! metrics and loss-surface analysis.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use modfx::analysis;
use modfx::diffmodel::{self, FbConfig, Variant};
use modfx::io;
use modfx::signals::{self, KernelKind};
use modfx::spectral::HalfSpectrum;
use modfx::tdengine::{self, ControlMode, RenderOptions, ToyConfig, ToyKind};
use modfx::trainer::{self, Preemphasis, Profile};
use modfx::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ if e.is_numeric() => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn variant(name: &str, k: u32) -> PyResult<Variant> {
    match name {
        "delay-line" | "flanger" | "chorus" => Ok(Variant::DelayLine),
        "apf-cascade" | "phaser" => Ok(Variant::ApfCascade { k }),
        other => Err(PyValueError::new_err(format!("unknown variant `{other}`"))),
    }
}

/// Trained or constructed model parameters.
#[pyclass(name = "ModelParams", module = "modfx_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyModelParams {
    inner: diffmodel::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: io::load_params(path.as_ref()).map_err(err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: io::params_from_json(text).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        io::save_params(path.as_ref(), &self.inner).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        io::params_to_json(&self.inner).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn sample_rate(&self) -> f64 {
        self.inner.sample_rate
    }

    #[getter]
    fn frames(&self) -> usize {
        self.inner.frame_count()
    }

    #[getter]
    fn channels(&self) -> usize {
        self.inner.channel_count()
    }

    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    fn flatten(&self) -> Vec<f64> {
        self.inner.flatten()
    }

    fn with_flat(&self, values: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: self.inner.with_flat(&values).map_err(err)? })
    }

    /// Frame-rate control signal of every channel.
    fn controls(&self) -> Vec<Vec<f64>> {
        self.inner.controls()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelParams(n={}, frames={}, channels={}, sample_rate={})",
            self.inner.n,
            self.inner.frame_count(),
            self.inner.channel_count(),
            self.inner.sample_rate
        )
    }
}

/// Training configuration; unset arguments take the profile defaults.
#[pyclass(name = "TrainConfig", module = "modfx_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyTrainConfig {
    inner: trainer::TrainConfig,
}

#[pymethods]
impl PyTrainConfig {
    #[new]
    #[pyo3(signature = (profile="desk", variant_name="delay-line", k=6, fb_config="i", channels=None, n=None, n_prime=None,
        length=None, input_kind=None, preemphasis=None, iterations=None, learning_rate=None, seeds=None, base_seed=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        profile: &str,
        variant_name: &str,
        k: u32,
        fb_config: &str,
        channels: Option<usize>,
        n: Option<usize>,
        n_prime: Option<usize>,
        length: Option<usize>,
        input_kind: Option<&str>,
        preemphasis: Option<&str>,
        iterations: Option<usize>,
        learning_rate: Option<f64>,
        seeds: Option<usize>,
        base_seed: Option<u64>,
    ) -> PyResult<Self> {
        let mut c = trainer::TrainConfig::new(parse::<Profile>(profile)?, variant(variant_name, k)?);
        c.fb_config = parse::<FbConfig>(fb_config)?;
        if let Some(v) = n {
            c.n = v;
        }
        c.n_prime = n_prime.unwrap_or(c.n / 2);
        c.channels = channels.unwrap_or(c.channels);
        c.length = length.unwrap_or(c.length);
        if let Some(v) = input_kind {
            c.input_kind = parse::<KernelKind>(v)?;
        }
        if let Some(v) = preemphasis {
            c.preemphasis = parse::<Preemphasis>(v)?;
        }
        c.iterations = iterations.unwrap_or(c.iterations);
        c.learning_rate = learning_rate.unwrap_or(c.learning_rate);
        c.seeds = seeds.unwrap_or(c.seeds);
        c.base_seed = base_seed.unwrap_or(c.base_seed);
        c.validate().map_err(err)?;
        Ok(Self { inner: c })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn n_prime(&self) -> usize {
        self.inner.n_prime
    }

    #[getter]
    fn length(&self) -> usize {
        self.inner.length
    }

    #[getter]
    fn frames(&self) -> usize {
        self.inner.frames()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn sample_rate(&self) -> f64 {
        self.inner.sample_rate
    }

    /// The repeated-kernel training input, flattened to `length` samples.
    fn training_input(&self) -> PyResult<Vec<f64>> {
        Ok(self.inner.training_input().map_err(err)?.flatten())
    }

    fn init_params(&self, seed: u64) -> PyResult<PyModelParams> {
        Ok(PyModelParams { inner: diffmodel::init_params(seed, &self.inner.shape()).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Kernel samples of `kind` (`tri`, `lin-chirp`, `ap-chirp`).
#[pyfunction]
fn gen_kernel(kind: &str, n_prime: usize, n: usize) -> PyResult<Vec<f64>> {
    Ok(signals::gen_kernel(parse(kind)?, n_prime, n).map_err(err)?.samples)
}

fn toy(kind: &str, n: usize, sample_rate: f64, lfo_rate_hz: f64) -> PyResult<ToyConfig> {
    Ok(ToyConfig::new(parse::<ToyKind>(kind)?, n, sample_rate, lfo_rate_hz))
}

/// Applies the toy `flanger` or `phaser` to `x`.
#[pyfunction]
#[pyo3(signature = (kind, x, lfo_rate_hz, n=1024, sample_rate=44100.0))]
fn make_toy_target(kind: &str, x: Vec<f64>, lfo_rate_hz: f64, n: usize, sample_rate: f64) -> PyResult<Vec<f64>> {
    tdengine::make_toy_target(&toy(kind, n, sample_rate, lfo_rate_hz)?, &x).map_err(err)
}

/// The toy target expressed as model parameters over `frames` frames.
#[pyfunction]
#[pyo3(signature = (kind, frames, lfo_rate_hz, n=1024, sample_rate=44100.0))]
fn toy_params(kind: &str, frames: usize, lfo_rate_hz: f64, n: usize, sample_rate: f64) -> PyResult<PyModelParams> {
    Ok(PyModelParams { inner: toy(kind, n, sample_rate, lfo_rate_hz)?.params(frames) })
}

/// Per-frame delay (flanger) or pole (phaser) of the toy target.
#[pyfunction]
#[pyo3(signature = (kind, frames, lfo_rate_hz, n=1024, sample_rate=44100.0))]
fn toy_trajectory(kind: &str, frames: usize, lfo_rate_hz: f64, n: usize, sample_rate: f64) -> PyResult<Vec<f64>> {
    Ok(toy(kind, n, sample_rate, lfo_rate_hz)?.frame_trajectory(frames))
}

#[pyfunction]
#[pyo3(signature = (length, seed, sample_rate=44100.0))]
fn validation_signal(length: usize, seed: u64, sample_rate: f64) -> Vec<f64> {
    tdengine::validation_signal(length, sample_rate, seed)
}

/// Trains one seed; returns `(params, loss_history)`.
#[pyfunction]
fn train(py: Python<'_>, config: &PyTrainConfig, seed: u64, input: Vec<f64>, target: Vec<f64>) -> PyResult<(PyModelParams, Vec<f64>)> {
    let c = config.inner.clone();
    let framed = signals::FramedInput {
        frames: signals::frame_signal(&input, c.n).map_err(err)?,
        frame_len: c.n,
        kernel_len: c.n_prime,
    };
    let out = py.detach(|| trainer::train(&c, seed, &framed, &target)).map_err(err)?;
    Ok((PyModelParams { inner: out.params }, out.history))
}

/// Renders `x` through the time-domain model.
#[pyfunction]
#[pyo3(signature = (params, x, rate_scale=1.0, frame_interp=false))]
fn process(py: Python<'_>, params: &PyModelParams, x: Vec<f64>, rate_scale: f64, frame_interp: bool) -> PyResult<Vec<f64>> {
    let mode = if frame_interp { ControlMode::FrameInterp } else { ControlMode::Wavetable };
    let opts = RenderOptions { rate_scale, mode, frame_offset: 0.0 };
    py.detach(|| tdengine::process(&params.inner, &x, &opts)).map_err(err)
}

/// Validation metrics as a dict: `esr`, `esr_db`, `mrsl`, `alignment`.
#[pyfunction]
#[pyo3(signature = (params, input, target, align=false))]
fn validate<'py>(
    py: Python<'py>,
    params: &PyModelParams,
    input: Vec<f64>,
    target: Vec<f64>,
    align: bool,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let m = py.detach(|| trainer::validate(&params.inner, &input, &target, align)).map_err(err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("esr", m.esr)?;
    d.set_item("esr_db", m.esr_db)?;
    d.set_item("mrsl", m.mrsl)?;
    d.set_item("alignment", m.alignment)?;
    Ok(d)
}

#[pyfunction]
fn esr_db(target: Vec<f64>, pred: Vec<f64>) -> PyResult<f64> {
    trainer::esr_db(&target, &pred).map_err(err)
}

#[pyfunction]
fn mrsl(target: Vec<f64>, pred: Vec<f64>) -> PyResult<f64> {
    trainer::mrsl(&target, &pred).map_err(err)
}

#[pyfunction]
fn estimate_f0(control: Vec<f64>, frame_rate: f64) -> PyResult<f64> {
    tdengine::estimate_f0(&control, frame_rate).map_err(err)
}

fn spectrum(kernel: &str, n: usize, n_prime: usize) -> PyResult<HalfSpectrum> {
    if kernel == "flat" {
        return Ok(HalfSpectrum::ones(n));
    }
    signals::gen_kernel(parse(kernel)?, n_prime, n).and_then(|k| k.spectrum(n)).map_err(err)
}

/// `(loss, d loss / d dhat)` of a pure delay against `d`.
#[pyfunction]
#[pyo3(signature = (dhat, d, n, kernel="flat", n_prime=1))]
fn delay_loss(dhat: f64, d: f64, n: usize, kernel: &str, n_prime: usize) -> PyResult<(f64, f64)> {
    Ok(analysis::delay_loss(dhat, d, &spectrum(kernel, n, n_prime)?))
}

#[pyfunction]
#[pyo3(signature = (d, n, grid, kernel="flat", n_prime=1))]
fn delay_loss_surface(d: f64, n: usize, grid: Vec<f64>, kernel: &str, n_prime: usize) -> PyResult<Vec<f64>> {
    Ok(analysis::delay_loss_surface(d, &spectrum(kernel, n, n_prime)?, &grid, Some(n_prime)).values)
}

/// `(1 - phat grid, losses)` for a `k`-section all-pass cascade.
#[pyfunction]
#[pyo3(signature = (p, k, n, phat_grid, kernel="flat", n_prime=1))]
fn apf_loss_surface(p: f64, k: u32, n: usize, phat_grid: Vec<f64>, kernel: &str, n_prime: usize) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let s = analysis::apf_loss_surface(p, k, &spectrum(kernel, n, n_prime)?, &phat_grid, Some(n_prime)).map_err(err)?;
    Ok((s.grid, s.values))
}

/// Gradient-descent trajectory of the delay estimate.
#[pyfunction]
#[pyo3(signature = (d0, d, n, kernel="flat", n_prime=1, steps=analysis::DESCENT_STEPS, lr=analysis::DESCENT_LR))]
fn descend_delay(d0: f64, d: f64, n: usize, kernel: &str, n_prime: usize, steps: usize, lr: f64) -> PyResult<Vec<f64>> {
    Ok(analysis::descend_delay(d0, d, &spectrum(kernel, n, n_prime)?, steps, lr).trajectory)
}

#[pyfunction]
#[pyo3(signature = (d, n, kernel="flat", n_prime=1, step=0.01))]
fn basin_half_width(d: f64, n: usize, kernel: &str, n_prime: usize, step: f64) -> PyResult<f64> {
    Ok(analysis::basin_half_width(d, &spectrum(kernel, n, n_prime)?, step))
}

#[pymodule]
fn modfx_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyTrainConfig>()?;
    m.add_function(wrap_pyfunction!(gen_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(make_toy_target, m)?)?;
    m.add_function(wrap_pyfunction!(toy_params, m)?)?;
    m.add_function(wrap_pyfunction!(toy_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(validation_signal, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(process, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add_function(wrap_pyfunction!(esr_db, m)?)?;
    m.add_function(wrap_pyfunction!(mrsl, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_f0, m)?)?;
    m.add_function(wrap_pyfunction!(delay_loss, m)?)?;
    m.add_function(wrap_pyfunction!(delay_loss_surface, m)?)?;
    m.add_function(wrap_pyfunction!(apf_loss_surface, m)?)?;
    m.add_function(wrap_pyfunction!(descend_delay, m)?)?;
    m.add_function(wrap_pyfunction!(basin_half_width, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
