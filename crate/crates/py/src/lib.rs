//! Python bindings: audio clips, STFT and Griffin-Lim, masks, model
//! configs and networks, metrics, corpus generation.

use inpaint_core::dsp::{self, AudioClip, PhaseSeed, Spectrogram, SpectrogramKind, StftParams};
use inpaint_core::harness::{generate_corpus, CorpusSpec, MaskSpec};
use inpaint_core::losses::{self, SsimWindow};
use inpaint_core::models::{self, InpaintRequest, ModelConfig, Network, SpectrogramOptions};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn err(e: inpaint_core::Error) -> PyErr {
    match e {
        inpaint_core::Error::Io { .. } | inpaint_core::Error::Wav(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

#[pyclass(name = "AudioClip", module = "inpaint_rs", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyAudioClip(AudioClip);

#[pymethods]
impl PyAudioClip {
    #[new]
    fn new(samples: Vec<f64>, sample_rate: u32) -> PyResult<Self> {
        AudioClip::new(samples, sample_rate).map(Self).map_err(err)
    }

    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.0.samples().to_vec()
    }

    #[getter]
    fn sample_rate(&self) -> u32 {
        self.0.sample_rate()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("AudioClip({} samples @ {} Hz)", self.0.len(), self.0.sample_rate())
    }
}

#[pyclass(name = "Spectrogram", module = "inpaint_rs", frozen, skip_from_py_object)]
struct PySpectrogram(Spectrogram);

#[pymethods]
impl PySpectrogram {
    #[getter]
    fn freq_bins(&self) -> usize {
        self.0.freq_bins()
    }

    #[getter]
    fn frames(&self) -> usize {
        self.0.frames()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind().name()
    }

    /// Frequency-major real values (`k * frames + t`); magnitude or log-magnitude only.
    fn values(&self) -> PyResult<Vec<f64>> {
        self.0.real_bins().map(<[f64]>::to_vec).map_err(err)
    }

    fn magnitude(&self) -> PyResult<Self> {
        self.0.magnitude().map(Self).map_err(err)
    }

    fn log_compress(&self) -> PyResult<Self> {
        self.0.log_compress().map(Self).map_err(err)
    }

    fn log_expand(&self) -> PyResult<Self> {
        self.0.log_expand().map(Self).map_err(err)
    }
}

#[pyfunction]
#[pyo3(signature = (clip, window_width = 512, hop = 128))]
fn stft(clip: &PyAudioClip, window_width: usize, hop: usize) -> PyResult<PySpectrogram> {
    let params = StftParams::new(window_width, hop).map_err(err)?;
    dsp::stft(&clip.0, params).map(PySpectrogram).map_err(err)
}

#[pyfunction]
fn istft(spec: &PySpectrogram) -> PyResult<PyAudioClip> {
    dsp::istft(&spec.0).map(PyAudioClip).map_err(err)
}

/// Phase reconstruction from a magnitude spectrogram with random initial phases.
#[pyfunction]
#[pyo3(signature = (magnitude, iterations = 60, seed = 0))]
fn griffin_lim(magnitude: &PySpectrogram, iterations: usize, seed: u64) -> PyResult<PyAudioClip> {
    magnitude.0.expect_kind(SpectrogramKind::Magnitude).map_err(err)?;
    dsp::griffin_lim(&magnitude.0, iterations, PhaseSeed::Random(seed)).map(PyAudioClip).map_err(err)
}

#[pyfunction]
fn read_wav(path: &str) -> PyResult<PyAudioClip> {
    dsp::wav::read_wav(path.as_ref()).map(PyAudioClip).map_err(err)
}

#[pyfunction]
fn write_wav(path: &str, clip: &PyAudioClip) -> PyResult<()> {
    dsp::wav::write_wav(path.as_ref(), &clip.0).map_err(err)
}

#[pyclass(name = "MaskSpec", module = "inpaint_rs", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyMaskSpec(MaskSpec);

#[pymethods]
impl PyMaskSpec {
    #[new]
    fn new(start: usize, end: usize, clip_len: usize) -> PyResult<Self> {
        MaskSpec::new(start, end, clip_len).map(Self).map_err(err)
    }

    #[getter]
    fn start(&self) -> usize {
        self.0.start
    }

    #[getter]
    fn end(&self) -> usize {
        self.0.end
    }

    fn sample_mask(&self, len: usize) -> Vec<bool> {
        self.0.sample_mask(len)
    }

    #[pyo3(signature = (len, window_width = 512, hop = 128))]
    fn frame_mask(&self, len: usize, window_width: usize, hop: usize) -> PyResult<Vec<bool>> {
        Ok(self.0.frame_mask(&StftParams::new(window_width, hop).map_err(err)?, len))
    }
}

#[pyclass(name = "ModelConfig", module = "inpaint_rs", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModelConfig(ModelConfig);

#[pymethods]
impl PyModelConfig {
    #[staticmethod]
    fn default_waveform() -> Self {
        Self(ModelConfig::default_waveform())
    }

    #[staticmethod]
    fn default_spectrogram() -> Self {
        Self(ModelConfig::default_spectrogram())
    }

    #[staticmethod]
    fn spectrogram_with_dilations(width: usize, dilations: Vec<usize>) -> Self {
        Self(ModelConfig::spectrogram_with_dilations(width, &dilations))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ModelConfig::from_json(text).map(Self).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    #[getter]
    fn domain(&self) -> &'static str {
        self.0.domain.name()
    }

    /// Receptive field along time, in samples or frames.
    fn receptive_field(&self) -> PyResult<usize> {
        self.0.receptive_field().map_err(err)
    }
}

#[pyclass(name = "Network", module = "inpaint_rs", frozen, skip_from_py_object)]
struct PyNetwork(Network);

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (config, seed = 0))]
    fn new(config: &PyModelConfig, seed: u64) -> PyResult<Self> {
        Network::init(config.0.clone(), seed).map(Self).map_err(err)
    }

    #[staticmethod]
    fn load(config: &PyModelConfig, path: &str) -> PyResult<Self> {
        Network::load(config.0.clone(), path.as_ref()).map(Self).map_err(err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.0.save(path.as_ref()).map_err(err)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.0.param_count()
    }

    /// Fill `mask` in `clip` through the network's domain pipeline.
    #[pyo3(signature = (clip, mask, griffin_lim_iterations = 60))]
    fn inpaint(&self, py: Python<'_>, clip: &PyAudioClip, mask: &PyMaskSpec, griffin_lim_iterations: usize) -> PyResult<PyAudioClip> {
        let request = InpaintRequest::new(clip.0.clone(), mask.0).map_err(err)?;
        let options = SpectrogramOptions {
            griffin_lim_iterations,
            ..Default::default()
        };
        py.detach(|| models::inpaint(&self.0, &request, &options)).map(PyAudioClip).map_err(err)
    }
}

#[pyfunction]
fn masked_l1(output: Vec<f64>, target: Vec<f64>, mask: Vec<bool>) -> PyResult<f64> {
    losses::masked_l1(&output, &target, &mask).map(|m| m.value).map_err(err)
}

/// SSIM of two row-major images with an 11x11 Gaussian window.
#[pyfunction]
fn ssim(a: Vec<f64>, b: Vec<f64>, rows: usize, cols: usize) -> PyResult<f64> {
    losses::ssim(&a, &b, rows, cols, SsimWindow::Gaussian).map_err(err)
}

/// Corpus preset as a list of `(clip_id, class, split, AudioClip)`.
#[pyfunction]
#[pyo3(signature = (preset, seed = 0, examples_per_class = None))]
fn corpus(preset: &str, seed: u64, examples_per_class: Option<usize>) -> PyResult<Vec<(String, usize, String, PyAudioClip)>> {
    let mut spec = CorpusSpec::preset(preset, seed).map_err(err)?;
    if let Some(n) = examples_per_class {
        spec.examples_per_class = n;
    }
    let corpus = generate_corpus(&spec).map_err(err)?;
    Ok(corpus
        .clips
        .into_iter()
        .map(|c| (c.id, c.class, c.split.name().to_string(), PyAudioClip(c.clip)))
        .collect())
}

#[pymodule]
fn inpaint_rs(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAudioClip>()?;
    m.add_class::<PySpectrogram>()?;
    m.add_class::<PyMaskSpec>()?;
    m.add_class::<PyModelConfig>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(stft, m)?)?;
    m.add_function(wrap_pyfunction!(istft, m)?)?;
    m.add_function(wrap_pyfunction!(griffin_lim, m)?)?;
    m.add_function(wrap_pyfunction!(read_wav, m)?)?;
    m.add_function(wrap_pyfunction!(write_wav, m)?)?;
    m.add_function(wrap_pyfunction!(masked_l1, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(corpus, m)?)?;
    Ok(())
}
