//! Python bindings for `rfdlc`.
//!
//! Matrices and feature batches cross the boundary as nested lists of
//! floats, one inner list per row.

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rfdlc::metrics::UncertaintyScore;
use rfdlc::{EvalOptions, EvalReport, Rate};

fn to_py(e: rfdlc::Error) -> PyErr {
    use rfdlc::Error::*;
    let msg = e.to_string();
    match e {
        NumericOverflow | Diverged { .. } | SingularWeight { .. } => PyArithmeticError::new_err(msg),
        Index { .. } => PyIndexError::new_err(msg),
        Io { .. } => PyIOError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

trait OrPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> OrPy<T> for rfdlc::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

fn flatten(rows: &[Vec<f64>]) -> PyResult<(Vec<f64>, usize)> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok((rows.concat(), dim))
}

const DEFAULT_BETA: f64 = 0.9995;

/// `effective_number` without `beta` uses 0.9995.
fn weight_form(name: &str, beta: Option<f64>) -> PyResult<rfdlc::WeightForm> {
    let beta = beta.or((name == "effective_number").then_some(DEFAULT_BETA));
    rfdlc::WeightForm::from_name(name, beta).py_err()
}

fn rate(r: Rate) -> Option<f64> {
    r.value()
}

/// A K×K utility matrix, indexed `[true_class][decision]`.
#[pyclass(module = "pyrfdlc", frozen)]
struct Utility {
    inner: rfdlc::UtilityMatrix,
}

#[pymethods]
impl Utility {
    #[staticmethod]
    fn one_hot(k: usize) -> PyResult<Self> {
        Ok(Self {
            inner: rfdlc::UtilityMatrix::one_hot(k).py_err()?,
        })
    }

    #[staticmethod]
    fn tail_sensitive(k: usize, u: f64) -> PyResult<Self> {
        Ok(Self {
            inner: rfdlc::UtilityMatrix::tail_sensitive(k, u).py_err()?,
        })
    }

    /// `penalties` is a list of `(true_class, decision, value)` triples.
    #[staticmethod]
    fn penalized(k: usize, penalties: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        let p: Vec<rfdlc::Penalty> = penalties.into_iter().map(|(t, d, v)| rfdlc::Penalty::new(t, d, v)).collect();
        Ok(Self {
            inner: rfdlc::UtilityMatrix::penalized(k, &p).py_err()?,
        })
    }

    #[staticmethod]
    fn from_rows(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let (values, _) = flatten(&rows)?;
        Ok(Self {
            inner: rfdlc::UtilityMatrix::raw(rows.len(), values).py_err()?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: rfdlc::UtilityMatrix::load(path).py_err()?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path, "pyrfdlc").py_err()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().name()
    }

    fn get(&self, true_class: usize, decision: usize) -> PyResult<f64> {
        let k = self.inner.num_classes();
        if true_class >= k || decision >= k {
            return Err(PyIndexError::new_err(format!("index out of range for {k} classes")));
        }
        Ok(self.inner.get(true_class, decision))
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.inner.values().chunks(self.inner.num_classes()).map(<[f64]>::to_vec).collect()
    }

    fn transpose(&self) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.transpose().py_err()?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Utility(kind={:?}, k={})", self.inner.kind().name(), self.inner.num_classes())
    }
}

/// Labelled feature rows with class indices in `[0, num_classes)`.
#[pyclass(module = "pyrfdlc", frozen)]
struct Dataset {
    inner: rfdlc::LabeledDataset,
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (features, labels, num_classes, name = "data"))]
    fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize, name: &str) -> PyResult<Self> {
        let (flat, dim) = flatten(&features)?;
        Ok(Self {
            inner: rfdlc::LabeledDataset::new(flat, dim, labels, num_classes, name).py_err()?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (path, num_classes = None))]
    fn read_csv(path: &str, num_classes: Option<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: rfdlc::LabeledDataset::read_csv(path, num_classes).py_err()?,
        })
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        self.inner.write_csv(path, "pyrfdlc").py_err()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn name(&self) -> &str {
        self.inner.name()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    fn class_counts(&self) -> Vec<usize> {
        self.inner.class_counts().counts
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(name={:?}, n={}, dim={}, k={})",
            self.inner.name(),
            self.inner.len(),
            self.inner.dim(),
            self.inner.num_classes()
        )
    }
}

/// M MLP particles, optionally sharing their first layers.
#[pyclass(module = "pyrfdlc")]
struct Ensemble {
    inner: rfdlc::ParticleEnsemble,
}

#[pymethods]
impl Ensemble {
    #[new]
    #[pyo3(signature = (layer_sizes, num_particles, seed = 0, shared_trunk_layers = 0))]
    fn new(layer_sizes: Vec<usize>, num_particles: usize, seed: u64, shared_trunk_layers: usize) -> PyResult<Self> {
        let arch = rfdlc::MlpArchitecture::new(layer_sizes, shared_trunk_layers).py_err()?;
        Ok(Self {
            inner: rfdlc::ParticleEnsemble::init(arch, num_particles, seed).py_err()?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: rfdlc::ParticleEnsemble::load(path).py_err()?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path, "pyrfdlc").py_err()
    }

    #[getter]
    fn num_particles(&self) -> usize {
        self.inner.num_particles()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn layer_sizes(&self) -> Vec<usize> {
        self.inner.arch().layer_sizes().to_vec()
    }

    fn min_pairwise_distance(&self) -> Option<f64> {
        self.inner.min_pairwise_distance()
    }

    /// Per-particle log-probabilities for one input, shape M×K.
    fn log_probs(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        self.inner.ensemble_log_probs(&x).py_err()
    }

    /// Mean predictive distribution for each row.
    fn predict_proba(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        rows.iter()
            .map(|x| self.inner.predictive_distribution(x).map(|p| p.probs))
            .collect::<rfdlc::Result<_>>()
            .py_err()
    }

    fn decide(&self, rows: Vec<Vec<f64>>, utility: &Utility) -> PyResult<Vec<usize>> {
        let (flat, dim) = flatten(&rows)?;
        rfdlc::decide_batch(&self.inner, &flat, dim, &utility.inner).py_err()
    }

    /// Trains in place and returns one dict per epoch.
    #[pyo3(signature = (
        data, utility, weight_form, epochs, *, seed = 0, alpha = 1.0, lam = 0.0, tau = 40.0,
        beta = None, learning_rate = 0.1, batch_size = 128, momentum = 0.9,
        repulsion_scale = 1.0, normalize_weights = false
    ))]
    #[allow(clippy::too_many_arguments)]
    fn train<'py>(
        &mut self,
        py: Python<'py>,
        data: &Dataset,
        utility: &Utility,
        weight_form: &str,
        epochs: usize,
        seed: u64,
        alpha: f64,
        lam: f64,
        tau: f64,
        beta: Option<f64>,
        learning_rate: f64,
        batch_size: usize,
        momentum: f64,
        repulsion_scale: f64,
        normalize_weights: bool,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let mut obj = rfdlc::ObjectiveConfig::new(utility.inner.clone(), self::weight_form(weight_form, beta)?);
        obj.alpha = alpha;
        obj.lambda = lam;
        obj.tau = tau;
        obj.repulsion_scale = repulsion_scale;
        obj.normalize_weights = normalize_weights;
        let mut cfg = rfdlc::TrainConfig::new(obj, epochs, seed);
        cfg.learning_rate = learning_rate;
        cfg.batch_size = batch_size;
        cfg.momentum = momentum;
        let counts = data.inner.class_counts();
        let history = py
            .detach(|| rfdlc::train(&cfg, &mut self.inner, &data.inner, &counts))
            .py_err()?;
        history
            .records
            .iter()
            .map(|r| {
                let d = PyDict::new(py);
                d.set_item("epoch", r.epoch)?;
                d.set_item("loss", r.loss)?;
                d.set_item("acc", r.acc)?;
                d.set_item("repulsive_value", r.repulsive_value)?;
                d.set_item("anneal_weight", r.anneal_weight)?;
                Ok(d)
            })
            .collect()
    }

    /// Decides every row of `data` under `utility` and returns the metrics.
    #[pyo3(signature = (data, utility, tail_ratios = None, ece_bins = 15, score = "entropy"))]
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        data: &Dataset,
        utility: &Utility,
        tail_ratios: Option<Vec<f64>>,
        ece_bins: usize,
        score: &str,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mut opts = EvalOptions {
            ece_bins,
            score: match score {
                "entropy" => UncertaintyScore::Entropy,
                "max_prob" => UncertaintyScore::MaxProb,
                _ => return Err(PyValueError::new_err(format!("unknown score {score:?}"))),
            },
            ..EvalOptions::default()
        };
        if let Some(r) = tail_ratios {
            opts.tail_ratios = r;
        }
        let report = rfdlc::evaluate(&self.inner, &data.inner, &utility.inner, &opts).py_err()?;
        report_dict(py, &report)
    }

    fn __repr__(&self) -> String {
        format!(
            "Ensemble(layers={:?}, particles={})",
            self.inner.arch().layer_sizes(),
            self.inner.num_particles()
        )
    }
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("samples", r.samples)?;
    d.set_item("overall_acc", rate(r.overall_acc))?;
    d.set_item("head_acc", rate(r.head_acc))?;
    d.set_item("med_acc", rate(r.med_acc))?;
    d.set_item("tail_acc", rate(r.tail_acc))?;
    d.set_item("region_sizes", r.region_sizes.to_vec())?;
    let fhr = PyDict::new(py);
    for (k, v) in &r.fhr_at {
        fhr.set_item(k, rate(*v))?;
    }
    d.set_item("fhr_at", fhr)?;
    d.set_item("fhr_avg", rate(r.fhr_avg))?;
    d.set_item("ece", r.ece)?;
    d.set_item("auroc", rate(r.auroc))?;
    Ok(d)
}

/// `1 / f(count)` for a named weight form.
#[pyfunction]
#[pyo3(signature = (form, count, beta = None))]
fn importance_weight(form: &str, count: usize, beta: Option<f64>) -> PyResult<f64> {
    rfdlc::importance_weight(weight_form(form, beta)?, count).py_err()
}

#[pyfunction]
#[pyo3(signature = (form, counts, normalize = false, beta = None))]
fn class_weights(form: &str, counts: Vec<usize>, normalize: bool, beta: Option<f64>) -> PyResult<Vec<f64>> {
    rfdlc::class_weights(weight_form(form, beta)?, &rfdlc::ClassCounts::new(counts), normalize).py_err()
}

/// Balanced Gaussian-mixture sample, `per_class` rows per class.
#[pyfunction]
#[pyo3(signature = (num_classes, dim, per_class, separation = 3.0, seed = 0))]
fn synth_gaussian_mixture(num_classes: usize, dim: usize, per_class: usize, separation: f64, seed: u64) -> PyResult<Dataset> {
    Ok(Dataset {
        inner: rfdlc::synth_gaussian_mixture(num_classes, dim, per_class, separation, seed).py_err()?,
    })
}

/// Subsamples class c to `n · rho^(-c/(K-1))` rows.
#[pyfunction]
#[pyo3(signature = (data, rho, seed = 0))]
fn make_long_tailed(data: &Dataset, rho: f64, seed: u64) -> PyResult<Dataset> {
    Ok(Dataset {
        inner: rfdlc::make_long_tailed(&data.inner, rho, seed).py_err()?,
    })
}

/// Decision for per-particle log-probabilities (M×K).
#[pyfunction]
fn decide(log_probs: Vec<Vec<f64>>, utility: &Utility) -> PyResult<usize> {
    rfdlc::decide(&log_probs, &utility.inner).py_err()
}

#[pyfunction]
fn decision_scores(log_probs: Vec<Vec<f64>>, utility: &Utility) -> PyResult<Vec<f64>> {
    rfdlc::decision_scores(&log_probs, &utility.inner).py_err()
}

#[pyfunction]
fn per_sample_term(log_probs: Vec<f64>, label: usize, utility: &Utility, alpha: f64) -> PyResult<f64> {
    rfdlc::per_sample_term(&log_probs, label, &utility.inner, alpha).py_err()
}

#[pyfunction]
fn tail_set(k: usize, ratio: f64) -> PyResult<Vec<usize>> {
    rfdlc::tail_set(k, ratio).py_err()
}

#[pyfunction]
fn false_head_rate(preds: Vec<usize>, labels: Vec<usize>, tail: Vec<usize>) -> PyResult<f64> {
    rfdlc::false_head_rate(&preds, &labels, &tail).py_err()
}

#[pyfunction]
#[pyo3(signature = (confidences, correct, num_bins = 15))]
fn ece(confidences: Vec<f64>, correct: Vec<bool>, num_bins: usize) -> PyResult<f64> {
    rfdlc::ece(&confidences, &correct, num_bins).py_err()
}

#[pyfunction]
fn auroc(scores: Vec<f64>, positives: Vec<bool>) -> PyResult<f64> {
    rfdlc::auroc(&scores, &positives).py_err()
}

#[pymodule]
fn pyrfdlc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Utility>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Ensemble>()?;
    m.add_function(wrap_pyfunction!(importance_weight, m)?)?;
    m.add_function(wrap_pyfunction!(class_weights, m)?)?;
    m.add_function(wrap_pyfunction!(synth_gaussian_mixture, m)?)?;
    m.add_function(wrap_pyfunction!(make_long_tailed, m)?)?;
    m.add_function(wrap_pyfunction!(decide, m)?)?;
    m.add_function(wrap_pyfunction!(decision_scores, m)?)?;
    m.add_function(wrap_pyfunction!(per_sample_term, m)?)?;
    m.add_function(wrap_pyfunction!(tail_set, m)?)?;
    m.add_function(wrap_pyfunction!(false_head_rate, m)?)?;
    m.add_function(wrap_pyfunction!(ece, m)?)?;
    m.add_function(wrap_pyfunction!(auroc, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
