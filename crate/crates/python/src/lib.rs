//! Python bindings for `dcboost`.
//!
//! Matrices cross the boundary as lists of rows and labels as lists of ints.
//! Long-running calls release the GIL.
use std::path::PathBuf;

use dcboost::cli::{self, EvalSource};
use dcboost::config::RunConfig;
use dcboost::feature_store::{save_dataset, ClassSizes};
use dcboost::knn_filter::{select_batch, BatchView, FilterConfig};
use dcboost::metrics::{MetricsReport, ReportOptions, SilhouetteOptions, StructureLabels};
use dcboost::pseudo_labeler::{kmeans_labels, KMeansConfig};
use dcboost::{DatasetBundle, FeatureMatrix, LabelVector, SynthConfig};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(dcboost_py, DcboostError, PyException, "Raised for any failure inside dcboost.");

fn err(e: dcboost::Error) -> PyErr {
    DcboostError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<FeatureMatrix> {
    FeatureMatrix::from_rows(rows).map_err(err)
}

fn to_rows(m: &FeatureMatrix) -> Vec<Vec<f64>> {
    m.rows().map(<[f64]>::to_vec).collect()
}

fn report_dict<'py>(py: Python<'py>, r: &MetricsReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (k, v) in r.fields() {
        d.set_item(k, v)?;
    }
    d.set_item("warnings", r.warnings.clone())?;
    Ok(d)
}

fn run_config(config: Option<&str>) -> PyResult<RunConfig> {
    RunConfig::parse(config.unwrap_or("")).map_err(err)
}

/// Features with optional ground-truth and pseudo labels.
#[pyclass(name = "Dataset", module = "dcboost_py")]
struct PyDataset {
    inner: DatasetBundle,
}

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (features, truth=None, pseudo=None))]
    fn new(features: Vec<Vec<f64>>, truth: Option<Vec<usize>>, pseudo: Option<Vec<usize>>) -> PyResult<Self> {
        let inner = DatasetBundle::new(
            matrix(&features)?,
            truth.map(LabelVector::from_labels),
            pseudo.map(LabelVector::from_labels),
        )
        .map_err(err)?;
        Ok(Self { inner })
    }

    /// Gaussian mixture with `c` classes in `d` dimensions. `imbalance` gives
    /// the head-to-tail class size ratio; omit it for balanced classes.
    #[staticmethod]
    #[pyo3(signature = (c=10, d=16, n=2000, separation=4.0, within_std=1.0, seed=0, imbalance=None))]
    fn synth(
        c: usize,
        d: usize,
        n: usize,
        separation: f64,
        within_std: f64,
        seed: u64,
        imbalance: Option<f64>,
    ) -> PyResult<Self> {
        let sizes = match imbalance {
            Some(ratio) => ClassSizes::LongTailed { n, ratio },
            None => ClassSizes::Balanced { n },
        };
        let cfg = SynthConfig { c, d, sizes, mean_separation: separation, within_std, seed };
        let inner = dcboost::feature_store::generate_gaussian_mixture(&cfg).map_err(err)?;
        Ok(Self { inner })
    }

    /// Reads `.dcbf` or `.csv`, chosen by extension.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: cli::load(&path, None).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_dataset(&self.inner, &path, cli::format_for(&path, None)).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.features.d()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.features)
    }

    #[getter]
    fn truth(&self) -> Option<Vec<usize>> {
        self.inner.truth.as_ref().map(|l| l.labels().to_vec())
    }

    #[getter]
    fn pseudo(&self) -> Option<Vec<usize>> {
        self.inner.pseudo.as_ref().map(|l| l.labels().to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, d={}, truth={}, pseudo={})",
            self.inner.n(),
            self.inner.features.d(),
            self.inner.truth.is_some(),
            self.inner.pseudo.is_some()
        )
    }
}

/// Adaptive k-NN selection on one batch. Rows of `z` are L2-normalized first.
/// Returns `k_star`, the selected positions `x_h`, and the per-k `counts`
/// and `scores`.
#[pyfunction]
#[pyo3(signature = (z, labels, m=10, fixed_k=None))]
fn select<'py>(
    py: Python<'py>,
    z: Vec<Vec<f64>>,
    labels: Vec<usize>,
    m: usize,
    fixed_k: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let z = matrix(&z)?.l2_normalize().map_err(err)?;
    let labels = LabelVector::from_labels(labels);
    let cfg = FilterConfig { m, fixed_k, ..FilterConfig::default() };
    let sel = select_batch(&BatchView::new(&z, None, &labels).map_err(err)?, &cfg).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("k_star", sel.k_star)?;
    d.set_item("x_h", sel.x_h)?;
    d.set_item("counts", sel.curve.counts)?;
    d.set_item("scores", sel.curve.scores)?;
    Ok(d)
}

/// k-means++ with restarts; returns `(labels, inertia)`.
#[pyfunction]
#[pyo3(signature = (features, c, seed=0, n_init=10))]
fn kmeans(py: Python<'_>, features: Vec<Vec<f64>>, c: usize, seed: u64, n_init: usize) -> PyResult<(Vec<usize>, f64)> {
    let x = matrix(&features)?;
    let cfg = KMeansConfig { c, seed, n_init, ..KMeansConfig::default() };
    let (model, labels) = py.detach(|| kmeans_labels(&x, &cfg)).map_err(err)?;
    Ok((labels.labels().to_vec(), model.inertia))
}

/// Clustering metrics of `pred`. Agreement scores need `truth`; geometry
/// scores use `truth` when given, else `pred`. Undefined values are NaN.
#[pyfunction]
#[pyo3(signature = (features, pred, truth=None, knn_k=10, seed=0))]
fn metrics<'py>(
    py: Python<'py>,
    features: Vec<Vec<f64>>,
    pred: Vec<usize>,
    truth: Option<Vec<usize>>,
    knn_k: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let x = matrix(&features)?;
    let pred = LabelVector::from_labels(pred);
    let truth = truth.map(LabelVector::from_labels);
    let opts = ReportOptions {
        knn_k,
        silhouette: SilhouetteOptions { seed, ..SilhouetteOptions::default() },
        structure: StructureLabels::Truth,
    };
    let report = py.detach(|| MetricsReport::compute(&x, &pred, truth.as_ref(), &opts)).map_err(err)?;
    report_dict(py, &report)
}

/// Pre-trains, boosts and clusters. `config` uses the CLI's `key=value`
/// format; files land in `out_dir` when given. Returns the final labels,
/// the baseline and final metrics, and the target embedding.
#[pyfunction]
#[pyo3(signature = (data, config=None, out_dir=None))]
fn boost<'py>(
    py: Python<'py>,
    data: &PyDataset,
    config: Option<&str>,
    out_dir: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = run_config(config)?;
    let run = py.detach(|| cli::cmd_boost(&data.inner, &cfg, out_dir.as_deref(), None)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("labels", run.outcome.labels.labels().to_vec())?;
    d.set_item("final", report_dict(py, &run.final_report)?)?;
    if let Some(b) = &run.outcome.history.baseline {
        d.set_item("baseline", report_dict(py, b)?)?;
    }
    d.set_item("features", to_rows(&run.outcome.features))?;
    d.set_item("history_csv", run.outcome.history.to_csv_string())?;
    Ok(d)
}

/// Scores `labels` against the dataset, like the `eval` command. Without
/// `labels` the dataset's own truth is scored.
#[pyfunction]
#[pyo3(signature = (data, labels=None, config=None))]
fn evaluate<'py>(
    py: Python<'py>,
    data: &PyDataset,
    labels: Option<Vec<usize>>,
    config: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = run_config(config)?;
    let source = labels.map_or(EvalSource::Truth, |l| EvalSource::Labels(LabelVector::from_labels(l)));
    let result = py.detach(|| cli::cmd_eval(&data.inner, source, &cfg)).map_err(err)?;
    report_dict(py, &result.report)
}

#[pymodule]
fn dcboost_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DcboostError", m.py().get_type::<DcboostError>())?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(boost, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
