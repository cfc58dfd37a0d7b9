//! Python bindings for `inspection-core`.
//!
//! Matrices cross the boundary as lists of rows; labels as the Elliptic
//! tokens `"1"` (illicit), `"2"` (licit) and `"unknown"`.

use std::path::PathBuf;

use inspection_core::dgi::{self, DgiConfig, EpsMode};
use inspection_core::eval;
use inspection_core::forest::{self, ForestConfig, LabeledMatrix};
use inspection_core::graph::{FeatureView, Label, TemporalDataset};
use inspection_core::ingest::{self, EllipticPaths, SynthSpec};
use inspection_core::nn::Matrix;
use inspection_core::pipeline::{self as stages, RawConfig};
use inspection_core::Error;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Invariant(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> PyResult<T> {
    s.parse().map_err(|_| PyValueError::new_err(format!("unknown {what} {s:?}")))
}

fn to_matrix(rows: Vec<Vec<f32>>) -> PyResult<Matrix<f32>> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, 0));
    }
    Matrix::from_rows(&rows).map_err(py_err)
}

fn to_rows(m: &Matrix<f32>) -> Vec<Vec<f32>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn to_labels(tokens: &[String]) -> PyResult<Vec<Label>> {
    tokens
        .iter()
        .map(|t| Label::from_token(t).ok_or_else(|| PyValueError::new_err(format!("unknown label {t:?}"))))
        .collect()
}

/// Temporal sequence of transaction graphs.
#[pyclass(module = "inspection_l", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: TemporalDataset,
}

#[pymethods]
impl Dataset {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(graphs={}, nodes={}, edges={}, feature_dim={})",
            self.inner.len(),
            self.inner.num_nodes(),
            self.inner.num_edges(),
            self.inner.feature_dim()
        )
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.num_nodes()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    #[getter]
    fn feature_dim(&self) -> usize {
        self.inner.feature_dim()
    }

    #[getter]
    fn time_steps(&self) -> Vec<u32> {
        self.inner.graphs().iter().map(|g| g.time_step()).collect()
    }

    /// `(illicit, licit, unknown)` counts.
    fn label_counts(&self) -> (usize, usize, usize) {
        let c = self.inner.label_counts();
        (c.illicit, c.licit, c.unknown)
    }

    /// Node ids of graph `index`.
    fn node_ids(&self, index: usize) -> PyResult<Vec<u64>> {
        Ok(self.graph(index)?.node_ids().to_vec())
    }

    /// Labels of graph `index` as Elliptic tokens.
    fn labels(&self, index: usize) -> PyResult<Vec<String>> {
        Ok(self.graph(index)?.labels().iter().map(|l| l.token().to_string()).collect())
    }

    /// Raw features of graph `index`, restricted to `view` ("af" or "lf").
    #[pyo3(signature = (index, view = "af"))]
    fn features(&self, index: usize, view: &str) -> PyResult<Vec<Vec<f32>>> {
        let v: FeatureView = parse("view", view)?;
        Ok(to_rows(&self.graph(index)?.select_features(v).map_err(py_err)?))
    }

    /// Undirected edges of graph `index` as node-index pairs.
    fn edges(&self, index: usize) -> PyResult<Vec<(usize, usize)>> {
        Ok(self.graph(index)?.edges())
    }

    /// First `train_count` graphs and the rest.
    fn split(&self, train_count: usize) -> PyResult<(Dataset, Dataset)> {
        let (a, b) = self.inner.split_temporal(train_count).map_err(py_err)?;
        Ok((Dataset { inner: a }, Dataset { inner: b }))
    }

    /// Writes the Elliptic CSV triplet into `directory`.
    fn write_elliptic(&self, directory: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&directory).map_err(|e| PyIOError::new_err(e.to_string()))?;
        ingest::write_elliptic(&self.inner, &directory).map_err(py_err)?;
        Ok(())
    }
}

impl Dataset {
    fn graph(&self, index: usize) -> PyResult<&inspection_core::TransactionGraph> {
        self.inner
            .graphs()
            .get(index)
            .map(|g| g.as_ref())
            .ok_or_else(|| PyValueError::new_err(format!("graph index {index} out of range")))
    }
}

#[pyfunction]
#[pyo3(signature = (num_timesteps = 5, nodes_per_step = 100, feature_dim = 166, illicit_fraction = 0.1,
                    edge_density = 0.02, seed = 0, unknown_fraction = 0.0, shift = 3.0))]
#[allow(clippy::too_many_arguments)]
fn generate_synthetic(
    num_timesteps: usize,
    nodes_per_step: usize,
    feature_dim: usize,
    illicit_fraction: f64,
    edge_density: f64,
    seed: u64,
    unknown_fraction: f64,
    shift: f32,
) -> PyResult<Dataset> {
    let spec = SynthSpec {
        num_timesteps,
        nodes_per_step,
        feature_dim,
        illicit_fraction,
        edge_density,
        seed,
        unknown_fraction,
        shift,
    };
    Ok(Dataset {
        inner: ingest::generate_synthetic(&spec).map_err(py_err)?,
    })
}

/// Loads `elliptic_txs_{features,classes,edgelist}.csv` from `directory`.
#[pyfunction]
fn load_elliptic(directory: PathBuf) -> PyResult<Dataset> {
    Ok(Dataset {
        inner: ingest::load_elliptic(&EllipticPaths::in_dir(directory)).map_err(py_err)?,
    })
}

/// Trained GIN encoder and discriminator.
#[pyclass(module = "inspection_l", frozen)]
struct Encoder {
    model: dgi::DgiModel<f32>,
    view: FeatureView,
    losses: Vec<(u32, usize, f64)>,
}

#[pymethods]
impl Encoder {
    /// Self-supervised training on every graph of `dataset` in time order.
    #[staticmethod]
    #[allow(clippy::too_many_arguments)]
    #[pyo3(signature = (dataset, view = "af", epochs = 300, learning_rate = 1e-4, seed = 0,
                        learnable_eps = false, hidden_dim = 128))]
    fn train(
        py: Python<'_>,
        dataset: &Dataset,
        view: &str,
        epochs: usize,
        learning_rate: f64,
        seed: u64,
        learnable_eps: bool,
        hidden_dim: usize,
    ) -> PyResult<Encoder> {
        let view: FeatureView = parse("view", view)?;
        let cfg = DgiConfig {
            epochs_per_graph: epochs,
            learning_rate,
            seed,
            eps_mode: if learnable_eps { EpsMode::Learnable } else { EpsMode::Fixed(0.0) },
            hidden_dim,
        };
        let ds = dataset.inner.clone();
        let (model, log) = py
            .detach(move || dgi::train_dgi(&ds, view, &cfg))
            .map_err(py_err)?;
        Ok(Encoder {
            model,
            view,
            losses: log.iter().map(|r| (r.time_step, r.epoch, r.loss)).collect(),
        })
    }

    #[staticmethod]
    #[pyo3(signature = (path, view = "af"))]
    fn load(path: PathBuf, view: &str) -> PyResult<Encoder> {
        let params = dgi::load_params(&path).map_err(py_err)?;
        Ok(Encoder {
            model: dgi::DgiModel::from_params(params, dgi::DgiConfig::default().learning_rate),
            view: parse("view", view)?,
            losses: Vec::new(),
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        dgi::save_params(&self.model.params, &path).map_err(py_err)
    }

    /// `(time_step, epoch, loss)` per training step.
    #[getter]
    fn losses(&self) -> Vec<(u32, usize, f64)> {
        self.losses.clone()
    }

    #[getter]
    fn embedding_dim(&self) -> usize {
        self.model.params.embedding_dim()
    }

    /// Eval-mode embeddings of graph `index` of `dataset`.
    fn embed(&self, dataset: &Dataset, index: usize) -> PyResult<Vec<Vec<f32>>> {
        let table = dgi::embed_graph(&self.model, dataset.graph(index)?, self.view).map_err(py_err)?;
        Ok(to_rows(&table.embeddings))
    }

    /// Labeled rows of graph `index` for a scenario ("dne", "lf-dne" or
    /// "af-dne"): `(features, labels)`.
    #[pyo3(signature = (dataset, index, scenario = "af-dne"))]
    fn features(&self, dataset: &Dataset, index: usize, scenario: &str) -> PyResult<(Vec<Vec<f32>>, Vec<String>)> {
        let scenario: forest::Scenario = parse("scenario", scenario)?;
        let g = dataset.graph(index)?;
        let table = dgi::embed_graph(&self.model, g, self.view).map_err(py_err)?;
        let lm = forest::assemble_features(g, &table, scenario).map_err(py_err)?;
        Ok((
            to_rows(lm.x()),
            lm.y().iter().map(|l| l.token().to_string()).collect(),
        ))
    }
}

/// Gini random forest over illicit/licit labels.
#[pyclass(module = "inspection_l", frozen)]
struct RandomForest {
    model: forest::ForestModel,
}

#[pymethods]
impl RandomForest {
    #[staticmethod]
    #[pyo3(signature = (x, y, n_trees = 100, seed = 0, features_per_split = None, max_depth = None))]
    fn fit(
        py: Python<'_>,
        x: Vec<Vec<f32>>,
        y: Vec<String>,
        n_trees: usize,
        seed: u64,
        features_per_split: Option<usize>,
        max_depth: Option<usize>,
    ) -> PyResult<RandomForest> {
        let data = LabeledMatrix::new(to_matrix(x)?, to_labels(&y)?).map_err(py_err)?;
        let cfg = ForestConfig {
            n_trees,
            seed,
            features_per_split,
            max_depth,
            ..ForestConfig::default()
        };
        let model = py.detach(move || forest::fit_forest(&data, &cfg)).map_err(py_err)?;
        Ok(RandomForest { model })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<RandomForest> {
        Ok(RandomForest {
            model: forest::load_forest(&path).map_err(py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        forest::save_forest(&self.model, &path).map_err(py_err)
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.model.trees.len()
    }

    /// Probability of the illicit class per row.
    fn predict_proba(&self, x: Vec<Vec<f32>>) -> PyResult<Vec<f64>> {
        self.model.predict_proba(&to_matrix(x)?).map_err(py_err)
    }

    fn predict(&self, x: Vec<Vec<f32>>) -> PyResult<Vec<String>> {
        let labels = self.model.predict(&to_matrix(x)?).map_err(py_err)?;
        Ok(labels.iter().map(|l| l.token().to_string()).collect())
    }
}

/// `(tp, fp, fn, tn)` with illicit as the positive class.
#[pyfunction]
fn confusion(y_true: Vec<String>, y_pred: Vec<String>) -> PyResult<(u64, u64, u64, u64)> {
    let cm = eval::confusion(&to_labels(&y_true)?, &to_labels(&y_pred)?).map_err(py_err)?;
    Ok((cm.tp, cm.fp, cm.fn_, cm.tn))
}

/// `(precision, recall, f1)`; zero where a denominator vanishes.
#[pyfunction]
fn precision_recall_f1(y_true: Vec<String>, y_pred: Vec<String>) -> PyResult<(f64, f64, f64)> {
    let cm = eval::confusion(&to_labels(&y_true)?, &to_labels(&y_pred)?).map_err(py_err)?;
    Ok((
        eval::precision(&cm).value,
        eval::recall(&cm).value,
        eval::f1(&cm).value,
    ))
}

#[pyfunction]
fn auc(y_true: Vec<String>, scores: Vec<f64>) -> PyResult<f64> {
    eval::auc(&to_labels(&y_true)?, &scores).map_err(py_err)
}

/// Runs every stage with `key = value` settings and returns the pooled
/// test metrics.
#[pyfunction]
#[pyo3(signature = (output_dir, settings = None))]
fn run_pipeline(
    py: Python<'_>,
    output_dir: PathBuf,
    settings: Option<Vec<(String, String)>>,
) -> PyResult<Vec<(String, f64)>> {
    let mut raw = RawConfig::default();
    for (k, v) in settings.unwrap_or_default() {
        raw.set_checked(&k, &v).map_err(py_err)?;
    }
    raw.set("output_dir", &output_dir.to_string_lossy());
    let cfg = raw.resolve().map_err(py_err)?;
    let s = py.detach(move || stages::cmd_pipeline(&cfg)).map_err(py_err)?;
    let r = s.report;
    Ok(vec![
        ("precision".into(), r.precision),
        ("recall".into(), r.recall),
        ("f1".into(), r.f1),
        ("auc".into(), r.auc),
    ])
}

#[pymodule]
fn inspection_l(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Encoder>()?;
    m.add_class::<RandomForest>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(load_elliptic, m)?)?;
    m.add_function(wrap_pyfunction!(confusion, m)?)?;
    m.add_function(wrap_pyfunction!(precision_recall_f1, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
