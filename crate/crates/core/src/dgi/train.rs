use rand::Rng;

use super::encoder::{GinEncoder, HIDDEN_DIM};
use super::objective::{corrupt_features, DgiParams};
use crate::error::{Error, Result};
use crate::graph::{FeatureView, TemporalDataset, TransactionGraph};
use crate::nn::{AdamState, Matrix, Mode, Params, Real, DEFAULT_LR};
use crate::util::stream;

pub const DEFAULT_EPOCHS: usize = 300;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpsMode {
    /// ε held at the given value (0 gives GIN-0).
    Fixed(f64),
    Learnable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DgiConfig {
    pub epochs_per_graph: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub eps_mode: EpsMode,
    pub hidden_dim: usize,
}

impl Default for DgiConfig {
    fn default() -> Self {
        Self {
            epochs_per_graph: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LR,
            seed: 0,
            eps_mode: EpsMode::Fixed(0.0),
            hidden_dim: HIDDEN_DIM,
        }
    }
}

impl DgiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be positive".into()));
        }
        Ok(())
    }
}

/// Encoder and discriminator plus the optimizer state shared across all graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct DgiModel<T = f32> {
    pub params: DgiParams<T>,
    pub adam: AdamState<T>,
}

impl<T: Real> DgiModel<T> {
    /// Fresh model: fan-in uniform linear weights, unit/zero batch-norm affine,
    /// discriminator uniform in ±1/d.
    pub fn init(in_dim: usize, config: &DgiConfig) -> Self {
        let mut rng = stream(config.seed, "dgi-init", 0);
        let (eps, learn) = match config.eps_mode {
            EpsMode::Fixed(e) => (T::of(e), false),
            EpsMode::Learnable => (T::zero(), true),
        };
        let d = config.hidden_dim;
        let encoder = GinEncoder::init(in_dim, d, eps, learn, &mut rng);
        let bound = 1.0 / d as f64;
        let disc_data = (0..d * d).map(|_| T::of(rng.random_range(-bound..bound))).collect();
        let params = DgiParams {
            encoder,
            disc: Matrix::from_vec(d, d, disc_data).expect("sized"),
        };
        let adam = AdamState::for_params(&params, config.learning_rate);
        Self { params, adam }
    }

    pub fn from_params(params: DgiParams<T>, learning_rate: f64) -> Self {
        let adam = AdamState::for_params(&params, learning_rate);
        Self { params, adam }
    }

    /// One optimization step on one graph: corrupt, encode both views, score,
    /// and apply Adam. Returns the loss before the update.
    pub fn train_step<R: Rng>(&mut self, graph: &TransactionGraph, x: &Matrix<T>, rng: &mut R) -> Result<f64> {
        let x_neg = corrupt_features(x, rng);
        let step = self.params.loss_and_grad(graph, x, &x_neg)?;
        self.params.absorb(&step);
        let grads = step.grads.tensors();
        let mut params = self.params.tensors_mut();
        self.adam.step(&mut params, &grads)?;
        Ok(step.loss)
    }

    /// Eval-mode embeddings of one graph.
    pub fn encode(&self, graph: &TransactionGraph, x: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.params.encoder.forward(graph, x, Mode::Eval)?.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub time_step: u32,
    pub epoch: usize,
    pub loss: f64,
}

/// Self-supervised training over the graphs in ascending time-step order,
/// `epochs_per_graph` full-graph steps each, one optimizer throughout.
pub fn train_dgi(
    train_set: &TemporalDataset,
    view: FeatureView,
    config: &DgiConfig,
) -> Result<(DgiModel<f32>, Vec<LossRecord>)> {
    train_dgi_with(train_set, view, config, |_| {})
}

/// [`train_dgi`] with a callback per completed epoch.
pub fn train_dgi_with(
    train_set: &TemporalDataset,
    view: FeatureView,
    config: &DgiConfig,
    mut on_epoch: impl FnMut(&LossRecord),
) -> Result<(DgiModel<f32>, Vec<LossRecord>)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidDataset("empty training set".into()));
    }
    let mut model = DgiModel::<f32>::init(view.width(), config);
    let mut log = Vec::with_capacity(train_set.len() * config.epochs_per_graph);
    for g in train_set.graphs() {
        let x = g.select_features(view)?;
        let mut rng = stream(config.seed, "dgi-corrupt", g.time_step() as u64);
        for epoch in 0..config.epochs_per_graph {
            let loss = model.train_step(g, &x, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Invariant(format!(
                    "non-finite loss at time step {} epoch {epoch}",
                    g.time_step()
                )));
            }
            let rec = LossRecord {
                time_step: g.time_step(),
                epoch,
                loss,
            };
            on_epoch(&rec);
            log.push(rec);
        }
    }
    Ok((model, log))
}

/// Node-aligned embeddings of one graph.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub time_step: u32,
    pub node_ids: Vec<u64>,
    pub embeddings: Matrix<f32>,
}

pub fn embed_graph(model: &DgiModel<f32>, graph: &TransactionGraph, view: FeatureView) -> Result<EmbeddingTable> {
    let x = graph.select_features(view)?;
    let embeddings = model.encode(graph, &x)?;
    if !embeddings.is_finite() {
        return Err(Error::Invariant(format!(
            "non-finite embedding in time step {}",
            graph.time_step()
        )));
    }
    Ok(EmbeddingTable {
        time_step: graph.time_step(),
        node_ids: graph.node_ids().to_vec(),
        embeddings,
    })
}

/// Eval-mode embeddings for every graph of `dataset`.
pub fn embed_all(model: &DgiModel<f32>, dataset: &TemporalDataset, view: FeatureView) -> Result<Vec<EmbeddingTable>> {
    dataset.graphs().iter().map(|g| embed_graph(model, g, view)).collect()
}
