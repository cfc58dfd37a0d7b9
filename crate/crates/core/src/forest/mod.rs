//! Random forest over raw features concatenated with node embeddings.

mod io;
mod tree;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

pub use io::{decode_forest, encode_forest, load_forest, save_forest, FOREST_MAGIC};
pub use tree::{Tree, TreeNode};

use crate::dgi::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::{FeatureView, Label, TransactionGraph};
use crate::nn::Matrix;
use crate::util::stream;
use tree::{bootstrap, grow_tree, TreeParams, ILLICIT, LICIT};

pub const DEFAULT_TREES: usize = 100;

/// Which feature blocks feed the classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Embeddings only.
    Dne,
    /// Local raw features, then embeddings.
    LfDne,
    /// All raw features, then embeddings.
    AfDne,
}

impl Scenario {
    pub fn raw_view(self) -> Option<FeatureView> {
        match self {
            Scenario::Dne => None,
            Scenario::LfDne => Some(FeatureView::Local),
            Scenario::AfDne => Some(FeatureView::All),
        }
    }

    pub fn width(self, embedding_dim: usize) -> usize {
        self.raw_view().map_or(0, FeatureView::width) + embedding_dim
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Dne => "dne",
            Scenario::LfDne => "lf-dne",
            Scenario::AfDne => "af-dne",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "dne" => Ok(Scenario::Dne),
            "lf-dne" => Ok(Scenario::LfDne),
            "af-dne" => Ok(Scenario::AfDne),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Feature rows with binary labels; never contains `Unknown`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledMatrix {
    x: Matrix<f32>,
    y: Vec<Label>,
}

impl LabeledMatrix {
    pub fn new(x: Matrix<f32>, y: Vec<Label>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.rows(),
                right: y.len(),
            });
        }
        if y.contains(&Label::Unknown) {
            return Err(Error::Misalignment("unknown labels in a labeled matrix".into()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &Matrix<f32> {
        &self.x
    }

    pub fn y(&self) -> &[Label] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Row-wise concatenation.
    pub fn vstack(parts: &[LabeledMatrix]) -> Result<Self> {
        let cols = parts.first().map_or(0, |p| p.x.cols());
        let mut data = Vec::new();
        let mut y = Vec::new();
        for p in parts {
            if p.x.cols() != cols {
                return Err(Error::shape(format!("stacking widths {} and {cols}", p.x.cols())));
            }
            data.extend_from_slice(p.x.data());
            y.extend_from_slice(&p.y);
        }
        Self::new(Matrix::from_vec(y.len(), cols, data)?, y)
    }
}

/// Builds the classifier input for one graph: raw feature block (if any)
/// followed by the embedding, restricted to labeled nodes.
pub fn assemble_features(graph: &TransactionGraph, table: &EmbeddingTable, scenario: Scenario) -> Result<LabeledMatrix> {
    if table.node_ids != graph.node_ids() || table.embeddings.rows() != graph.num_nodes() {
        return Err(Error::Misalignment(format!(
            "embedding table for time step {} does not match graph {}",
            table.time_step,
            graph.time_step()
        )));
    }
    let full = match scenario.raw_view() {
        Some(view) => graph.select_features(view)?.hcat(&table.embeddings)?,
        None => table.embeddings.clone(),
    };
    let keep: Vec<usize> = (0..graph.num_nodes()).filter(|&i| graph.labels()[i].is_known()).collect();
    let y = keep.iter().map(|&i| graph.labels()[i]).collect();
    LabeledMatrix::new(full.gather_rows(&keep), y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Candidate features per split; `None` means ⌈√d⌉.
    pub features_per_split: Option<usize>,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: DEFAULT_TREES,
            features_per_split: None,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub num_features: usize,
    pub features_per_split: usize,
    pub seed: u64,
    /// Set when the training data held a single class.
    pub degenerate: bool,
}

fn class_index(l: Label) -> usize {
    match l {
        Label::Illicit => ILLICIT,
        _ => LICIT,
    }
}

pub fn fit_forest(data: &LabeledMatrix, config: &ForestConfig) -> Result<ForestModel> {
    if data.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if config.n_trees == 0 {
        return Err(Error::Config("a forest needs at least one tree".into()));
    }
    let d = data.x.cols();
    if d == 0 {
        return Err(Error::shape("no feature columns"));
    }
    let fps = config
        .features_per_split
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize);
    if fps == 0 || fps > d {
        return Err(Error::Config(format!("features_per_split {fps} outside [1, {d}]")));
    }
    let y: Vec<usize> = data.y.iter().map(|&l| class_index(l)).collect();
    let degenerate = !(y.contains(&ILLICIT) && y.contains(&LICIT));
    let params = TreeParams {
        features_per_split: fps,
        max_depth: config.max_depth,
    };
    let n = data.len();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(config.seed, "forest-tree", t as u64);
            let samples = if config.bootstrap {
                bootstrap(n, &mut rng)
            } else {
                (0..n).collect()
            };
            grow_tree(&data.x, &y, samples, params, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        num_features: d,
        features_per_split: fps,
        seed: config.seed,
        degenerate,
    })
}

/// Decision threshold on the illicit probability; ties go to `Illicit`.
pub const DECISION_THRESHOLD: f64 = 0.5;

pub fn label_for(proba: f64) -> Label {
    if proba >= DECISION_THRESHOLD {
        Label::Illicit
    } else {
        Label::Licit
    }
}

impl ForestModel {
    fn check_width(&self, x: &Matrix<f32>) -> Result<()> {
        if x.cols() != self.num_features {
            return Err(Error::shape(format!(
                "forest expects {} features, got {}",
                self.num_features,
                x.cols()
            )));
        }
        Ok(())
    }

    /// Mean over trees of the leaf illicit fraction.
    pub fn predict_proba(&self, x: &Matrix<f32>) -> Result<Vec<f64>> {
        self.check_width(x)?;
        let n_trees = self.trees.len() as f64;
        Ok((0..x.rows())
            .into_par_iter()
            .map(|r| {
                let row = x.row(r);
                let mut fr: Vec<f64> = self.trees.iter().map(|t| t.illicit_fraction(row)).collect();
                // summation order independent of tree order
                fr.sort_unstable_by(f64::total_cmp);
                fr.iter().sum::<f64>() / n_trees
            })
            .collect())
    }

    pub fn predict(&self, x: &Matrix<f32>) -> Result<Vec<Label>> {
        Ok(self.predict_proba(x)?.into_iter().map(label_for).collect())
    }
}
