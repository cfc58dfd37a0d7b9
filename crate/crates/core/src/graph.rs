//! Temporal transaction graphs: one immutable CSR graph per time step.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// Width of the full feature block.
pub const AF_WIDTH: usize = 166;
/// Width of the local feature block (prefix of the full block, time step included).
pub const LF_WIDTH: usize = 94;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Label {
    Illicit,
    Licit,
    Unknown,
}

impl Label {
    pub fn is_known(self) -> bool {
        self != Label::Unknown
    }

    /// Elliptic class token: "1" illicit, "2" licit, "unknown".
    pub fn token(self) -> &'static str {
        match self {
            Label::Illicit => "1",
            Label::Licit => "2",
            Label::Unknown => "unknown",
        }
    }

    pub fn from_token(tok: &str) -> Option<Self> {
        match tok.trim() {
            "1" => Some(Label::Illicit),
            "2" => Some(Label::Licit),
            "unknown" => Some(Label::Unknown),
            _ => None,
        }
    }
}

/// Which raw feature columns feed a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeatureView {
    /// All 166 columns.
    All,
    /// The first 94 (local) columns.
    Local,
}

impl FeatureView {
    pub fn width(self) -> usize {
        match self {
            FeatureView::All => AF_WIDTH,
            FeatureView::Local => LF_WIDTH,
        }
    }
}

impl fmt::Display for FeatureView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureView::All => "af",
            FeatureView::Local => "lf",
        })
    }
}

impl FromStr for FeatureView {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "af" | "all" => Ok(FeatureView::All),
            "lf" | "local" => Ok(FeatureView::Local),
            other => Err(Error::Config(format!("unknown feature view {other:?}"))),
        }
    }
}

/// One time step of the transaction graph.
///
/// Adjacency is undirected (symmetrized), deduplicated and free of
/// self-loops. Node order follows the order of `node_ids` given at build time.
#[derive(Clone, Debug, PartialEq)]
pub struct TransactionGraph {
    time_step: u32,
    node_ids: Vec<u64>,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    features: Matrix<f32>,
    labels: Vec<Label>,
}

impl TransactionGraph {
    /// Builds the CSR adjacency from an external-id edge list.
    pub fn build(
        time_step: u32,
        node_ids: Vec<u64>,
        edges: &[(u64, u64)],
        features: Matrix<f32>,
        labels: Vec<Label>,
    ) -> Result<Self> {
        let n = node_ids.len();
        if features.rows() != n {
            return Err(Error::shape(format!(
                "{} feature rows for {n} nodes",
                features.rows()
            )));
        }
        if labels.len() != n {
            return Err(Error::shape(format!("{} labels for {n} nodes", labels.len())));
        }
        if !features.is_finite() {
            return Err(Error::InvalidDataset(format!(
                "non-finite feature in time step {time_step}"
            )));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, &id) in node_ids.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(Error::DuplicateTxId(id));
            }
        }
        let mut pairs = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            let ia = *index.get(&a).ok_or(Error::UnknownEndpoint(a))?;
            let ib = *index.get(&b).ok_or(Error::UnknownEndpoint(b))?;
            pairs.push((ia, ib));
        }
        let (row_offsets, col_indices) = csr_from_index_pairs(n, &pairs);
        Ok(Self {
            time_step,
            node_ids,
            row_offsets,
            col_indices,
            features,
            labels,
        })
    }

    /// Same graph over a different node feature matrix.
    pub fn with_features(&self, features: Matrix<f32>) -> Result<Self> {
        if features.rows() != self.num_nodes() {
            return Err(Error::shape(format!(
                "{} feature rows for {} nodes",
                features.rows(),
                self.num_nodes()
            )));
        }
        Ok(Self {
            features,
            ..self.clone()
        })
    }

    pub fn time_step(&self) -> u32 {
        self.time_step
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.col_indices.len() / 2
    }

    pub fn node_ids(&self) -> &[u64] {
        &self.node_ids
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn features(&self) -> &Matrix<f32> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn degree(&self, v: usize) -> usize {
        self.row_offsets[v + 1] - self.row_offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes()).map(|v| self.degree(v)).collect()
    }

    pub fn neighbors(&self, v: usize) -> Result<&[usize]> {
        if v >= self.num_nodes() {
            return Err(Error::IndexOutOfRange {
                index: v,
                len: self.num_nodes(),
            });
        }
        Ok(self.neighbors_unchecked(v))
    }

    #[inline]
    pub(crate) fn neighbors_unchecked(&self, v: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[v]..self.row_offsets[v + 1]]
    }

    /// Undirected edges as `(i, j)` internal-index pairs with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for i in 0..self.num_nodes() {
            for &j in self.neighbors_unchecked(i) {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn select_features(&self, view: FeatureView) -> Result<Matrix<f32>> {
        select_features(&self.features, view)
    }

    /// Relabels nodes so that new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        if perm.len() != n {
            return Err(Error::shape(format!("permutation of length {} for {n} nodes", perm.len())));
        }
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(Error::shape("not a permutation".to_string()));
            }
            inverse[old] = new;
        }
        let pairs: Vec<(usize, usize)> = self
            .edges()
            .into_iter()
            .map(|(a, b)| (inverse[a], inverse[b]))
            .collect();
        let (row_offsets, col_indices) = csr_from_index_pairs(n, &pairs);
        Ok(Self {
            time_step: self.time_step,
            node_ids: perm.iter().map(|&p| self.node_ids[p]).collect(),
            row_offsets,
            col_indices,
            features: self.features.gather_rows(perm),
            labels: perm.iter().map(|&p| self.labels[p]).collect(),
        })
    }

    pub fn label_counts(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for l in &self.labels {
            c.add(*l);
        }
        c
    }
}

fn csr_from_index_pairs(n: usize, pairs: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(a, b) in pairs {
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    row_offsets.push(0);
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
        col_indices.extend_from_slice(list);
        row_offsets.push(col_indices.len());
    }
    (row_offsets, col_indices)
}

/// Column subset for a feature view.
pub fn select_features(x: &Matrix<f32>, view: FeatureView) -> Result<Matrix<f32>> {
    x.take_cols(view.width())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub illicit: usize,
    pub licit: usize,
    pub unknown: usize,
}

impl LabelCounts {
    fn add(&mut self, l: Label) {
        match l {
            Label::Illicit => self.illicit += 1,
            Label::Licit => self.licit += 1,
            Label::Unknown => self.unknown += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.illicit + self.licit + self.unknown
    }
}

impl std::ops::AddAssign for LabelCounts {
    fn add_assign(&mut self, o: Self) {
        self.illicit += o.illicit;
        self.licit += o.licit;
        self.unknown += o.unknown;
    }
}

/// Graphs ordered by strictly increasing time step, sharing one feature width.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalDataset {
    graphs: Vec<Arc<TransactionGraph>>,
    feature_dim: usize,
}

impl TemporalDataset {
    pub fn new(graphs: Vec<TransactionGraph>) -> Result<Self> {
        Self::from_shared(graphs.into_iter().map(Arc::new).collect())
    }

    pub fn from_shared(graphs: Vec<Arc<TransactionGraph>>) -> Result<Self> {
        let feature_dim = graphs.first().map_or(0, |g| g.feature_dim());
        let mut seen = std::collections::HashSet::new();
        for (k, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(Error::InvalidDataset(format!(
                    "time step {} has {} features, expected {feature_dim}",
                    g.time_step(),
                    g.feature_dim()
                )));
            }
            if k > 0 && graphs[k - 1].time_step() >= g.time_step() {
                return Err(Error::InvalidDataset(format!(
                    "time steps not strictly increasing at {}",
                    g.time_step()
                )));
            }
            for &id in g.node_ids() {
                if !seen.insert(id) {
                    return Err(Error::DuplicateTxId(id));
                }
            }
        }
        Ok(Self {
            graphs,
            feature_dim,
        })
    }

    pub fn graphs(&self) -> &[Arc<TransactionGraph>] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_nodes(&self) -> usize {
        self.graphs.iter().map(|g| g.num_nodes()).sum()
    }

    pub fn num_edges(&self) -> usize {
        self.graphs.iter().map(|g| g.num_edges()).sum()
    }

    pub fn label_counts(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for g in &self.graphs {
            c += g.label_counts();
        }
        c
    }

    /// First `train_count` graphs for training, the rest for testing.
    pub fn split_temporal(&self, train_count: usize) -> Result<(TemporalDataset, TemporalDataset)> {
        if train_count == 0 || train_count >= self.len() {
            return Err(Error::BadSplit {
                train_count,
                graphs: self.len(),
            });
        }
        let (a, b) = self.graphs.split_at(train_count);
        Ok((
            TemporalDataset {
                graphs: a.to_vec(),
                feature_dim: self.feature_dim,
            },
            TemporalDataset {
                graphs: b.to_vec(),
                feature_dim: self.feature_dim,
            },
        ))
    }
}
