//! Illicit-transaction detection on temporal transaction graphs.
//!
//! Node embeddings come from a two-layer GIN encoder trained without labels
//! under the Deep Graph Infomax objective; a random forest then classifies
//! labeled transactions from the embeddings, optionally concatenated with the
//! raw features.
//!
//! ```no_run
//! use inspection_core::dgi::{embed_graph, train_dgi, DgiConfig};
//! use inspection_core::forest::{assemble_features, fit_forest, ForestConfig, LabeledMatrix, Scenario};
//! use inspection_core::graph::FeatureView;
//! use inspection_core::ingest::{generate_synthetic, SynthSpec};
//!
//! # fn main() -> inspection_core::Result<()> {
//! let ds = generate_synthetic(&SynthSpec::default())?;
//! let (train, test) = ds.split_temporal(3)?;
//! let (model, _losses) = train_dgi(&train, FeatureView::All, &DgiConfig::default())?;
//!
//! let mut parts = Vec::new();
//! for g in train.graphs() {
//!     let table = embed_graph(&model, g, FeatureView::All)?;
//!     parts.push(assemble_features(g, &table, Scenario::AfDne)?);
//! }
//! let forest = fit_forest(&LabeledMatrix::vstack(&parts)?, &ForestConfig::default())?;
//!
//! let g = &test.graphs()[0];
//! let rows = assemble_features(g, &embed_graph(&model, g, FeatureView::All)?, Scenario::AfDne)?;
//! let scores = forest.predict_proba(rows.x())?;
//! # let _ = scores;
//! # Ok(())
//! # }
//! ```

mod container;
pub mod dgi;
pub mod error;
pub mod eval;
pub mod forest;
pub mod graph;
pub mod ingest;
pub mod nn;
pub mod pipeline;
pub mod util;

pub use error::{Error, Result};
pub use graph::{FeatureView, Label, TemporalDataset, TransactionGraph};
