//! Staged pipeline commands. Stages communicate only through the artifacts
//! in the output directory, so running them one by one gives the same files
//! as [`cmd_pipeline`].

mod config;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

pub use config::{DataSource, PipelineConfig, RawConfig, DEFAULT_TRAIN_COUNT};

use crate::dgi::{self, DgiModel, EmbeddingTable};
use crate::error::{Error, Result};
use crate::eval::{per_timestep_f1, EvalReport};
use crate::forest::{self, assemble_features, fit_forest, label_for, LabeledMatrix};
use crate::graph::{Label, TemporalDataset, TransactionGraph};
use crate::ingest::{generate_synthetic, load_elliptic_with_stats, write_elliptic};
use crate::util::fmt_g6;

pub const ENCODER_FILE: &str = "encoder.bin";
pub const FOREST_FILE: &str = "forest.bin";
pub const LOSS_FILE: &str = "dgi_loss.csv";
pub const EMBEDDING_DIR: &str = "embeddings";
pub const REPORT_FILE: &str = "report.csv";
pub const PER_TIMESTEP_FILE: &str = "per_timestep_f1.csv";
pub const CONFUSION_FILE: &str = "confusion.csv";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.txt";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSummary {
    pub timesteps: usize,
    pub nodes: usize,
    /// Undirected edges after symmetrization and deduplication.
    pub edges: usize,
    /// Edge-list rows as read, when loaded from CSV.
    pub raw_edges: Option<usize>,
    pub feature_dim: usize,
    pub illicit: usize,
    pub licit: usize,
    pub unknown: usize,
}

impl fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} timesteps, {} nodes, {} edges", self.timesteps, self.nodes, self.edges)?;
        if let Some(raw) = self.raw_edges {
            write!(f, " ({raw} edge-list rows)")?;
        }
        write!(
            f,
            ", {} features; labels: {} illicit, {} licit, {} unknown",
            self.feature_dim, self.illicit, self.licit, self.unknown
        )
    }
}

fn load_dataset(cfg: &PipelineConfig) -> Result<(TemporalDataset, Option<usize>)> {
    match &cfg.data {
        DataSource::Elliptic(paths) => {
            let (ds, stats) = load_elliptic_with_stats(paths)?;
            Ok((ds, Some(stats.raw_edges)))
        }
        DataSource::Synthetic(spec) => Ok((generate_synthetic(spec)?, None)),
    }
}

fn prepare_out(cfg: &PipelineConfig) -> Result<&Path> {
    let out = cfg.output_dir.as_path();
    std::fs::create_dir_all(out).map_err(|e| Error::io(format!("create {}", out.display()), e))?;
    let p = out.join(RESOLVED_CONFIG_FILE);
    std::fs::write(&p, cfg.to_text()).map_err(|e| Error::io(format!("write {}", p.display()), e))?;
    Ok(out)
}

fn check_widths(cfg: &PipelineConfig, ds: &TemporalDataset) -> Result<()> {
    let need = cfg
        .view
        .width()
        .max(cfg.scenario.raw_view().map_or(0, |v| v.width()));
    if ds.feature_dim() < need {
        return Err(Error::InsufficientColumns {
            needed: need,
            available: ds.feature_dim(),
        });
    }
    Ok(())
}

fn split(cfg: &PipelineConfig, ds: &TemporalDataset) -> Result<(TemporalDataset, TemporalDataset)> {
    ds.split_temporal(cfg.train_count)
}

pub fn cmd_validate(cfg: &PipelineConfig) -> Result<DatasetSummary> {
    let (ds, raw_edges) = load_dataset(cfg)?;
    let c = ds.label_counts();
    Ok(DatasetSummary {
        timesteps: ds.len(),
        nodes: ds.num_nodes(),
        edges: ds.num_edges(),
        raw_edges,
        feature_dim: ds.feature_dim(),
        illicit: c.illicit,
        licit: c.licit,
        unknown: c.unknown,
    })
}

/// Writes the configured synthetic dataset as an Elliptic-format triplet
/// into the output directory.
pub fn cmd_synth(cfg: &PipelineConfig) -> Result<DatasetSummary> {
    let DataSource::Synthetic(spec) = &cfg.data else {
        return Err(Error::Config("synth needs a synthetic data source (synth.* keys)".into()));
    };
    let out = prepare_out(cfg)?;
    let ds = generate_synthetic(spec)?;
    write_elliptic(&ds, out)?;
    let c = ds.label_counts();
    Ok(DatasetSummary {
        timesteps: ds.len(),
        nodes: ds.num_nodes(),
        edges: ds.num_edges(),
        raw_edges: None,
        feature_dim: ds.feature_dim(),
        illicit: c.illicit,
        licit: c.licit,
        unknown: c.unknown,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainDgiSummary {
    pub encoder_path: PathBuf,
    pub loss_path: PathBuf,
    pub graphs: usize,
    pub loss_rows: usize,
    pub first_loss: Option<f64>,
    pub last_loss: Option<f64>,
}

pub fn cmd_train_dgi(cfg: &PipelineConfig) -> Result<TrainDgiSummary> {
    let out = prepare_out(cfg)?;
    let (ds, _) = load_dataset(cfg)?;
    check_widths(cfg, &ds)?;
    let (train, _) = split(cfg, &ds)?;
    let (model, log) = dgi::train_dgi(&train, cfg.view, &cfg.dgi)?;

    let encoder_path = out.join(ENCODER_FILE);
    dgi::save_params(&model.params, &encoder_path)?;
    let loss_path = out.join(LOSS_FILE);
    let err = |e| Error::io(format!("write {}", loss_path.display()), e);
    let mut w = BufWriter::new(File::create(&loss_path).map_err(err)?);
    writeln!(w, "graph,epoch,loss").map_err(err)?;
    for r in &log {
        writeln!(w, "{},{},{}", r.time_step, r.epoch, fmt_g6(r.loss)).map_err(err)?;
    }
    w.flush().map_err(err)?;
    Ok(TrainDgiSummary {
        encoder_path,
        loss_path,
        graphs: train.len(),
        loss_rows: log.len(),
        first_loss: log.first().map(|r| r.loss),
        last_loss: log.last().map(|r| r.loss),
    })
}

fn embedding_path(out: &Path, time_step: u32) -> PathBuf {
    out.join(EMBEDDING_DIR).join(format!("ts_{time_step:02}.csv"))
}

fn load_encoder(cfg: &PipelineConfig) -> Result<DgiModel<f32>> {
    let params = dgi::load_params(&cfg.output_dir.join(ENCODER_FILE))?;
    if params.encoder.in_dim() != cfg.view.width() {
        return Err(Error::CorruptArtifact(format!(
            "encoder expects {} input features but view {} has {}",
            params.encoder.in_dim(),
            cfg.view,
            cfg.view.width()
        )));
    }
    Ok(DgiModel::from_params(params, cfg.dgi.learning_rate))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbedSummary {
    pub files: Vec<PathBuf>,
    pub rows: usize,
    pub dim: usize,
}

/// Eval-mode embeddings of every graph, one CSV per time step.
pub fn cmd_embed(cfg: &PipelineConfig) -> Result<EmbedSummary> {
    let out = prepare_out(cfg)?;
    let model = load_encoder(cfg)?;
    let (ds, _) = load_dataset(cfg)?;
    check_widths(cfg, &ds)?;
    let dir = out.join(EMBEDDING_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
    let mut files = Vec::with_capacity(ds.len());
    let mut rows = 0;
    for g in ds.graphs() {
        let table = dgi::embed_graph(&model, g, cfg.view)?;
        let p = embedding_path(out, g.time_step());
        dgi::write_embeddings_csv(&table, &p)?;
        rows += table.embeddings.rows();
        files.push(p);
    }
    Ok(EmbedSummary {
        files,
        rows,
        dim: model.params.embedding_dim(),
    })
}

fn read_table(out: &Path, g: &TransactionGraph) -> Result<EmbeddingTable> {
    let p = embedding_path(out, g.time_step());
    if !p.exists() {
        return Err(Error::Config(format!(
            "missing embeddings {} (run embed first)",
            p.display()
        )));
    }
    dgi::read_embeddings_csv(&p, g.time_step())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRfSummary {
    pub forest_path: PathBuf,
    pub rows: usize,
    pub width: usize,
    pub trees: usize,
}

pub fn cmd_train_rf(cfg: &PipelineConfig) -> Result<TrainRfSummary> {
    let out = prepare_out(cfg)?;
    let (ds, _) = load_dataset(cfg)?;
    check_widths(cfg, &ds)?;
    let (train, _) = split(cfg, &ds)?;
    let mut parts = Vec::with_capacity(train.len());
    for g in train.graphs() {
        let table = read_table(out, g)?;
        parts.push(assemble_features(g, &table, cfg.scenario)?);
    }
    let data = LabeledMatrix::vstack(&parts)?;
    let model = fit_forest(&data, &cfg.forest)?;
    let forest_path = out.join(FOREST_FILE);
    forest::save_forest(&model, &forest_path)?;
    Ok(TrainRfSummary {
        forest_path,
        rows: data.len(),
        width: data.x().cols(),
        trees: model.trees.len(),
    })
}

/// Scores the test graphs and writes `report.csv`, `per_timestep_f1.csv`
/// and `confusion.csv`.
pub fn cmd_evaluate(cfg: &PipelineConfig) -> Result<EvalReport> {
    let out = prepare_out(cfg)?;
    load_encoder(cfg)?;
    let model = forest::load_forest(&out.join(FOREST_FILE))?;
    let (ds, _) = load_dataset(cfg)?;
    check_widths(cfg, &ds)?;
    let (_, test) = split(cfg, &ds)?;

    let mut y_true = Vec::new();
    let mut y_pred = Vec::new();
    let mut scores = Vec::new();
    let mut per_graph_pred = Vec::with_capacity(test.len());
    let graphs: Vec<&TransactionGraph> = test.graphs().iter().map(|g| g.as_ref()).collect();
    for g in &graphs {
        let table = read_table(out, g)?;
        let lm = assemble_features(g, &table, cfg.scenario)?;
        let proba = model.predict_proba(lm.x())?;
        // scatter predictions back onto all nodes; unknown nodes are skipped downstream
        let mut node_pred = vec![Label::Unknown; g.num_nodes()];
        let mut it = proba.iter();
        for (i, l) in g.labels().iter().enumerate() {
            if l.is_known() {
                node_pred[i] = label_for(*it.next().expect("one score per labeled node"));
            }
        }
        y_true.extend_from_slice(lm.y());
        y_pred.extend(proba.iter().map(|&p| label_for(p)));
        scores.extend_from_slice(&proba);
        per_graph_pred.push(node_pred);
    }
    let series = per_timestep_f1(&graphs, &per_graph_pred)?;
    let report = EvalReport::build(&y_true, &y_pred, &scores, series)?;
    report.write_report_csv(&out.join(REPORT_FILE))?;
    report.write_per_timestep_csv(&out.join(PER_TIMESTEP_FILE))?;
    report.write_confusion_csv(&out.join(CONFUSION_FILE))?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineSummary {
    pub dataset: DatasetSummary,
    pub dgi: TrainDgiSummary,
    pub embed: EmbedSummary,
    pub forest: TrainRfSummary,
    pub report: EvalReport,
}

/// Every stage in order; the first failure aborts with its stage name.
pub fn cmd_pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary> {
    let stage = |name: &'static str| move |e: Error| stage_error(name, e);
    let dataset = cmd_validate(cfg).map_err(stage("validate"))?;
    let dgi = cmd_train_dgi(cfg).map_err(stage("train-dgi"))?;
    let embed = cmd_embed(cfg).map_err(stage("embed"))?;
    let forest = cmd_train_rf(cfg).map_err(stage("train-rf"))?;
    let report = cmd_evaluate(cfg).map_err(stage("evaluate"))?;
    Ok(PipelineSummary {
        dataset,
        dgi,
        embed,
        forest,
        report,
    })
}

fn stage_error(stage: &str, e: Error) -> Error {
    match e {
        Error::Io { context, source } => Error::Io {
            context: format!("{stage}: {context}"),
            source,
        },
        Error::Config(m) => Error::Config(format!("{stage}: {m}")),
        Error::Invariant(m) => Error::Invariant(format!("{stage}: {m}")),
        other => other,
    }
}
