use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Label, TemporalDataset, TransactionGraph};
use crate::nn::Matrix;

fn step_dir(dir: &Path, step: u32) -> std::path::PathBuf {
    dir.join(format!("ts_{step:02}"))
}

/// Writes one `ts_NN/{nodes,edges}.csv` pair per time step.
///
/// `nodes.csv` is `txId,label,f1..fD` with Elliptic class tokens;
/// `edges.csv` is `txId1,txId2`, one row per undirected edge.
pub fn write_fixture_dir(ds: &TemporalDataset, dir: &Path) -> Result<()> {
    for g in ds.graphs() {
        let sd = step_dir(dir, g.time_step());
        fs::create_dir_all(&sd).map_err(|e| Error::io(format!("create {}", sd.display()), e))?;
        let nodes = sd.join("nodes.csv");
        let err = |e| Error::io(format!("write {}", nodes.display()), e);
        let mut w = BufWriter::new(File::create(&nodes).map_err(err)?);
        write!(w, "txId,label").map_err(err)?;
        for c in 1..=g.feature_dim() {
            write!(w, ",f{c}").map_err(err)?;
        }
        writeln!(w).map_err(err)?;
        for (i, (&id, l)) in g.node_ids().iter().zip(g.labels()).enumerate() {
            write!(w, "{id},{}", l.token()).map_err(err)?;
            for v in g.features().row(i) {
                write!(w, ",{v}").map_err(err)?;
            }
            writeln!(w).map_err(err)?;
        }
        w.flush().map_err(err)?;

        let edges = sd.join("edges.csv");
        let err = |e| Error::io(format!("write {}", edges.display()), e);
        let mut w = BufWriter::new(File::create(&edges).map_err(err)?);
        writeln!(w, "txId1,txId2").map_err(err)?;
        let ids = g.node_ids();
        for (a, b) in g.edges() {
            writeln!(w, "{},{}", ids[a], ids[b]).map_err(err)?;
        }
        w.flush().map_err(err)?;
    }
    Ok(())
}

/// Reads a directory written by [`write_fixture_dir`].
pub fn read_fixture_dir(dir: &Path) -> Result<TemporalDataset> {
    let mut steps = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(format!("read {}", dir.display()), e))? {
        let entry = entry.map_err(|e| Error::io(format!("read {}", dir.display()), e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(step) = name.strip_prefix("ts_").and_then(|s| s.parse::<u32>().ok()) {
            steps.push(step);
        }
    }
    steps.sort_unstable();
    let mut graphs = Vec::with_capacity(steps.len());
    for step in steps {
        let sd = step_dir(dir, step);
        let nodes = sd.join("nodes.csv");
        let mut r = csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(&nodes)
            .map_err(|e| Error::MalformedRow { path: nodes.clone(), line: 0, reason: e.to_string() })?;
        let malformed = |line: u64, reason: String| Error::MalformedRow {
            path: nodes.clone(),
            line,
            reason,
        };
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut data = Vec::new();
        let mut width = None;
        for rec in r.records() {
            let rec = rec.map_err(|e| malformed(0, e.to_string()))?;
            let line = rec.position().map_or(0, |p| p.line());
            let w = *width.get_or_insert(rec.len());
            if rec.len() != w || w < 2 {
                return Err(malformed(line, format!("{} columns, expected {w}", rec.len())));
            }
            ids.push(rec[0].parse::<u64>().map_err(|_| malformed(line, "bad txId".into()))?);
            labels.push(Label::from_token(&rec[1]).ok_or_else(|| Error::UnknownClassToken {
                path: nodes.clone(),
                line,
                token: rec[1].to_string(),
            })?);
            for f in rec.iter().skip(2) {
                data.push(f.parse::<f32>().map_err(|_| malformed(line, format!("bad value {f:?}")))?);
            }
        }
        let d = width.map_or(0, |w| w - 2);
        let n = ids.len();

        let edges_path = sd.join("edges.csv");
        let mut r = csv::Reader::from_path(&edges_path)
            .map_err(|e| Error::MalformedRow { path: edges_path.clone(), line: 0, reason: e.to_string() })?;
        let mut edges = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| Error::MalformedRow { path: edges_path.clone(), line: 0, reason: e.to_string() })?;
            let line = rec.position().map_or(0, |p| p.line());
            let parse = |s: &str| {
                s.parse::<u64>().map_err(|_| Error::MalformedRow {
                    path: edges_path.clone(),
                    line,
                    reason: format!("bad txId {s:?}"),
                })
            };
            edges.push((parse(&rec[0])?, parse(&rec[1])?));
        }
        let x = Matrix::from_vec(n, d, data)?;
        graphs.push(TransactionGraph::build(step, ids, &edges, x, labels)?);
    }
    TemporalDataset::new(graphs)
}
