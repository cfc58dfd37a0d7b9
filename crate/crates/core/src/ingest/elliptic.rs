use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Label, TemporalDataset, TransactionGraph};
use crate::nn::Matrix;

pub const FEATURES_FILE: &str = "elliptic_txs_features.csv";
pub const CLASSES_FILE: &str = "elliptic_txs_classes.csv";
pub const EDGELIST_FILE: &str = "elliptic_txs_edgelist.csv";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EllipticPaths {
    pub features: PathBuf,
    pub classes: PathBuf,
    pub edgelist: PathBuf,
}

impl EllipticPaths {
    /// The three files under their canonical names in `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            features: dir.join(FEATURES_FILE),
            classes: dir.join(CLASSES_FILE),
            edgelist: dir.join(EDGELIST_FILE),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IngestStats {
    /// Rows of the edge list, before symmetrization and deduplication.
    pub raw_edges: usize,
}

struct NodeRow {
    id: u64,
    step: u32,
    features: Vec<f32>,
}

fn open(path: &Path, has_headers: bool) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(format!("open {}", path.display()), e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn malformed(path: &Path, line: u64, reason: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn read_record(path: &Path, r: std::result::Result<csv::StringRecord, csv::Error>) -> Result<csv::StringRecord> {
    r.map_err(|e| {
        let line = e.position().map_or(0, |p| p.line());
        malformed(path, line, e.to_string())
    })
}

fn parse_id(path: &Path, line: u64, field: &str) -> Result<u64> {
    field
        .parse::<u64>()
        .map_err(|_| malformed(path, line, format!("transaction id {field:?} is not an unsigned integer")))
}

fn parse_time_step(path: &Path, line: u64, field: &str) -> Result<u32> {
    let v: f64 = field
        .parse()
        .map_err(|_| malformed(path, line, format!("time step {field:?} is not numeric")))?;
    if v.fract() != 0.0 || v < 1.0 || v > u32::MAX as f64 {
        return Err(malformed(path, line, format!("time step {field:?} is not a positive integer")));
    }
    Ok(v as u32)
}

/// Reads `txId, timeStep, f1..` rows. Every row must have the column count of
/// the first row (167 for the published dataset). The time step stays in the
/// feature vector as column 0.
fn read_features(path: &Path) -> Result<Vec<NodeRow>> {
    let mut reader = open(path, false)?;
    let mut rows = Vec::new();
    let mut width = None;
    for rec in reader.records() {
        let rec = read_record(path, rec)?;
        let line = line_of(&rec);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected || rec.len() < 2 {
            return Err(malformed(
                path,
                line,
                format!("{} columns, expected {expected}", rec.len()),
            ));
        }
        let id = parse_id(path, line, &rec[0])?;
        let step = parse_time_step(path, line, &rec[1])?;
        let mut features = Vec::with_capacity(rec.len() - 1);
        for (k, field) in rec.iter().enumerate().skip(1) {
            let v: f32 = field
                .parse()
                .map_err(|_| malformed(path, line, format!("column {} value {field:?} is not numeric", k + 1)))?;
            if !v.is_finite() {
                return Err(malformed(path, line, format!("column {} is not finite", k + 1)));
            }
            features.push(v);
        }
        rows.push(NodeRow { id, step, features });
    }
    Ok(rows)
}

fn read_classes(path: &Path) -> Result<HashMap<u64, Label>> {
    let mut reader = open(path, true)?;
    let mut out = HashMap::new();
    for rec in reader.records() {
        let rec = read_record(path, rec)?;
        let line = line_of(&rec);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 2 {
            return Err(malformed(path, line, format!("{} columns, expected 2", rec.len())));
        }
        let id = parse_id(path, line, &rec[0])?;
        let label = Label::from_token(&rec[1]).ok_or_else(|| Error::UnknownClassToken {
            path: path.to_path_buf(),
            line,
            token: rec[1].to_string(),
        })?;
        if out.insert(id, label).is_some() {
            return Err(Error::DuplicateTxId(id));
        }
    }
    Ok(out)
}

fn read_edges(path: &Path) -> Result<Vec<(u64, u64)>> {
    let mut reader = open(path, true)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = read_record(path, rec)?;
        let line = line_of(&rec);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 2 {
            return Err(malformed(path, line, format!("{} columns, expected 2", rec.len())));
        }
        out.push((parse_id(path, line, &rec[0])?, parse_id(path, line, &rec[1])?));
    }
    Ok(out)
}

pub fn load_elliptic(paths: &EllipticPaths) -> Result<TemporalDataset> {
    load_elliptic_with_stats(paths).map(|(ds, _)| ds)
}

/// Loads the CSV triplet into one graph per distinct time step.
///
/// Internal node order within a step follows the order of the features file.
pub fn load_elliptic_with_stats(paths: &EllipticPaths) -> Result<(TemporalDataset, IngestStats)> {
    let rows = read_features(&paths.features)?;
    let classes = read_classes(&paths.classes)?;
    let edges = read_edges(&paths.edgelist)?;

    let mut step_of: HashMap<u64, u32> = HashMap::with_capacity(rows.len());
    for r in &rows {
        if step_of.insert(r.id, r.step).is_some() {
            return Err(Error::DuplicateTxId(r.id));
        }
    }
    for id in classes.keys() {
        if !step_of.contains_key(id) {
            return Err(Error::InvalidDataset(format!(
                "class row for transaction {id} missing from the features file"
            )));
        }
    }

    let mut steps: Vec<u32> = step_of.values().copied().collect();
    steps.sort_unstable();
    steps.dedup();
    let slot: HashMap<u32, usize> = steps.iter().enumerate().map(|(i, &s)| (s, i)).collect();

    let mut step_rows: Vec<Vec<&NodeRow>> = vec![Vec::new(); steps.len()];
    for r in &rows {
        step_rows[slot[&r.step]].push(r);
    }
    let mut step_edges: Vec<Vec<(u64, u64)>> = vec![Vec::new(); steps.len()];
    for &(a, b) in &edges {
        let sa = *step_of.get(&a).ok_or(Error::UnknownEndpoint(a))?;
        let sb = *step_of.get(&b).ok_or(Error::UnknownEndpoint(b))?;
        if sa != sb {
            return Err(Error::CrossTimestepEdge {
                src: a,
                dst: b,
                src_step: sa,
                dst_step: sb,
            });
        }
        step_edges[slot[&sa]].push((a, b));
    }

    let graphs: Result<Vec<TransactionGraph>> = steps
        .par_iter()
        .enumerate()
        .map(|(k, &step)| {
            let rows = &step_rows[k];
            let dim = rows[0].features.len();
            let mut data = Vec::with_capacity(rows.len() * dim);
            let mut ids = Vec::with_capacity(rows.len());
            let mut labels = Vec::with_capacity(rows.len());
            for r in rows {
                ids.push(r.id);
                data.extend_from_slice(&r.features);
                let label = classes.get(&r.id).copied().ok_or_else(|| {
                    Error::InvalidDataset(format!("transaction {} has no class row", r.id))
                })?;
                labels.push(label);
            }
            let x = Matrix::from_vec(rows.len(), dim, data)?;
            TransactionGraph::build(step, ids, &step_edges[k], x, labels)
        })
        .collect();
    let ds = TemporalDataset::new(graphs?)?;
    Ok((ds, IngestStats { raw_edges: edges.len() }))
}

/// Writes a dataset as an Elliptic-format triplet under `dir`.
///
/// Column 0 of each feature row is written as the time-step column, so the
/// features of a dataset loaded this way round-trip unchanged.
pub fn write_elliptic(ds: &TemporalDataset, dir: &Path) -> Result<EllipticPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("create {}", dir.display()), e))?;
    let paths = EllipticPaths::in_dir(dir);
    let create = |p: &Path| -> Result<BufWriter<File>> {
        File::create(p)
            .map(BufWriter::new)
            .map_err(|e| Error::io(format!("create {}", p.display()), e))
    };
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |e| Error::io(format!("write {p}"), e)
    };

    let mut f = create(&paths.features)?;
    for g in ds.graphs() {
        for (i, &id) in g.node_ids().iter().enumerate() {
            write!(f, "{id},{}", g.time_step()).map_err(io(&paths.features))?;
            for v in &g.features().row(i)[1..] {
                write!(f, ",{v}").map_err(io(&paths.features))?;
            }
            writeln!(f).map_err(io(&paths.features))?;
        }
    }
    f.flush().map_err(io(&paths.features))?;

    let mut c = create(&paths.classes)?;
    writeln!(c, "txId,class").map_err(io(&paths.classes))?;
    for g in ds.graphs() {
        for (id, l) in g.node_ids().iter().zip(g.labels()) {
            writeln!(c, "{id},{}", l.token()).map_err(io(&paths.classes))?;
        }
    }
    c.flush().map_err(io(&paths.classes))?;

    let mut e = create(&paths.edgelist)?;
    writeln!(e, "txId1,txId2").map_err(io(&paths.edgelist))?;
    for g in ds.graphs() {
        let ids = g.node_ids();
        for (a, b) in g.edges() {
            writeln!(e, "{},{}", ids[a], ids[b]).map_err(io(&paths.edgelist))?;
        }
    }
    e.flush().map_err(io(&paths.edgelist))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write_triplet(dir: &Path, features: &str, classes: &str, edges: &str) -> EllipticPaths {
        let p = EllipticPaths::in_dir(dir);
        fs::write(&p.features, features).unwrap();
        fs::write(&p.classes, classes).unwrap();
        fs::write(&p.edgelist, edges).unwrap();
        p
    }

    #[test]
    fn loads_small_triplet() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_triplet(
            dir.path(),
            "10,1,0.5,1.5\n11,1,-0.5,2.0\n20,2,3.0,4.0\r\n21,2,1.0,1.0\n22,2,0.0,0.0\n",
            "txId,class\n10,1\n11,2\n20,unknown\n21,2\n22,1\n",
            "txId1,txId2\n10,11\n20,21\n21,22\n22,21\n",
        );
        let (ds, stats) = load_elliptic_with_stats(&p).unwrap();
        assert_eq!(stats.raw_edges, 4);
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.feature_dim(), 3);
        let g = &ds.graphs()[1];
        assert_eq!(g.time_step(), 2);
        assert_eq!(g.node_ids(), &[20, 21, 22]);
        assert_eq!(g.labels(), &[Label::Unknown, Label::Licit, Label::Illicit]);
        assert_eq!(g.features().row(0), &[2.0, 3.0, 4.0]);
        assert_eq!(g.degrees(), vec![1, 2, 1]);
        assert_eq!(ds.num_edges(), 3);
        // order-stable
        assert_eq!(load_elliptic(&p).unwrap(), ds);
    }

    #[test]
    fn empty_edgelist() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_triplet(dir.path(), "1,1,0.0\n2,1,1.0\n", "txId,class\n1,1\n2,2\n", "txId1,txId2\n");
        let ds = load_elliptic(&p).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.num_edges(), 0);
    }

    #[test]
    fn truncated_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_triplet(dir.path(), "1,1,0.0,1.0\n2,1,1.0\n", "txId,class\n1,1\n2,2\n", "txId1,txId2\n");
        match load_elliptic(&p) {
            Err(Error::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let p = write_triplet(dir.path(), "1,1,0.0\n2,1,abc\n", "txId,class\n1,1\n2,2\n", "txId1,txId2\n");
        assert!(matches!(load_elliptic(&p), Err(Error::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn error_cases() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_triplet(dir.path(), "1,1,0.0\n2,1,1.0\n", "txId,class\n1,3\n2,2\n", "txId1,txId2\n");
        assert!(matches!(load_elliptic(&p), Err(Error::UnknownClassToken { line: 2, .. })));

        let p = write_triplet(dir.path(), "1,1,0.0\n2,2,1.0\n", "txId,class\n1,1\n2,2\n", "txId1,txId2\n1,2\n");
        assert!(matches!(load_elliptic(&p), Err(Error::CrossTimestepEdge { src: 1, dst: 2, .. })));

        let p = write_triplet(dir.path(), "1,1,0.0\n1,1,1.0\n", "txId,class\n1,1\n", "txId1,txId2\n");
        assert!(matches!(load_elliptic(&p), Err(Error::DuplicateTxId(1))));

        let p = write_triplet(dir.path(), "1,1,0.0\n2,1,1.0\n", "txId,class\n1,1\n2,2\n", "txId1,txId2\n1,9\n");
        assert!(matches!(load_elliptic(&p), Err(Error::UnknownEndpoint(9))));
    }

    #[test]
    fn write_then_load_round_trips() {
        let spec = crate::ingest::SynthSpec {
            num_timesteps: 3,
            nodes_per_step: 20,
            feature_dim: 5,
            unknown_fraction: 0.3,
            ..crate::ingest::SynthSpec::default()
        };
        let ds = crate::ingest::generate_synthetic(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = write_elliptic(&ds, dir.path()).unwrap();
        assert_eq!(load_elliptic(&p).unwrap(), ds);
    }
}
