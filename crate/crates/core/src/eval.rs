//! Binary classification metrics with Illicit as the positive class.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Label, TransactionGraph};
use crate::util::fmt_g6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

impl std::ops::AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

/// A ratio that may have had a zero denominator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metric {
    pub value: f64,
    /// The denominator was zero and `value` was set to 0.
    pub degenerate: bool,
}

fn ratio(num: f64, den: f64) -> Metric {
    if den == 0.0 {
        Metric { value: 0.0, degenerate: true }
    } else {
        Metric { value: num / den, degenerate: false }
    }
}

/// Counts over rows whose true label is known; `Unknown` truth is an error.
pub fn confusion(y_true: &[Label], y_pred: &[Label]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: y_pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if !t.is_known() || !p.is_known() {
            return Err(Error::Misalignment("confusion over unknown labels".into()));
        }
        match (t == Label::Illicit, p == Label::Illicit) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

pub fn precision(cm: &ConfusionMatrix) -> Metric {
    ratio(cm.tp as f64, (cm.tp + cm.fp) as f64)
}

pub fn recall(cm: &ConfusionMatrix) -> Metric {
    ratio(cm.tp as f64, (cm.tp + cm.fn_) as f64)
}

/// Harmonic mean of precision and recall.
pub fn f1(cm: &ConfusionMatrix) -> Metric {
    let p = precision(cm);
    let r = recall(cm);
    let m = ratio(2.0 * p.value * r.value, p.value + r.value);
    Metric {
        value: m.value,
        degenerate: m.degenerate || p.degenerate || r.degenerate,
    }
}

/// ROC AUC as the normalized Mann–Whitney U statistic (ties count one half).
pub fn auc(y_true: &[Label], scores: &[f64]) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::LengthMismatch {
            left: y_true.len(),
            right: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Misalignment("non-finite score".into()));
    }
    let mut pairs: Vec<(f64, bool)> = y_true
        .iter()
        .zip(scores)
        .filter(|(t, _)| t.is_known())
        .map(|(&t, &s)| (s, t == Label::Illicit))
        .collect();
    let n_pos = pairs.iter().filter(|p| p.1).count();
    let n_neg = pairs.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    // U = Σ over positives of (#negatives below + ½·#negatives tied), counted
    // in half-units so the sum is an exact integer
    let mut half_units: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            if pairs[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        half_units += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok(half_units as f64 / 2.0 / (n_pos as f64 * n_neg as f64))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimestepF1 {
    pub time_step: u32,
    pub f1: f64,
    pub degenerate: bool,
    pub confusion: ConfusionMatrix,
}

/// Illicit F1 per test graph, labeled nodes only, in time order.
/// `predictions[k]` is aligned with the nodes of `graphs[k]`.
pub fn per_timestep_f1(graphs: &[&TransactionGraph], predictions: &[Vec<Label>]) -> Result<Vec<TimestepF1>> {
    if graphs.len() != predictions.len() {
        return Err(Error::Misalignment(format!(
            "{} graphs with {} prediction vectors",
            graphs.len(),
            predictions.len()
        )));
    }
    let mut out = Vec::with_capacity(graphs.len());
    for (g, pred) in graphs.iter().zip(predictions) {
        if pred.len() != g.num_nodes() {
            return Err(Error::Misalignment(format!(
                "time step {}: {} predictions for {} nodes",
                g.time_step(),
                pred.len(),
                g.num_nodes()
            )));
        }
        let (t, p): (Vec<Label>, Vec<Label>) = g
            .labels()
            .iter()
            .zip(pred)
            .filter(|(t, _)| t.is_known())
            .map(|(&t, &p)| (t, p))
            .unzip();
        let cm = confusion(&t, &p)?;
        let m = f1(&cm);
        out.push(TimestepF1 {
            time_step: g.time_step(),
            f1: m.value,
            degenerate: m.degenerate,
            confusion: cm,
        });
    }
    out.sort_by_key(|e| e.time_step);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub per_timestep_f1: Vec<TimestepF1>,
    pub confusion: ConfusionMatrix,
    pub degenerate: bool,
}

impl EvalReport {
    /// Pooled metrics over all rows plus the per-timestep series.
    pub fn build(y_true: &[Label], y_pred: &[Label], scores: &[f64], per_timestep: Vec<TimestepF1>) -> Result<Self> {
        let cm = confusion(y_true, y_pred)?;
        let (p, r, f) = (precision(&cm), recall(&cm), f1(&cm));
        let auc = match auc(y_true, scores) {
            Ok(a) => a,
            Err(Error::SingleClass) => 0.5,
            Err(e) => return Err(e),
        };
        Ok(Self {
            precision: p.value,
            recall: r.value,
            f1: f.value,
            auc,
            per_timestep_f1: per_timestep,
            confusion: cm,
            degenerate: f.degenerate,
        })
    }

    /// `report.csv`: `metric,value` rows.
    pub fn write_report_csv(&self, path: &Path) -> Result<()> {
        let rows = [
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
            ("auc", self.auc),
        ];
        write_lines(path, "metric,value", rows.iter().map(|(k, v)| format!("{k},{}", fmt_g6(*v))))
    }

    /// `per_timestep_f1.csv`: `time_step,f1` rows.
    pub fn write_per_timestep_csv(&self, path: &Path) -> Result<()> {
        write_lines(
            path,
            "time_step,f1",
            self.per_timestep_f1.iter().map(|e| format!("{},{}", e.time_step, fmt_g6(e.f1))),
        )
    }

    /// `confusion.csv`: `tp,fp,fn,tn`.
    pub fn write_confusion_csv(&self, path: &Path) -> Result<()> {
        let c = self.confusion;
        write_lines(path, "tp,fp,fn,tn", std::iter::once(format!("{},{},{},{}", c.tp, c.fp, c.fn_, c.tn)))
    }
}

fn write_lines(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<()> {
    let err = |e| Error::io(format!("write {}", path.display()), e);
    let mut w = BufWriter::new(File::create(path).map_err(err)?);
    writeln!(w, "{header}").map_err(err)?;
    for r in rows {
        writeln!(w, "{r}").map_err(err)?;
    }
    w.flush().map_err(err)
}
