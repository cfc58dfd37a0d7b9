use rand::seq::SliceRandom;
use rand::Rng;

use super::encoder::{EncoderCache, GinEncoder};
use crate::error::{Error, Result};
use crate::graph::TransactionGraph;
use crate::nn::{dot, sigmoid_scalar, Matrix, Mode, Params, Real};

/// Scores are clamped into `[SCORE_CLAMP, 1 - SCORE_CLAMP]` before taking logs.
pub const SCORE_CLAMP: f64 = 1e-7;

/// Uniformly random permutation of `0..n`.
pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Negative-sample features: the rows of `x` under a uniform random
/// permutation. Adjacency is not involved.
pub fn corrupt_features<T: Real, R: Rng + ?Sized>(x: &Matrix<T>, rng: &mut R) -> Matrix<T> {
    x.gather_rows(&random_permutation(x.rows(), rng))
}

pub fn corrupt<R: Rng + ?Sized>(graph: &TransactionGraph, rng: &mut R) -> Matrix<f32> {
    corrupt_features(graph.features(), rng)
}

/// Graph summary: sigmoid of the mean node embedding.
pub fn readout<T: Real>(h: &Matrix<T>) -> Result<Vec<T>> {
    if h.rows() == 0 {
        return Err(Error::EmptyGraph);
    }
    Ok(h.col_means().into_iter().map(|m| sigmoid_scalar(T::of(m))).collect())
}

/// Bilinear discriminator `σ(hᵀ·w·s)`.
pub fn discriminate<T: Real>(h: &[T], summary: &[T], w: &Matrix<T>) -> Result<T> {
    if w.rows() != h.len() || w.cols() != summary.len() {
        return Err(Error::shape(format!(
            "discriminator {:?} against h of {} and summary of {}",
            w.shape(),
            h.len(),
            summary.len()
        )));
    }
    let ws = w.matvec(summary)?;
    Ok(sigmoid_scalar(dot(h, &ws)))
}

/// Binary cross-entropy over positive and negative scores, as a loss to minimize:
/// `−(Σ ln p + Σ ln(1 − q)) / (N + M)`.
pub fn dgi_loss(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::EmptyScores);
    }
    let clamp = |s: f64| s.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);
    let sum: f64 = pos.iter().map(|&p| clamp(p).ln()).sum::<f64>()
        + neg.iter().map(|&q| (1.0 - clamp(q)).ln()).sum::<f64>();
    Ok(-sum / (pos.len() + neg.len()) as f64)
}

/// All trainables of the DGI model: the encoder plus the bilinear
/// discriminator weight.
#[derive(Clone, Debug, PartialEq)]
pub struct DgiParams<T = f32> {
    pub encoder: GinEncoder<T>,
    pub disc: Matrix<T>,
}

impl<T: Real> Params<T> for DgiParams<T> {
    fn tensors(&self) -> Vec<&[T]> {
        let mut t = self.encoder.tensors();
        t.push(self.disc.data());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut t = self.encoder.tensors_mut();
        t.push(self.disc.data_mut());
        t
    }
}

/// Result of one forward/backward pass of the DGI objective.
#[derive(Clone, Debug)]
pub struct DgiStep<T> {
    pub loss: f64,
    pub pos_scores: Vec<f64>,
    pub neg_scores: Vec<f64>,
    pub grads: DgiParams<T>,
    real_cache: EncoderCache<T>,
    corrupt_cache: EncoderCache<T>,
}

impl<T: Real> DgiParams<T> {
    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self.encoder.zeros_like(),
            disc: Matrix::zeros(self.disc.rows(), self.disc.cols()),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.disc.rows()
    }

    /// Forward pass of the objective only.
    pub fn loss(&self, graph: &TransactionGraph, x: &Matrix<T>, x_corrupt: &Matrix<T>) -> Result<f64> {
        let (h, _) = self.encoder.forward(graph, x, Mode::Train)?;
        let (h_neg, _) = self.encoder.forward(graph, x_corrupt, Mode::Train)?;
        let (pos, neg, _, _) = self.scores(&h, &h_neg)?;
        dgi_loss(&pos, &neg)
    }

    /// Scores of real and corrupted embeddings against the real summary.
    /// Also returns `w·s` and `s`.
    #[allow(clippy::type_complexity)]
    fn scores(&self, h: &Matrix<T>, h_neg: &Matrix<T>) -> Result<(Vec<f64>, Vec<f64>, Vec<T>, Vec<T>)> {
        let s = readout(h)?;
        let ws = self.disc.matvec(&s)?;
        let score = |m: &Matrix<T>| -> Vec<f64> {
            (0..m.rows()).map(|i| sigmoid_scalar(dot(m.row(i), &ws)).f64()).collect()
        };
        Ok((score(h), score(h_neg), ws, s))
    }

    /// Loss and gradients w.r.t. every trainable (train-mode batch norm).
    /// Running statistics are not updated; call [`DgiParams::absorb`] with
    /// the returned step.
    pub fn loss_and_grad(&self, graph: &TransactionGraph, x: &Matrix<T>, x_corrupt: &Matrix<T>) -> Result<DgiStep<T>> {
        let (h, real_cache) = self.encoder.forward(graph, x, Mode::Train)?;
        let (h_neg, corrupt_cache) = self.encoder.forward(graph, x_corrupt, Mode::Train)?;
        let (pos, neg, ws, s) = self.scores(&h, &h_neg)?;
        let loss = dgi_loss(&pos, &neg)?;

        // dL/dlogit, zero where the clamp is active
        let total = (pos.len() + neg.len()) as f64;
        let active = |p: f64| (SCORE_CLAMP..=1.0 - SCORE_CLAMP).contains(&p);
        let d_pos: Vec<T> = pos
            .iter()
            .map(|&p| T::of(if active(p) { (p - 1.0) / total } else { 0.0 }))
            .collect();
        let d_neg: Vec<T> = neg
            .iter()
            .map(|&q| T::of(if active(q) { q / total } else { 0.0 }))
            .collect();

        let mut dh = outer(&d_pos, &ws);
        let dh_neg = outer(&d_neg, &ws);

        let mut d_ws = h.t_matvec(&d_pos)?;
        for (a, b) in d_ws.iter_mut().zip(h_neg.t_matvec(&d_neg)?) {
            *a = *a + b;
        }
        let mut grads = self.zeros_like();
        grads.disc = outer(&d_ws, &s);
        // summary path: s = σ(mean h)
        let d_s = self.disc.t_matvec(&d_ws)?;
        let n = h.rows() as f64;
        let d_mean: Vec<T> = d_s
            .iter()
            .zip(&s)
            .map(|(&g, &sv)| T::of(g.f64() * sv.f64() * (1.0 - sv.f64()) / n))
            .collect();
        for i in 0..dh.rows() {
            for (v, &g) in dh.row_mut(i).iter_mut().zip(&d_mean) {
                *v = *v + g;
            }
        }

        self.encoder.backward(graph, &real_cache, &dh, &mut grads.encoder)?;
        self.encoder.backward(graph, &corrupt_cache, &dh_neg, &mut grads.encoder)?;
        Ok(DgiStep {
            loss,
            pos_scores: pos,
            neg_scores: neg,
            grads,
            real_cache,
            corrupt_cache,
        })
    }

    /// Folds both train-mode passes of `step` into the running statistics,
    /// real pass first.
    pub fn absorb(&mut self, step: &DgiStep<T>) {
        self.encoder.absorb(&step.real_cache);
        self.encoder.absorb(&step.corrupt_cache);
    }
}

fn outer<T: Real>(col: &[T], row: &[T]) -> Matrix<T> {
    let mut m = Matrix::zeros(col.len(), row.len());
    for (i, &c) in col.iter().enumerate() {
        for (v, &r) in m.row_mut(i).iter_mut().zip(row) {
            *v = c * r;
        }
    }
    m
}
