use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::TransactionGraph;
use crate::nn::{relu, relu_backward, BatchNorm, BnCache, Linear, Matrix, Mode, Real};

/// Embedding width of every GIN layer.
pub const HIDDEN_DIM: usize = 128;
/// Number of stacked GIN layers (two-hop receptive field).
pub const NUM_LAYERS: usize = 2;

/// GIN neighbourhood aggregation: row `v` of the result is
/// `(1 + eps)·h_v + Σ_{u ∈ N(v)} h_u`.
///
/// Because the adjacency is symmetric the same operator is its own adjoint,
/// which the backward pass relies on.
pub fn aggregate<T: Real>(graph: &TransactionGraph, h: &Matrix<T>, eps: T) -> Result<Matrix<T>> {
    if h.rows() != graph.num_nodes() {
        return Err(Error::shape(format!(
            "{} embedding rows for {} nodes",
            h.rows(),
            graph.num_nodes()
        )));
    }
    let d = h.cols();
    let mut out = Matrix::zeros(h.rows(), d);
    if d == 0 {
        return Ok(out);
    }
    let self_w = T::one() + eps;
    out.data_mut()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(v, orow)| {
            for (o, &x) in orow.iter_mut().zip(h.row(v)) {
                *o = self_w * x;
            }
            for &u in graph.neighbors_unchecked(v) {
                for (o, &x) in orow.iter_mut().zip(h.row(u)) {
                    *o = *o + x;
                }
            }
        });
    Ok(out)
}

/// Linear → batch norm → ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpBlock<T = f32> {
    pub linear: Linear<T>,
    pub bn: BatchNorm<T>,
}

#[derive(Clone, Debug)]
pub struct BlockCache<T> {
    input: Matrix<T>,
    bn: BnCache<T>,
    output: Matrix<T>,
}

impl<T: Real> MlpBlock<T> {
    pub fn init<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Self {
            linear: Linear::init(fan_in, fan_out, rng),
            bn: BatchNorm::new(fan_out),
        }
    }

    pub fn forward(&self, x: Matrix<T>, mode: Mode) -> Result<(Matrix<T>, BlockCache<T>)> {
        let z = self.linear.forward(&x)?;
        let (y, bn) = self.bn.forward_pure(&z, mode)?;
        let output = relu(&y);
        Ok((output.clone(), BlockCache { input: x, bn, output }))
    }

    /// Returns the input gradient and accumulates parameter gradients into `grad`.
    fn backward(&self, cache: &BlockCache<T>, d_out: &Matrix<T>, grad: &mut MlpBlock<T>) -> Result<Matrix<T>> {
        let dy = relu_backward(&cache.output, d_out);
        let (dz, dgamma, dbeta) = self.bn.backward(&cache.bn, &dy);
        let (dx, dw, db) = self.linear.backward(&cache.input, &dz)?;
        grad.linear.weight.add_assign(&dw)?;
        add_into(&mut grad.linear.bias, &db);
        add_into(&mut grad.bn.gamma, &dgamma);
        add_into(&mut grad.bn.beta, &dbeta);
        Ok(dx)
    }
}

fn add_into<T: Real>(acc: &mut [T], v: &[T]) {
    for (a, &b) in acc.iter_mut().zip(v) {
        *a = *a + b;
    }
}

/// One GIN layer: aggregation followed by a two-block MLP.
#[derive(Clone, Debug, PartialEq)]
pub struct GinLayer<T = f32> {
    pub eps: T,
    pub learn_eps: bool,
    pub fc1: MlpBlock<T>,
    pub fc2: MlpBlock<T>,
}

#[derive(Clone, Debug)]
pub struct LayerCache<T> {
    h_in: Matrix<T>,
    fc1: BlockCache<T>,
    fc2: BlockCache<T>,
}

impl<T: Real> GinLayer<T> {
    pub fn init<R: Rng>(fan_in: usize, width: usize, eps: T, learn_eps: bool, rng: &mut R) -> Self {
        let fc1 = MlpBlock::init(fan_in, width, rng);
        let fc2 = MlpBlock::init(width, width, rng);
        Self { eps, learn_eps, fc1, fc2 }
    }

    pub fn in_dim(&self) -> usize {
        self.fc1.linear.fan_in()
    }

    pub fn out_dim(&self) -> usize {
        self.fc2.linear.fan_out()
    }

    pub fn forward(&self, graph: &TransactionGraph, h_in: &Matrix<T>, mode: Mode) -> Result<(Matrix<T>, LayerCache<T>)> {
        if h_in.cols() != self.in_dim() {
            return Err(Error::shape(format!(
                "GIN layer expects width {}, got {}",
                self.in_dim(),
                h_in.cols()
            )));
        }
        let agg = aggregate(graph, h_in, self.eps)?;
        let (a1, fc1) = self.fc1.forward(agg, mode)?;
        let (out, fc2) = self.fc2.forward(a1, mode)?;
        Ok((
            out,
            LayerCache {
                h_in: h_in.clone(),
                fc1,
                fc2,
            },
        ))
    }

    /// Backward pass; returns the gradient w.r.t. the layer input when `need_input` is set.
    fn backward(
        &self,
        graph: &TransactionGraph,
        cache: &LayerCache<T>,
        d_out: &Matrix<T>,
        grad: &mut GinLayer<T>,
        need_input: bool,
    ) -> Result<Option<Matrix<T>>> {
        let d_a1 = self.fc2.backward(&cache.fc2, d_out, &mut grad.fc2)?;
        let d_agg = self.fc1.backward(&cache.fc1, &d_a1, &mut grad.fc1)?;
        if self.learn_eps {
            let de: f64 = d_agg
                .data()
                .iter()
                .zip(cache.h_in.data())
                .map(|(&g, &h)| g.f64() * h.f64())
                .sum();
            grad.eps = grad.eps + T::of(de);
        }
        if need_input {
            Ok(Some(aggregate(graph, &d_agg, self.eps)?))
        } else {
            Ok(None)
        }
    }

    fn absorb(&mut self, cache: &LayerCache<T>) {
        self.fc1.bn.absorb(&cache.fc1.bn);
        self.fc2.bn.absorb(&cache.fc2.bn);
    }
}

/// Two stacked GIN layers.
#[derive(Clone, Debug, PartialEq)]
pub struct GinEncoder<T = f32> {
    pub layers: Vec<GinLayer<T>>,
}

#[derive(Clone, Debug)]
pub struct EncoderCache<T> {
    layers: Vec<LayerCache<T>>,
}

impl<T: Real> GinEncoder<T> {
    pub fn init<R: Rng>(in_dim: usize, width: usize, eps: T, learn_eps: bool, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(NUM_LAYERS);
        let mut fan_in = in_dim;
        for _ in 0..NUM_LAYERS {
            layers.push(GinLayer::init(fan_in, width, eps, learn_eps, rng));
            fan_in = width;
        }
        Self { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("encoder has layers").out_dim()
    }

    /// Encodes every node of `graph`. Running statistics are left untouched;
    /// see [`GinEncoder::absorb`].
    pub fn forward(&self, graph: &TransactionGraph, x: &Matrix<T>, mode: Mode) -> Result<(Matrix<T>, EncoderCache<T>)> {
        if x.cols() != self.in_dim() {
            return Err(Error::shape(format!(
                "encoder expects {} input features, got {}",
                self.in_dim(),
                x.cols()
            )));
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (out, cache) = layer.forward(graph, &h, mode)?;
            caches.push(cache);
            h = out;
        }
        Ok((h, EncoderCache { layers: caches }))
    }

    /// Backpropagates `d_out` and accumulates parameter gradients into `grad`.
    pub fn backward(
        &self,
        graph: &TransactionGraph,
        cache: &EncoderCache<T>,
        d_out: &Matrix<T>,
        grad: &mut GinEncoder<T>,
    ) -> Result<()> {
        let mut d = d_out.clone();
        for k in (0..self.layers.len()).rev() {
            let need_input = k > 0;
            let d_in = self.layers[k].backward(graph, &cache.layers[k], &d, &mut grad.layers[k], need_input)?;
            if let Some(d_in) = d_in {
                d = d_in;
            }
        }
        Ok(())
    }

    /// Folds the batch statistics from a train-mode pass into the running estimates.
    pub fn absorb(&mut self, cache: &EncoderCache<T>) {
        for (layer, c) in self.layers.iter_mut().zip(&cache.layers) {
            layer.absorb(c);
        }
    }

    /// Zeroed copy with the same shapes, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let zero_block = |b: &MlpBlock<T>| MlpBlock {
            linear: Linear::zeros(b.linear.fan_in(), b.linear.fan_out()),
            bn: BatchNorm {
                gamma: vec![T::zero(); b.bn.width()],
                beta: vec![T::zero(); b.bn.width()],
                ..b.bn.clone()
            },
        };
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| GinLayer {
                    eps: T::zero(),
                    learn_eps: l.learn_eps,
                    fc1: zero_block(&l.fc1),
                    fc2: zero_block(&l.fc2),
                })
                .collect(),
        }
    }

    pub(crate) fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for l in &self.layers {
            if l.learn_eps {
                out.push(std::slice::from_ref(&l.eps));
            }
            for b in [&l.fc1, &l.fc2] {
                out.push(b.linear.weight.data());
                out.push(&b.linear.bias[..]);
                out.push(&b.bn.gamma[..]);
                out.push(&b.bn.beta[..]);
            }
        }
        out
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            if l.learn_eps {
                out.push(std::slice::from_mut(&mut l.eps));
            }
            for b in [&mut l.fc1, &mut l.fc2] {
                out.push(b.linear.weight.data_mut());
                out.push(&mut b.linear.bias[..]);
                out.push(&mut b.bn.gamma[..]);
                out.push(&mut b.bn.beta[..]);
            }
        }
        out
    }
}
