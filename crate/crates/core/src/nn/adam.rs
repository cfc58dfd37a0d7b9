use super::Real;
use crate::error::{Error, Result};

pub const DEFAULT_LR: f64 = 1e-4;

/// Anything that exposes its trainable tensors as flat slices in a fixed order.
pub trait Params<T: Real> {
    fn tensors(&self) -> Vec<&[T]>;
    fn tensors_mut(&mut self) -> Vec<&mut [T]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

/// Adam with bias-corrected moments. One `m`/`v` pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T = f32> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(shapes: &[usize], lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn for_params<P: Params<T> + ?Sized>(params: &P, lr: f64) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
        Self::new(&shapes, lr)
    }

    /// One update over all tensors. `t` is incremented before bias correction.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::shape(format!(
                "adam over {} tensors with {} gradients and {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.m[i].len() {
                return Err(Error::shape(format!(
                    "adam tensor {i}: param {} grad {} moment {}",
                    p.len(),
                    g.len(),
                    self.m[i].len()
                )));
            }
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                let gj = g[j].f64();
                let mj = b1 * m[j].f64() + (1.0 - b1) * gj;
                let vj = b2 * v[j].f64() + (1.0 - b2) * gj * gj;
                m[j] = T::of(mj);
                v[j] = T::of(vj);
                let update = self.lr * (mj / c1) / ((vj / c2).sqrt() + self.eps);
                p[j] = T::of(p[j].f64() - update);
            }
        }
        Ok(())
    }
}

/// Applies one Adam step of `grads` to `params`.
pub fn adam_step<T: Real, P: Params<T>>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState<T>,
) -> Result<()> {
    let g = grads.tensors();
    let mut p = params.tensors_mut();
    state.step(&mut p, &g)
}
