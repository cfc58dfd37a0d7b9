use rand::Rng;

use super::{Matrix, Real};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Batch-norm behaviour: batch statistics while training, running statistics at inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Fully connected layer `y = x·W + b`, with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T = f32> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Matrix::zeros(fan_in, fan_out),
            bias: vec![T::zero(); fan_out],
        }
    }

    /// Weights uniform in ±1/√fan_in, zero bias.
    pub fn init<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| T::of(rng.random_range(-bound..bound)))
            .collect();
        Self {
            weight: Matrix::from_vec(fan_in, fan_out, data).expect("sized"),
            bias: vec![T::zero(); fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        linear_forward(x, &self.weight, &self.bias)
    }

    /// Returns `(dx, dW, db)` for upstream gradient `dy`.
    pub fn backward(
        &self,
        x: &Matrix<T>,
        dy: &Matrix<T>,
    ) -> Result<(Matrix<T>, Matrix<T>, Vec<T>)> {
        let dw = x.t_matmul(dy)?;
        let db = dy.col_sums().into_iter().map(T::of).collect();
        let dx = dy.matmul_t(&self.weight)?;
        Ok((dx, dw, db))
    }
}

pub fn linear_forward<T: Real>(x: &Matrix<T>, weight: &Matrix<T>, bias: &[T]) -> Result<Matrix<T>> {
    if bias.len() != weight.cols() {
        return Err(Error::shape(format!(
            "bias of length {} for {} outputs",
            bias.len(),
            weight.cols()
        )));
    }
    let mut y = x.matmul(weight)?;
    for r in 0..y.rows() {
        for (v, &b) in y.row_mut(r).iter_mut().zip(bias) {
            *v = *v + b;
        }
    }
    Ok(y)
}

/// Per-column batch normalization with learnable affine parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: f64,
    pub momentum: f64,
}

/// Values saved by a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BnCache<T> {
    pub x_hat: Matrix<T>,
    pub inv_std: Vec<f64>,
    pub mode: Mode,
    /// Biased batch mean and variance (train mode only).
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: vec![T::one(); width],
            beta: vec![T::zero(); width],
            running_mean: vec![T::zero(); width],
            running_var: vec![T::one(); width],
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    /// Normalizes `x` column-wise and, in train mode, folds the batch
    /// statistics into the running estimates.
    pub fn forward(&mut self, x: &Matrix<T>, mode: Mode) -> Result<(Matrix<T>, BnCache<T>)> {
        let (y, cache) = self.forward_pure(x, mode)?;
        self.absorb(&cache);
        Ok((y, cache))
    }

    /// Forward pass without touching the running statistics.
    pub fn forward_pure(&self, x: &Matrix<T>, mode: Mode) -> Result<(Matrix<T>, BnCache<T>)> {
        let (y, x_hat, inv_std, batch_stats) = batchnorm_forward(
            x,
            &self.gamma,
            &self.beta,
            mode,
            self.eps,
            &self.running_mean,
            &self.running_var,
        )?;
        Ok((
            y,
            BnCache {
                x_hat,
                inv_std,
                mode,
                batch_stats,
            },
        ))
    }

    /// Exponential moving average update from a train-mode cache; running
    /// variance uses the unbiased batch estimate.
    pub fn absorb(&mut self, cache: &BnCache<T>) {
        let Some((mean, var)) = &cache.batch_stats else {
            return;
        };
        let n = cache.x_hat.rows() as f64;
        let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        let m = self.momentum;
        for c in 0..self.width() {
            let rm = self.running_mean[c].f64();
            let rv = self.running_var[c].f64();
            self.running_mean[c] = T::of((1.0 - m) * rm + m * mean[c]);
            self.running_var[c] = T::of((1.0 - m) * rv + m * var[c] * unbias);
        }
    }

    /// Returns `(dx, dgamma, dbeta)`.
    pub fn backward(&self, cache: &BnCache<T>, dy: &Matrix<T>) -> (Matrix<T>, Vec<T>, Vec<T>) {
        let (n, d) = dy.shape();
        let mut dgamma = vec![0.0f64; d];
        let mut dbeta = vec![0.0f64; d];
        for r in 0..n {
            for c in 0..d {
                let g = dy.get(r, c).f64();
                dgamma[c] += g * cache.x_hat.get(r, c).f64();
                dbeta[c] += g;
            }
        }
        let mut dx = Matrix::zeros(n, d);
        match cache.mode {
            Mode::Eval => {
                for r in 0..n {
                    for c in 0..d {
                        let v = dy.get(r, c).f64() * self.gamma[c].f64() * cache.inv_std[c];
                        dx.set(r, c, T::of(v));
                    }
                }
            }
            Mode::Train => {
                // dx = γ/(nσ) · (n·dy − Σdy − x̂·Σ(dy·x̂))
                let nf = n as f64;
                for c in 0..d {
                    let scale = self.gamma[c].f64() * cache.inv_std[c] / nf;
                    for r in 0..n {
                        let g = dy.get(r, c).f64();
                        let xh = cache.x_hat.get(r, c).f64();
                        dx.set(r, c, T::of(scale * (nf * g - dbeta[c] - xh * dgamma[c])));
                    }
                }
            }
        }
        (
            dx,
            dgamma.into_iter().map(T::of).collect(),
            dbeta.into_iter().map(T::of).collect(),
        )
    }
}

/// Raw batch-norm transform.
///
/// Returns `(y, x_hat, inv_std, batch_stats)`; `batch_stats` holds the
/// biased batch mean and variance in train mode and is `None` in eval mode.
#[allow(clippy::type_complexity)]
pub fn batchnorm_forward<T: Real>(
    x: &Matrix<T>,
    gamma: &[T],
    beta: &[T],
    mode: Mode,
    eps: f64,
    running_mean: &[T],
    running_var: &[T],
) -> Result<(Matrix<T>, Matrix<T>, Vec<f64>, Option<(Vec<f64>, Vec<f64>)>)> {
    let (n, d) = x.shape();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if gamma.len() != d || beta.len() != d || running_mean.len() != d || running_var.len() != d {
        return Err(Error::shape(format!("batch norm of width {} on {d} columns", gamma.len())));
    }
    let (mean, var, stats) = match mode {
        Mode::Train => {
            let mean = x.col_means();
            let mut var = vec![0.0f64; d];
            for r in 0..n {
                for (c, v) in var.iter_mut().enumerate() {
                    let dev = x.get(r, c).f64() - mean[c];
                    *v += dev * dev;
                }
            }
            var.iter_mut().for_each(|v| *v /= n as f64);
            (mean.clone(), var.clone(), Some((mean, var)))
        }
        Mode::Eval => (
            running_mean.iter().map(|v| v.f64()).collect(),
            running_var.iter().map(|v| v.f64()).collect::<Vec<_>>(),
            None,
        ),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut x_hat = Matrix::zeros(n, d);
    let mut y = Matrix::zeros(n, d);
    for r in 0..n {
        for c in 0..d {
            let xh = (x.get(r, c).f64() - mean[c]) * inv_std[c];
            x_hat.set(r, c, T::of(xh));
            y.set(r, c, T::of(gamma[c].f64() * xh + beta[c].f64()));
        }
    }
    Ok((y, x_hat, inv_std, stats))
}

pub fn relu<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of ReLU given its output `y`.
pub fn relu_backward<T: Real>(y: &Matrix<T>, dy: &Matrix<T>) -> Matrix<T> {
    let mut dx = dy.clone();
    for (g, &o) in dx.data_mut().iter_mut().zip(y.data()) {
        if o <= T::zero() {
            *g = T::zero();
        }
    }
    dx
}

#[inline]
pub fn sigmoid_scalar<T: Real>(x: T) -> T {
    let v = x.f64();
    let s = if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    };
    // keep strictly inside (0, 1) after rounding to T
    let lo = T::min_positive_value();
    let hi = T::one() - T::epsilon() / T::of(2.0);
    T::of(s).max(lo).min(hi)
}

pub fn sigmoid<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    x.map(sigmoid_scalar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_examples() {
        let x = Matrix::from_rows(&[vec![1.0f32, 2.0], vec![-3.0, 0.5]]).unwrap();
        let y = linear_forward(&x, &Matrix::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(y, x);

        let x = Matrix::from_rows(&[vec![1.0f32, 2.0]]).unwrap();
        let w = Matrix::from_rows(&[vec![1.0f32], vec![1.0]]).unwrap();
        let y = linear_forward(&x, &w, &[1.0]).unwrap();
        assert_eq!(y.data(), &[4.0]);

        let x = Matrix::<f32>::zeros(3, 4);
        let w = Matrix::from_vec(4, 1, vec![0.3, -2.0, 7.0, 1.0]).unwrap();
        let y = linear_forward(&x, &w, &[3.0]).unwrap();
        assert_eq!(y.data(), &[3.0, 3.0, 3.0]);

        assert!(linear_forward(&Matrix::<f32>::zeros(1, 3), &w, &[0.0]).is_err());
    }

    #[test]
    fn batchnorm_constant_column_is_zero() {
        let mut bn = BatchNorm::<f32>::new(1);
        let x = Matrix::from_vec(3, 1, vec![1.0, 1.0, 1.0]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn batchnorm_two_point_column() {
        let mut bn = BatchNorm::<f64>::new(1);
        let x = Matrix::from_vec(2, 1, vec![0.0, 2.0]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        // mean 1, var 1: ±1/√(1+1e-5)
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert_abs_diff_eq!(y.data()[0], -expect, epsilon = 1e-12);
        assert_abs_diff_eq!(y.data()[1], expect, epsilon = 1e-12);
        assert_abs_diff_eq!(expect, 0.999995, epsilon = 1e-6);
        // running stats: 0.9·0 + 0.1·1, 0.9·1 + 0.1·(1·2/1)
        assert_abs_diff_eq!(bn.running_mean[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(bn.running_var[0], 1.1, epsilon = 1e-12);
    }

    #[test]
    fn batchnorm_affine() {
        let x = Matrix::from_vec(4, 1, vec![0.5f64, -1.0, 3.0, 2.0]).unwrap();
        let (base, _) = BatchNorm::<f64>::new(1).forward(&x, Mode::Train).unwrap();
        let mut bn = BatchNorm::<f64>::new(1);
        bn.gamma = vec![2.0];
        bn.beta = vec![1.0];
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        for (a, b) in y.data().iter().zip(base.data()) {
            assert_abs_diff_eq!(*a, 2.0 * b + 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn batchnorm_eval_uses_running_stats() {
        let mut bn = BatchNorm::<f64>::new(1);
        bn.running_mean = vec![2.0];
        bn.running_var = vec![4.0];
        let x = Matrix::from_vec(1, 1, vec![6.0]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Eval).unwrap();
        assert_abs_diff_eq!(y.data()[0], 4.0 / (4.0f64 + 1e-5).sqrt(), epsilon = 1e-12);
        assert_eq!(bn.running_mean, vec![2.0]);
    }

    #[test]
    fn batchnorm_empty_batch() {
        let mut bn = BatchNorm::<f32>::new(2);
        assert!(matches!(
            bn.forward(&Matrix::zeros(0, 2), Mode::Train),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn batchnorm_train_output_is_standardized() {
        let data: Vec<f32> = (0..32 * 3).map(|i| ((i * 37 % 11) as f32) * 0.7 - (i % 3) as f32).collect();
        let x = Matrix::from_vec(32, 3, data).unwrap();
        let (y, _) = BatchNorm::<f32>::new(3).forward(&x, Mode::Train).unwrap();
        let means = y.col_means();
        for (c, &mean) in means.iter().enumerate() {
            let var: f64 = (0..32).map(|r| (y.get(r, c) as f64 - mean).powi(2)).sum::<f64>() / 32.0;
            assert!(mean.abs() < 1e-5);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn activations() {
        let x = Matrix::from_vec(1, 3, vec![-1.0f32, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        assert_eq!(sigmoid_scalar(0.0f32), 0.5);
        assert_abs_diff_eq!(sigmoid_scalar(1.0f64), 0.731059, epsilon = 1e-6);
        let s = sigmoid(&Matrix::from_vec(1, 2, vec![-30.0f64, 30.0]).unwrap());
        assert!(s.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }
}
