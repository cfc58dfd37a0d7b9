use rand::seq::index;
use rand::Rng;

use super::{Params, Real};

/// Step size for central differences in single precision.
pub const H_F32: f64 = 1e-3;
/// Step size for central differences in double precision.
pub const H_F64: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub h: f64,
    /// Lower bound on the denominator of the relative error, so coordinates
    /// whose true gradient is zero are judged on absolute error.
    pub floor: f64,
}

impl GradCheckOptions {
    pub fn for_type<T: Real>() -> Self {
        if T::epsilon().f64() > 1e-10 {
            Self { h: H_F32, floor: 1e-3 }
        } else {
            Self { h: H_F64, floor: 1e-6 }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// Flat index of the coordinate with the largest relative error.
    pub worst: usize,
}

impl GradCheckReport {
    fn record(&mut self, idx: usize, analytic: f64, numeric: f64, floor: f64) {
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(floor);
        if rel > self.max_rel_error || self.checked == 0 {
            self.max_rel_error = self.max_rel_error.max(rel);
            self.worst = idx;
        }
        self.max_abs_error = self.max_abs_error.max(abs);
        self.checked += 1;
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        if other.max_rel_error > self.max_rel_error {
            self.max_rel_error = other.max_rel_error;
            self.worst = other.worst;
        }
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        self.checked += other.checked;
    }
}

/// Compares `analytic` against central differences of `f` at `point` over
/// the given coordinates (all coordinates when `coords` is `None`).
pub fn grad_check<T: Real>(
    mut f: impl FnMut(&[T]) -> f64,
    point: &[T],
    analytic: &[T],
    coords: Option<&[usize]>,
    opts: GradCheckOptions,
) -> GradCheckReport {
    assert_eq!(point.len(), analytic.len());
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..point.len()).collect();
            &all
        }
    };
    let mut x = point.to_vec();
    let mut report = GradCheckReport::default();
    for &i in coords {
        let x0 = x[i];
        x[i] = T::of(x0.f64() + opts.h);
        let up = f(&x);
        let real_up = x[i].f64() - x0.f64();
        x[i] = T::of(x0.f64() - opts.h);
        let down = f(&x);
        let real_down = x0.f64() - x[i].f64();
        x[i] = x0;
        // divide by the step actually taken after rounding to T
        let numeric = (up - down) / (real_up + real_down);
        report.record(i, analytic[i].f64(), numeric, opts.floor);
    }
    report
}

/// Gradient check over every tensor of a parameter set, sampling at most
/// `per_tensor` coordinates from each.
pub fn grad_check_params<T, P, R>(
    params: &P,
    analytic: &P,
    mut loss: impl FnMut(&P) -> f64,
    per_tensor: usize,
    opts: GradCheckOptions,
    rng: &mut R,
) -> Vec<GradCheckReport>
where
    T: Real,
    P: Params<T> + Clone,
    R: Rng,
{
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let grads: Vec<Vec<T>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();
    let mut reports = Vec::with_capacity(sizes.len());
    for (ti, &len) in sizes.iter().enumerate() {
        let coords: Vec<usize> = if len <= per_tensor {
            (0..len).collect()
        } else {
            index::sample(rng, len, per_tensor).into_vec()
        };
        let point = params.tensors()[ti].to_vec();
        let mut probe = params.clone();
        let report = grad_check(
            |x: &[T]| {
                probe.tensors_mut()[ti].copy_from_slice(x);
                loss(&probe)
            },
            &point,
            &grads[ti],
            Some(&coords),
            opts,
        );
        reports.push(report);
    }
    reports
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_exact() {
        let w = [0.3f64, -1.2, 2.5, 0.0];
        let g: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
        let r = grad_check(
            |x: &[f64]| x.iter().map(|v| v * v).sum(),
            &w,
            &g,
            None,
            GradCheckOptions::for_type::<f64>(),
        );
        assert!(r.max_rel_error < 1e-6, "{r:?}");
        assert_eq!(r.checked, 4);
    }

    #[test]
    fn constant_function() {
        let w = [1.0f32, 2.0];
        let r = grad_check(|_: &[f32]| 3.0, &w, &[0.0, 0.0], None, GradCheckOptions::for_type::<f32>());
        assert_eq!(r.max_abs_error, 0.0);
    }

    #[test]
    fn detects_wrong_gradient() {
        let w = [1.0f64];
        let r = grad_check(|x: &[f64]| x[0] * x[0], &w, &[3.0], None, GradCheckOptions::for_type::<f64>());
        assert!(r.max_rel_error > 0.3);
    }
}
