//! Central-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use crate::nn::tensor::Parameterized;
use crate::scalar::Scalar;

/// Gradients smaller than this are compared in absolute terms against it.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    /// Coordinates left out because the stencil crossed a kink.
    pub skipped: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }

    pub fn skipped(&self) -> usize {
        self.tensors.iter().map(|t| t.skipped).sum()
    }

    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error() <= tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the gradients already accumulated in `model` against central
/// differences of `loss` (five-point stencil, error `O(step⁴)`).
///
/// With `per_tensor = Some(k)`, at most `k` random coordinates per tensor are
/// probed, always including the coordinate of largest analytic magnitude.
pub fn gradient_check<T, M, F, R>(
    model: &mut M,
    loss: F,
    step: f64,
    per_tensor: Option<usize>,
    rng: &mut R,
) -> GradCheckReport
where
    T: Scalar,
    M: Parameterized<T>,
    F: Fn(&M) -> T,
    R: Rng + ?Sized,
{
    gradient_check_piecewise(model, |m: &M| (loss(m), Vec::new()), step, per_tensor, rng)
}

/// As [`gradient_check`] for a loss that is smooth only piecewise. `loss`
/// also returns the activation pattern (e.g. which ReLUs are on); a
/// coordinate whose stencil sees a different pattern is skipped and counted.
pub fn gradient_check_piecewise<T, M, F, R>(
    model: &mut M,
    loss: F,
    step: f64,
    per_tensor: Option<usize>,
    rng: &mut R,
) -> GradCheckReport
where
    T: Scalar,
    M: Parameterized<T>,
    F: Fn(&M) -> (T, Vec<bool>),
    R: Rng + ?Sized,
{
    let mut report = GradCheckReport::default();
    let n_tensors = model.tensors().len();
    for ti in 0..n_tensors {
        let (name, len, grads) = {
            let t = &model.tensors()[ti];
            (t.name.clone(), t.len(), t.grad.clone())
        };
        let indices: Vec<usize> = match per_tensor {
            Some(k) if k < len => {
                let largest = grads
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                let mut idx = sample(rng, len, k).into_vec();
                if !idx.contains(&largest) {
                    idx[0] = largest;
                }
                idx.sort_unstable();
                idx
            }
            _ => (0..len).collect(),
        };
        let mut check = TensorCheck {
            name,
            checked: 0,
            skipped: 0,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for idx in indices {
            let original = model.tensors()[ti].values[idx];
            let (_, pattern) = loss(model);
            let mut smooth = true;
            let mut at = |k: f64| {
                model.tensors_mut()[ti].values[idx] = original + T::lit(k * step);
                let (l, p) = loss(model);
                smooth &= p == pattern;
                l.as_f64()
            };
            let (p1, m1, p2, m2) = (at(1.0), at(-1.0), at(2.0), at(-2.0));
            model.tensors_mut()[ti].values[idx] = original;
            if !smooth {
                check.skipped += 1;
                continue;
            }
            check.checked += 1;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * step);
            let analytic = grads[idx].as_f64();
            let err = relative_error(analytic, numeric);
            if err > check.max_rel_error || !err.is_finite() {
                check.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
                check.worst_index = idx;
                check.analytic = analytic;
                check.numeric = numeric;
            }
        }
        report.tensors.push(check);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::ParamTensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_loss_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = ParamTensor::<f64>::glorot("w", &[4, 3], 3, 4, &mut rng);
        let report = gradient_check(&mut t, |_| 0.0, 1e-5, None, &mut rng);
        assert_eq!(report.max_rel_error(), 0.0);
    }

    #[test]
    fn quadratic_loss_gradient_is_theta() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut t = ParamTensor::<f64>::glorot("w", &[5, 5], 5, 5, &mut rng);
        t.grad = t.values.clone();
        let loss = |p: &ParamTensor<f64>| p.values.iter().map(|v| v * v).sum::<f64>() / 2.0;
        let report = gradient_check(&mut t, loss, 1e-5, None, &mut rng);
        assert!(report.max_rel_error() <= 1e-6, "{report:?}");
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut t = ParamTensor::<f64>::glorot("w", &[3], 1, 1, &mut rng);
        t.grad = t.values.iter().map(|v| 2.0 * v).collect();
        let loss = |p: &ParamTensor<f64>| p.values.iter().map(|v| v * v).sum::<f64>() / 2.0;
        let report = gradient_check(&mut t, loss, 1e-5, Some(2), &mut rng);
        assert!(report.max_rel_error() > 0.4);
        assert_eq!(report.tensors[0].checked, 2);
    }

    #[test]
    fn kinks_are_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut t = ParamTensor::<f64>::zeros("w", &[2]);
        t.values = vec![1e-4, 0.5];
        t.grad = vec![1.0, 1.0];
        let loss = |p: &ParamTensor<f64>| {
            let l = p.values.iter().map(|&v| v.max(0.0)).sum::<f64>();
            (l, p.values.iter().map(|&v| v > 0.0).collect())
        };
        let report = gradient_check_piecewise(&mut t, loss, 1e-3, None, &mut rng);
        assert_eq!(report.skipped(), 1);
        assert_eq!(report.checked(), 1);
        assert!(report.max_rel_error() < 1e-9);
    }
}
