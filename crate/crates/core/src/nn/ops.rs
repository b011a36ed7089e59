//! Dense forward/backward kernels.

use crate::error::{Error, Result};
use crate::nn::tensor::ParamTensor;
use crate::scalar::{pairwise_sum, Scalar};

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `out[i] = Σ_j w[i, j] x[j]` for a row-major `rows × x.len()` matrix.
#[inline]
pub fn matvec<T: Scalar>(w: &[T], x: &[T], out: &mut [T]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o = dot(row, x);
    }
}

/// `out[j] += Σ_i w[i, j] g[i]`.
#[inline]
pub fn matvec_t_acc<T: Scalar>(w: &[T], g: &[T], out: &mut [T]) {
    let cols = out.len();
    for (&gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if gi == T::zero() {
            continue;
        }
        for (o, &wij) in out.iter_mut().zip(row) {
            *o = *o + gi * wij;
        }
    }
}

/// `dw[i, j] += g[i] x[j]`.
#[inline]
pub fn outer_acc<T: Scalar>(g: &[T], x: &[T], dw: &mut [T]) {
    let cols = x.len();
    for (&gi, row) in g.iter().zip(dw.chunks_exact_mut(cols)) {
        if gi == T::zero() {
            continue;
        }
        for (d, &xj) in row.iter_mut().zip(x) {
            *d = *d + gi * xj;
        }
    }
}

#[inline]
pub fn add_assign<T: Scalar>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a = *a + b;
    }
}

fn check_affine<T: Scalar>(x: &[T], w: &ParamTensor<T>, b: &ParamTensor<T>) -> Result<()> {
    if w.shape.len() != 2 || w.shape[1] != x.len() || b.len() != w.shape[0] {
        return Err(Error::Shape {
            op: "affine",
            expected: vec![b.len(), x.len()],
            got: w.shape.clone(),
        });
    }
    Ok(())
}

/// `W·x + b`.
pub fn affine_forward<T: Scalar>(x: &[T], w: &ParamTensor<T>, b: &ParamTensor<T>) -> Result<Vec<T>> {
    check_affine(x, w, b)?;
    let mut out = vec![T::zero(); b.len()];
    matvec(&w.values, x, &mut out);
    add_assign(&mut out, &b.values);
    Ok(out)
}

/// Accumulates `dW += g xᵀ`, `db += g` and returns `dx = Wᵀ g`.
pub fn affine_backward<T: Scalar>(
    x: &[T],
    w: &mut ParamTensor<T>,
    b: &mut ParamTensor<T>,
    g: &[T],
) -> Result<Vec<T>> {
    check_affine(x, w, b)?;
    if g.len() != b.len() {
        return Err(Error::Shape {
            op: "affine_backward",
            expected: vec![b.len()],
            got: vec![g.len()],
        });
    }
    outer_acc(g, x, &mut w.grad);
    add_assign(&mut b.grad, g);
    let mut dx = vec![T::zero(); x.len()];
    matvec_t_acc(&w.values, g, &mut dx);
    Ok(dx)
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Numerically stable softmax (max subtraction).
pub fn softmax<T: Scalar>(scores: &[T]) -> Vec<T> {
    let max = scores
        .iter()
        .copied()
        .fold(T::neg_infinity(), |m, s| if s > m { s } else { m });
    let exps: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let z: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Backward through softmax: `dscores = p ⊙ (dp − ⟨dp, p⟩)`.
pub fn softmax_backward<T: Scalar>(p: &[T], dp: &[T]) -> Vec<T> {
    let inner = dot(p, dp);
    p.iter().zip(dp).map(|(&pi, &di)| pi * (di - inner)).collect()
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[inline]
fn bit_entropy<T: Scalar>(p: T) -> T {
    let term = |q: T| if q > T::zero() { -q * q.ln() } else { T::zero() };
    term(p) + term(T::one() - p)
}

/// Entropy in nats of a vector of independent Bernoulli bits.
pub fn bernoulli_entropy<T: Scalar>(p: &[T]) -> Result<T> {
    if let Some(bad) = p.iter().find(|&&q| !(q >= T::zero() && q <= T::one())) {
        return Err(Error::Domain(format!("bernoulli probability {bad} outside [0, 1]")));
    }
    let terms: Vec<T> = p.iter().map(|&q| bit_entropy(q)).collect();
    Ok(pairwise_sum(&terms))
}

/// `dH/dp` for one bit; zero at the boundary.
#[inline]
pub fn bit_entropy_grad<T: Scalar>(p: T) -> T {
    if p > T::zero() && p < T::one() {
        ((T::one() - p) / p).ln()
    } else {
        T::zero()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn tensor(shape: &[usize], v: Vec<f64>) -> ParamTensor<f64> {
        ParamTensor::from_values("t", shape, v).unwrap()
    }

    #[test]
    fn affine_identity_and_zero_input() {
        let w = tensor(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let b = tensor(&[2], vec![0.0, 0.0]);
        assert_eq!(affine_forward(&[3.0, -1.0], &w, &b).unwrap(), vec![3.0, -1.0]);
        let b = tensor(&[2], vec![0.5, -2.0]);
        assert_eq!(affine_forward(&[0.0, 0.0], &w, &b).unwrap(), vec![0.5, -2.0]);
    }

    #[test]
    fn affine_hand_computed() {
        let w = tensor(&[2, 2], vec![1.0, 2.0, 0.0, 1.0]);
        let b = tensor(&[2], vec![1.0, 1.0]);
        assert_eq!(affine_forward(&[1.0, 1.0], &w, &b).unwrap(), vec![4.0, 2.0]);
    }

    #[test]
    fn affine_backward_accumulates() {
        let mut w = tensor(&[2, 2], vec![1.0, 2.0, 0.0, 1.0]);
        let mut b = tensor(&[2], vec![1.0, 1.0]);
        let dx = affine_backward(&[3.0, 5.0], &mut w, &mut b, &[1.0, -1.0]).unwrap();
        assert_eq!(w.grad, vec![3.0, 5.0, -3.0, -5.0]);
        assert_eq!(b.grad, vec![1.0, -1.0]);
        assert_eq!(dx, vec![1.0, 1.0]);
    }

    #[test]
    fn affine_shape_mismatch() {
        let w = tensor(&[2, 3], vec![0.0; 6]);
        let b = tensor(&[2], vec![0.0; 2]);
        assert!(matches!(affine_forward(&[1.0, 2.0], &w, &b), Err(Error::Shape { .. })));
    }

    #[test]
    fn softmax_closed_forms() {
        let p = softmax(&[0.0, 3f64.ln()]);
        assert_relative_eq!(p[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.75, epsilon = 1e-15);
        assert_eq!(softmax(&[2.0; 4]), vec![0.25; 4]);
    }

    #[test]
    fn argmax_tie_goes_low() {
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
        assert_eq!(argmax(&[0.0; 10]), 0);
    }

    #[test]
    fn entropy_closed_forms() {
        assert_eq!(bernoulli_entropy(&[0.5f64; 8]).unwrap(), 8.0 * LN_2);
        assert_eq!(bernoulli_entropy(&[0.0f64, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap(), 0.0);
        let mut p = [1.0f64; 8];
        p[0] = 0.5;
        assert_relative_eq!(bernoulli_entropy(&p).unwrap(), LN_2, epsilon = 1e-15);
        assert!(matches!(bernoulli_entropy(&[1.5f64]), Err(Error::Domain(_))));
        assert!(bernoulli_entropy(&[f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            scores in prop::collection::vec(-30.0f64..30.0, 1..16),
            shift in -50.0f64..50.0,
        ) {
            let p = softmax(&scores);
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            prop_assert!(p.iter().all(|&x| x > 0.0 && x <= 1.0));
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn entropy_bounded_and_peaks_at_half(p in prop::collection::vec(0.0f64..=1.0, 8)) {
            let h = bernoulli_entropy(&p).unwrap();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= 8.0 * LN_2 + 1e-12);
            let peak = bernoulli_entropy(&[0.5f64; 8]).unwrap();
            prop_assert!(h <= peak);
        }
    }
}
