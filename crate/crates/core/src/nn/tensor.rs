use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A trainable tensor with its gradient buffer and RMSProp accumulator.
///
/// Storage is row-major; a matrix of shape `[rows, cols]` keeps row `i` at
/// `values[i * cols..(i + 1) * cols]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
    pub grad: Vec<T>,
    pub opt_state: Vec<T>,
}

impl<T: Scalar> ParamTensor<T> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        ParamTensor {
            name: name.into(),
            shape: shape.to_vec(),
            values: vec![T::zero(); n],
            grad: vec![T::zero(); n],
            opt_state: vec![T::zero(); n],
        }
    }

    pub fn from_values(name: impl Into<String>, shape: &[usize], values: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(Error::Shape {
                op: "ParamTensor::from_values",
                expected: shape.to_vec(),
                got: vec![values.len()],
            });
        }
        let mut t = Self::zeros(name, shape);
        t.values = values;
        Ok(t)
    }

    /// Glorot-uniform initialisation in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng + ?Sized>(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let mut t = Self::zeros(name, shape);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in t.values.iter_mut() {
            *v = T::lit(rng.gen_range(-limit..limit));
        }
        t
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1..].iter().product()
        } else {
            1
        }
    }

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn scale_grad(&mut self, factor: T) {
        self.grad.iter_mut().for_each(|g| *g = *g * factor);
    }
}

/// Anything that owns a fixed, ordered list of trainable tensors.
pub trait Parameterized<T: Scalar> {
    fn tensors(&self) -> Vec<&ParamTensor<T>>;
    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor<T>>;

    fn zero_grad(&mut self) {
        for t in self.tensors_mut() {
            t.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl<T: Scalar> Parameterized<T> for ParamTensor<T> {
    fn tensors(&self) -> Vec<&ParamTensor<T>> {
        vec![self]
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        vec![self]
    }
}

impl<T: Scalar> Parameterized<T> for Vec<ParamTensor<T>> {
    fn tensors(&self) -> Vec<&ParamTensor<T>> {
        self.iter().collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        self.iter_mut().collect()
    }
}
