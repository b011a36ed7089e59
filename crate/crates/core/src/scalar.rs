//! Floating point abstraction shared by the numeric core.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Real scalar the networks are generic over.
///
/// Implemented for `f32` and `f64`. Everything that needs exact
/// reproducibility (gradient checks, acceptance runs) uses `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal must convert")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("scalar must convert to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Sums a slice by recursive halving.
///
/// Sums of identical values over power-of-two lengths come out exact,
/// which keeps closed-form checks (e.g. `8 ln 2`) bit-identical.
pub fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        n => {
            let (lo, hi) = xs.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

/// Running mean that stays exact for constant sequences.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMean {
    mean: f64,
    count: u64,
}

impl RunningMean {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.mean += (x - self.mean) / self.count as f64;
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}
