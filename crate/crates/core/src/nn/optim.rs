use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tensor::{ParamTensor, Parameterized};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub decay_rho: f64,
    pub epsilon: f64,
    pub batch_size: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 1e-4,
            decay_rho: 0.99,
            epsilon: 1e-8,
            batch_size: 32,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be non-negative, got {}", self.learning_rate)));
        }
        if !(self.decay_rho > 0.0 && self.decay_rho < 1.0) {
            return Err(Error::Config(format!("decay_rho must lie in (0, 1), got {}", self.decay_rho)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

fn first_non_finite<T: Scalar>(t: &ParamTensor<T>) -> Option<usize> {
    t.grad.iter().position(|g| !g.is_finite())
}

/// One RMSProp step on a single tensor; the gradient is zeroed afterwards.
pub fn rmsprop_update<T: Scalar>(t: &mut ParamTensor<T>, cfg: &OptimizerConfig) -> Result<()> {
    if let Some(index) = first_non_finite(t) {
        return Err(Error::NonFiniteGradient {
            tensor: t.name.clone(),
            index,
        });
    }
    let rho = T::lit(cfg.decay_rho);
    let keep = T::one() - rho;
    let lr = T::lit(cfg.learning_rate);
    let eps = T::lit(cfg.epsilon);
    for ((v, g), acc) in t.values.iter_mut().zip(t.grad.iter_mut()).zip(t.opt_state.iter_mut()) {
        *acc = rho * *acc + keep * *g * *g;
        *v = *v - lr * *g / (*acc + eps).sqrt();
        *g = T::zero();
    }
    Ok(())
}

/// Updates every tensor of `model`, or none of them if any gradient is non-finite.
pub fn rmsprop_step<T: Scalar, M: Parameterized<T> + ?Sized>(model: &mut M, cfg: &OptimizerConfig) -> Result<()> {
    for t in model.tensors() {
        if let Some(index) = first_non_finite(t) {
            return Err(Error::NonFiniteGradient {
                tensor: t.name.clone(),
                index,
            });
        }
    }
    for t in model.tensors_mut() {
        rmsprop_update(t, cfg)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn cfg() -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: 1e-2,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn zero_gradient_only_decays_accumulator() {
        let mut t = ParamTensor::<f64>::from_values("t", &[2], vec![1.0, -2.0]).unwrap();
        t.opt_state = vec![4.0, 1.0];
        rmsprop_update(&mut t, &cfg()).unwrap();
        assert_eq!(t.values, vec![1.0, -2.0]);
        assert_eq!(t.opt_state, vec![0.99 * 4.0, 0.99]);
    }

    #[test]
    fn one_step_closed_form() {
        let c = cfg();
        let g = 0.3;
        let mut t = ParamTensor::<f64>::from_values("t", &[1], vec![0.5]).unwrap();
        t.grad = vec![g];
        rmsprop_update(&mut t, &c).unwrap();
        let expected = 0.5 - c.learning_rate * g / ((1.0 - c.decay_rho) * g * g + c.epsilon).sqrt();
        assert_relative_eq!(t.values[0], expected, epsilon = 1e-15);
        assert_eq!(t.grad, vec![0.0]);
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut ts = vec![
            ParamTensor::<f64>::from_values("a", &[1], vec![1.0]).unwrap(),
            ParamTensor::<f64>::from_values("b", &[2], vec![1.0, 1.0]).unwrap(),
        ];
        ts[0].grad = vec![1.0];
        ts[1].grad = vec![0.0, f64::NAN];
        let err = rmsprop_step(&mut ts, &cfg()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { ref tensor, index: 1 } if tensor == "b"));
        assert_eq!(ts[0].values, vec![1.0]);
    }

    #[test]
    fn validate_rejects_bad_rho() {
        let c = OptimizerConfig { decay_rho: 1.0, ..OptimizerConfig::default() };
        assert!(c.validate().is_err());
        assert!(OptimizerConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn update_descends_and_is_reproducible(
            grads in prop::collection::vec(-5.0f64..5.0, 1..20),
            acc in 0.0f64..3.0,
        ) {
            let n = grads.len();
            let mut a = ParamTensor::<f64>::zeros("a", &[n]);
            a.grad = grads.clone();
            a.opt_state = vec![acc; n];
            let mut b = a.clone();
            rmsprop_update(&mut a, &cfg()).unwrap();
            rmsprop_update(&mut b, &cfg()).unwrap();
            prop_assert_eq!(&a, &b);
            for (v, g) in a.values.iter().zip(&grads) {
                if *g != 0.0 {
                    prop_assert_eq!(v.signum(), -g.signum());
                }
            }
            prop_assert!(a.opt_state.iter().all(|&s| s >= 0.0));
        }
    }
}
