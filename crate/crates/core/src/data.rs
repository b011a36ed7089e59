//! Turning dataset examples into game inputs: fresh random partitions for
//! training batches, fixed partitions for evaluation.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::Frontend;
use crate::error::{Error, Result};
use crate::game::GameInput;
use crate::scalar::Scalar;
use crate::worldgen::dataset::derive_seed;
use crate::worldgen::{partition, Example, Visibility};

const EVAL_STREAM: u64 = 0xE7A1;

fn tokens(example: &Example) -> Vec<Vec<u32>> {
    example.captions.iter().map(|c| c.tokens.clone()).collect()
}

fn to_scalar<T: Scalar>(xs: Vec<f64>) -> Vec<T> {
    xs.into_iter().map(T::lit).collect()
}

/// Training examples with their candidate token lists.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub examples: Vec<Example>,
    captions: Vec<Vec<Vec<u32>>>,
    frontend: Arc<Frontend>,
    cut_range: (f64, f64),
}

impl TrainingSet {
    pub fn new(examples: Vec<Example>, frontend: Arc<Frontend>, cut_range: (f64, f64)) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Empty("training set"));
        }
        let captions = examples.iter().map(tokens).collect();
        Ok(TrainingSet {
            examples,
            captions,
            frontend,
            cut_range,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// `n` games on examples drawn with replacement, each with a fresh
    /// partition; which player sees which side is random.
    pub fn draw_batch<T: Scalar, R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<GameInput<'_, T>>> {
        (0..n)
            .map(|_| {
                let idx = rng.gen_range(0..self.examples.len());
                let ex = &self.examples[idx];
                let (a, b, _) = partition(ex, rng, self.cut_range);
                let (first, second) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
                Ok(GameInput {
                    features: [
                        to_scalar(self.frontend.features(&first)?),
                        to_scalar(self.frontend.features(&second)?),
                    ],
                    captions: &self.captions[idx],
                    correct: ex.correct_index,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct EvalItem<T> {
    pub id: u64,
    pub features: [Vec<T>; 2],
    pub captions: Vec<Vec<u32>>,
    pub correct: usize,
    pub visibility: Visibility,
}

impl<T: Scalar> EvalItem<T> {
    pub fn input(&self) -> GameInput<'_, T> {
        GameInput {
            features: self.features.clone(),
            captions: &self.captions,
            correct: self.correct,
        }
    }
}

/// Evaluation examples with partitions fixed by `seed`; features are
/// computed once.
#[derive(Debug, Clone)]
pub struct EvalSet<T> {
    pub seed: u64,
    pub items: Vec<EvalItem<T>>,
}

impl<T: Scalar> EvalSet<T> {
    pub fn new(examples: &[Example], frontend: &Frontend, cut_range: (f64, f64), seed: u64) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Empty("evaluation set"));
        }
        let items = examples
            .iter()
            .enumerate()
            .map(|(i, ex)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, EVAL_STREAM, i as u64));
                let (a, b, visibility) = partition(ex, &mut rng, cut_range);
                Ok(EvalItem {
                    id: ex.id,
                    features: [to_scalar(frontend.features(&a)?), to_scalar(frontend.features(&b)?)],
                    captions: tokens(ex),
                    correct: ex.correct_index,
                    visibility,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalSet { seed, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}
