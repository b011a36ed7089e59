#![allow(dead_code)]

use emcomm::agent::{AgentConfig, AgentParams};
use emcomm::game::GameInput;
use emcomm::nn::Parameterized;
use rand::Rng;

/// Initialised agent with every parameter nudged, so that no path (zero
/// biases, zero sender output weights) is trivially inactive.
pub fn perturbed_agent<R: Rng>(id: usize, cfg: AgentConfig, scale: f64, rng: &mut R) -> AgentParams<f64> {
    let mut a = AgentParams::init(id, cfg, rng);
    for t in a.tensors_mut() {
        for v in t.values.iter_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    }
    a
}

pub fn random_captions<R: Rng>(n: usize, vocab: usize, rng: &mut R) -> Vec<Vec<u32>> {
    (0..n)
        .map(|_| {
            let len = rng.gen_range(3..=6);
            (0..len).map(|_| rng.gen_range(1..vocab as u32)).collect()
        })
        .collect()
}

pub fn random_features<R: Rng>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect()
}

pub fn random_input<'a, R: Rng>(captions: &'a [Vec<u32>], dim: usize, rng: &mut R) -> GameInput<'a, f64> {
    GameInput {
        features: [random_features(dim, rng), random_features(dim, rng)],
        captions,
        correct: rng.gen_range(0..captions.len()),
    }
}

pub fn small_config() -> AgentConfig {
    AgentConfig {
        hidden: 12,
        image_features: 16,
        message_bits: 8,
        value_hidden: 7,
        vocab_size: 20,
        ..AgentConfig::default()
    }
}

/// Evaluation items with random features, ten random captions and a random
/// correct index.
pub fn synthetic_eval(n: usize, dim: usize, vocab: usize, seed: u64) -> emcomm::data::EvalSet<f64> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let items = (0..n)
        .map(|i| {
            let captions = random_captions(10, vocab, &mut rng);
            emcomm::data::EvalItem {
                id: i as u64,
                features: [random_features(dim, &mut rng), random_features(dim, &mut rng)],
                correct: rng.gen_range(0..captions.len()),
                captions,
                visibility: emcomm::worldgen::Visibility::Both,
            }
        })
        .collect();
    emcomm::data::EvalSet { seed, items }
}
