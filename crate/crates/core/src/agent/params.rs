use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{GruCellParams, ParamTensor, Parameterized};
use crate::scalar::Scalar;

/// Which vector weights the candidate embeddings when the sender summarises
/// its current guess.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SenderWeights {
    /// The normalised belief `p(y = c | h)`.
    #[default]
    Belief,
    /// The raw scores `α_c`.
    RawScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub hidden: usize,
    pub image_features: usize,
    pub message_bits: usize,
    pub value_hidden: usize,
    pub vocab_size: usize,
    pub sender_weights: SenderWeights,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            hidden: 100,
            image_features: 512,
            message_bits: 8,
            value_hidden: 100,
            vocab_size: 20,
            sender_weights: SenderWeights::Belief,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("hidden", self.hidden),
            ("image_features", self.image_features),
            ("message_bits", self.message_bits),
            ("value_hidden", self.value_hidden),
            ("vocab_size", self.vocab_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("agent.{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Every trainable tensor of one agent.
///
/// The sender holds one row per message bit: `gen_h[l]`, `gen_d[l]` are the
/// per-bit weight vectors, the remaining sender tensors hold one scalar per
/// bit. The first value layer is stored as `value_hidden × hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentParams<T> {
    pub id: usize,
    pub config: AgentConfig,
    /// Games played so far.
    pub plays: u64,
    pub w_img: ParamTensor<T>,
    pub b_img: ParamTensor<T>,
    pub gru: GruCellParams<T>,
    pub u_fuse: ParamTensor<T>,
    pub b_fuse: ParamTensor<T>,
    pub embed: ParamTensor<T>,
    pub gen_h: ParamTensor<T>,
    pub gen_d: ParamTensor<T>,
    pub b_gen_h: ParamTensor<T>,
    pub b_gen_d: ParamTensor<T>,
    pub w_gen_m: ParamTensor<T>,
    pub b_gen_m: ParamTensor<T>,
    pub w_v1: ParamTensor<T>,
    pub b_v1: ParamTensor<T>,
    pub w_v2: ParamTensor<T>,
    pub b_v2: ParamTensor<T>,
}

impl<T: Scalar> AgentParams<T> {
    pub fn zeros(id: usize, config: AgentConfig) -> Self {
        let AgentConfig {
            hidden: h,
            image_features: f,
            message_bits: l,
            value_hidden: v,
            vocab_size: w,
            ..
        } = config;
        AgentParams {
            id,
            plays: 0,
            w_img: ParamTensor::zeros("sensory.w_img", &[h, f]),
            b_img: ParamTensor::zeros("sensory.b_img", &[h]),
            gru: GruCellParams::zeros(l, h),
            u_fuse: ParamTensor::zeros("fusion.u_fuse", &[h, 2 * h]),
            b_fuse: ParamTensor::zeros("fusion.b_fuse", &[h]),
            embed: ParamTensor::zeros("text.embed", &[w, h]),
            gen_h: ParamTensor::zeros("sender.gen_h", &[l, h]),
            gen_d: ParamTensor::zeros("sender.gen_d", &[l, h]),
            b_gen_h: ParamTensor::zeros("sender.b_gen_h", &[l]),
            b_gen_d: ParamTensor::zeros("sender.b_gen_d", &[l]),
            w_gen_m: ParamTensor::zeros("sender.w_gen_m", &[l]),
            b_gen_m: ParamTensor::zeros("sender.b_gen_m", &[l]),
            w_v1: ParamTensor::zeros("value.w_v1", &[v, h]),
            b_v1: ParamTensor::zeros("value.b_v1", &[v]),
            w_v2: ParamTensor::zeros("value.w_v2", &[v]),
            b_v2: ParamTensor::zeros("value.b_v2", &[1]),
            config,
        }
    }

    /// Glorot-uniform matrices, zero biases, embeddings uniform in ±0.1.
    ///
    /// The sender's input weights `gen_h`, `gen_d` start at zero, so `u = 0`
    /// and an untrained sender emits `p = 0.5` on every bit.
    pub fn init<R: Rng + ?Sized>(id: usize, config: AgentConfig, rng: &mut R) -> Self {
        let mut p = Self::zeros(id, config);
        let c = &p.config;
        let (h, f, l, v, w) = (c.hidden, c.image_features, c.message_bits, c.value_hidden, c.vocab_size);
        p.w_img = ParamTensor::glorot("sensory.w_img", &[h, f], f, h, rng);
        p.gru = GruCellParams::init(l, h, rng);
        p.u_fuse = ParamTensor::glorot("fusion.u_fuse", &[h, 2 * h], 2 * h, h, rng);
        p.embed = ParamTensor::zeros("text.embed", &[w, h]);
        for x in p.embed.values.iter_mut() {
            *x = T::lit(rng.gen_range(-0.1..0.1));
        }
        p.w_gen_m = ParamTensor::glorot("sender.w_gen_m", &[l], 1, 1, rng);
        p.w_v1 = ParamTensor::glorot("value.w_v1", &[v, h], h, v, rng);
        p.w_v2 = ParamTensor::glorot("value.w_v2", &[v], v, 1, rng);
        p
    }

    /// Replaces embedding rows from a word-vector table (`word v1 .. vD` per line).
    pub fn import_word_vectors(&mut self, vocab: &crate::worldgen::Vocabulary, text: &str) -> Result<usize> {
        let h = self.config.hidden;
        let mut replaced = 0;
        for (lineno, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let Ok(id) = vocab.id(word) else { continue };
            let values: Vec<f64> = parts
                .map(|s| s.parse::<f64>().map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1))))
                .collect::<Result<_>>()?;
            if values.len() != h {
                return Err(Error::Format(format!(
                    "line {}: expected {h} values, got {}",
                    lineno + 1,
                    values.len()
                )));
            }
            let row = id as usize * h;
            for (dst, v) in self.embed.values[row..row + h].iter_mut().zip(values) {
                *dst = T::lit(v);
            }
            replaced += 1;
        }
        Ok(replaced)
    }
}

impl<T: Scalar> Parameterized<T> for AgentParams<T> {
    fn tensors(&self) -> Vec<&ParamTensor<T>> {
        let mut out = vec![&self.w_img, &self.b_img];
        out.extend(self.gru.tensors());
        out.extend([
            &self.u_fuse,
            &self.b_fuse,
            &self.embed,
            &self.gen_h,
            &self.gen_d,
            &self.b_gen_h,
            &self.b_gen_d,
            &self.w_gen_m,
            &self.b_gen_m,
            &self.w_v1,
            &self.b_v1,
            &self.w_v2,
            &self.b_v2,
        ]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        let mut out = vec![&mut self.w_img, &mut self.b_img];
        out.extend(self.gru.tensors_mut());
        out.extend([
            &mut self.u_fuse,
            &mut self.b_fuse,
            &mut self.embed,
            &mut self.gen_h,
            &mut self.gen_d,
            &mut self.b_gen_h,
            &mut self.b_gen_d,
            &mut self.w_gen_m,
            &mut self.b_gen_m,
            &mut self.w_v1,
            &mut self.b_v1,
            &mut self.w_v2,
            &mut self.b_v2,
        ]);
        out
    }
}
