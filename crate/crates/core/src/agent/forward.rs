//! Forward operations of one agent and the matching backward pass.
//!
//! A game is recorded per agent as an [`Episode`]: the perception of its
//! view, one [`Turn`] per processed message (the blank opening message and
//! the partner's message), and the [`SendRecord`] of the single message the
//! agent emits.

use rand::Rng;

use crate::agent::params::{AgentParams, SenderWeights};
use crate::error::{Error, Result};
use crate::nn::ops::{add_assign, argmax, dot, matvec, matvec_t_acc, outer_acc, relu, sigmoid, softmax, softmax_backward};
use crate::nn::GruCache;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A binary message and the distribution it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Message<T> {
    pub bits: Vec<u8>,
    pub probabilities: Vec<T>,
}

impl<T: Scalar> Message<T> {
    pub fn blank(len: usize) -> Self {
        Message {
            bits: vec![0; len],
            probabilities: vec![T::zero(); len],
        }
    }

    pub fn as_input(&self) -> Vec<T> {
        self.bits.iter().map(|&b| if b == 1 { T::one() } else { T::zero() }).collect()
    }
}

/// `h_img = ReLU(W_img f + b_img)`; returns `(pre-activation, h_img)`.
pub fn perceive<T: Scalar>(features: &[T], params: &AgentParams<T>) -> Result<(Vec<T>, Vec<T>)> {
    if features.len() != params.config.image_features {
        return Err(Error::Shape {
            op: "perceive",
            expected: vec![params.config.image_features],
            got: vec![features.len()],
        });
    }
    let mut pre = vec![T::zero(); params.config.hidden];
    matvec(&params.w_img.values, features, &mut pre);
    add_assign(&mut pre, &params.b_img.values);
    let h = pre.iter().map(|&v| relu(v)).collect();
    Ok((pre, h))
}

/// One GRU step of the message receiver.
pub fn receive<T: Scalar>(bits: &[T], h_msg: &[T], params: &AgentParams<T>) -> Result<GruCache<T>> {
    params.gru.step_cached(bits, h_msg)
}

/// `h = U_fuse [h_img; h_msg] + b_fuse`; returns `(concatenation, h)`.
pub fn fuse<T: Scalar>(h_img: &[T], h_msg: &[T], params: &AgentParams<T>) -> (Vec<T>, Vec<T>) {
    let mut cat = Vec::with_capacity(h_img.len() + h_msg.len());
    cat.extend_from_slice(h_img);
    cat.extend_from_slice(h_msg);
    let mut h = vec![T::zero(); params.config.hidden];
    matvec(&params.u_fuse.values, &cat, &mut h);
    add_assign(&mut h, &params.b_fuse.values);
    (cat, h)
}

/// Mean of the caption's token embeddings.
pub fn embed_caption<T: Scalar>(tokens: &[u32], params: &AgentParams<T>) -> Result<Vec<T>> {
    let h = params.config.hidden;
    if tokens.is_empty() {
        return Err(Error::Vocabulary("empty caption".into()));
    }
    let mut out = vec![T::zero(); h];
    for &t in tokens {
        if t == 0 || t as usize >= params.config.vocab_size {
            return Err(Error::Vocabulary(format!("#{t}")));
        }
        add_assign(&mut out, params.embed.row(t as usize));
    }
    let n = T::lit(tokens.len() as f64);
    out.iter_mut().for_each(|v| *v = *v / n);
    Ok(out)
}

/// Scores, belief and guess (lowest index on ties).
pub fn predict<T: Scalar>(h: &[T], descs: &[Vec<T>]) -> (Vec<T>, Vec<T>, usize) {
    let alpha: Vec<T> = descs.iter().map(|d| dot(h, d)).collect();
    let belief = softmax(&alpha);
    let guess = argmax(&belief);
    (alpha, belief, guess)
}

/// Intermediates of the sender and value heads at the sending turn.
#[derive(Debug, Clone)]
pub struct SendRecord<T> {
    pub turn: usize,
    pub weights: Vec<T>,
    pub desc_w: Vec<T>,
    /// Per-bit hidden value `u_l = tanh(..)`.
    pub hidden: Vec<T>,
    pub probs: Vec<T>,
    pub value_pre: Vec<T>,
    pub value: T,
}

/// Message distribution from the fused state and the belief-weighted
/// caption summary.
pub fn compose_message<T: Scalar>(
    h: &[T],
    alpha: &[T],
    belief: &[T],
    descs: &[Vec<T>],
    params: &AgentParams<T>,
) -> (Vec<T>, Vec<T>, Vec<T>, Vec<T>) {
    let weights = match params.config.sender_weights {
        SenderWeights::Belief => belief.to_vec(),
        SenderWeights::RawScores => alpha.to_vec(),
    };
    let mut desc_w = vec![T::zero(); params.config.hidden];
    for (w, d) in weights.iter().zip(descs) {
        for (o, &x) in desc_w.iter_mut().zip(d) {
            *o = *o + *w * x;
        }
    }
    let bits = params.config.message_bits;
    let mut hidden = Vec::with_capacity(bits);
    let mut probs = Vec::with_capacity(bits);
    for l in 0..bits {
        let a = dot(h, params.gen_h.row(l))
            + dot(&desc_w, params.gen_d.row(l))
            + params.b_gen_h.values[l]
            + params.b_gen_d.values[l];
        let u = a.tanh();
        hidden.push(u);
        probs.push(sigmoid(u * params.w_gen_m.values[l] + params.b_gen_m.values[l]));
    }
    (weights, desc_w, hidden, probs)
}

/// Samples (train) or rounds (eval) a message; `p = 0.5` rounds to 1.
pub fn emit_message<T: Scalar, R: Rng + ?Sized>(probs: &[T], mode: Mode, rng: &mut R) -> Message<T> {
    let half = T::lit(0.5);
    let bits = probs
        .iter()
        .map(|&p| match mode {
            Mode::Train => (rng.gen::<f64>() < p.as_f64()) as u8,
            Mode::Eval => (p >= half) as u8,
        })
        .collect();
    Message {
        bits,
        probabilities: probs.to_vec(),
    }
}

/// `V(h) = w_v2ᵀ ReLU(W_v1 h + b_v1) + b_v2`; returns `(pre-activation, V)`.
pub fn estimate_value<T: Scalar>(h: &[T], params: &AgentParams<T>) -> (Vec<T>, T) {
    let mut pre = vec![T::zero(); params.config.value_hidden];
    matvec(&params.w_v1.values, h, &mut pre);
    add_assign(&mut pre, &params.b_v1.values);
    let v = pre
        .iter()
        .zip(&params.w_v2.values)
        .fold(T::zero(), |acc, (&p, &w)| acc + relu(p) * w)
        + params.b_v2.values[0];
    (pre, v)
}

/// State after processing one message.
#[derive(Debug, Clone)]
pub struct Turn<T> {
    pub gru: GruCache<T>,
    pub fused_input: Vec<T>,
    pub h: Vec<T>,
    pub alpha: Vec<T>,
    pub belief: Vec<T>,
    pub guess: usize,
}

/// Everything one agent computed during one game.
#[derive(Debug, Clone)]
pub struct Episode<T> {
    pub features: Vec<T>,
    pub img_pre: Vec<T>,
    pub h_img: Vec<T>,
    pub captions: Vec<Vec<u32>>,
    pub descs: Vec<Vec<T>>,
    pub turns: Vec<Turn<T>>,
    pub send: Option<SendRecord<T>>,
}

/// Gradients of the loss with respect to the episode's outputs.
#[derive(Debug, Clone)]
pub struct OutputGrads<T> {
    /// `dL/dα` for every turn.
    pub alpha: Vec<Vec<T>>,
    /// `dL/dp` for the sent message's bit probabilities.
    pub probs: Vec<T>,
    /// `dL/dV` at the sending turn.
    pub value: T,
}

impl<T: Scalar> Episode<T> {
    /// Perceives the view, embeds the candidates and processes the blank
    /// opening message.
    pub fn open(params: &AgentParams<T>, features: &[T], captions: &[Vec<u32>]) -> Result<Self> {
        let (img_pre, h_img) = perceive(features, params)?;
        let descs = captions
            .iter()
            .map(|c| embed_caption(c, params))
            .collect::<Result<Vec<_>>>()?;
        let mut ep = Episode {
            features: features.to_vec(),
            img_pre,
            h_img,
            captions: captions.to_vec(),
            descs,
            turns: Vec::with_capacity(2),
            send: None,
        };
        let blank = vec![T::zero(); params.config.message_bits];
        ep.receive(params, &blank)?;
        Ok(ep)
    }

    /// Processes a received bit vector and re-predicts.
    pub fn receive(&mut self, params: &AgentParams<T>, bits: &[T]) -> Result<()> {
        let h_prev = match self.turns.last() {
            Some(t) => t.gru.h_new.clone(),
            None => vec![T::zero(); params.config.hidden],
        };
        let gru = receive(bits, &h_prev, params)?;
        let (fused_input, h) = fuse(&self.h_img, &gru.h_new, params);
        let (alpha, belief, guess) = predict(&h, &self.descs);
        self.turns.push(Turn {
            gru,
            fused_input,
            h,
            alpha,
            belief,
            guess,
        });
        Ok(())
    }

    /// Composes the message distribution from the current turn.
    pub fn compose(&mut self, params: &AgentParams<T>) -> &[T] {
        let turn = self.turns.len() - 1;
        let t = &self.turns[turn];
        let (weights, desc_w, hidden, probs) = compose_message(&t.h, &t.alpha, &t.belief, &self.descs, params);
        let (value_pre, value) = estimate_value(&t.h, params);
        self.send = Some(SendRecord {
            turn,
            weights,
            desc_w,
            hidden,
            probs,
            value_pre,
            value,
        });
        &self.send.as_ref().unwrap().probs
    }

    pub fn first(&self) -> &Turn<T> {
        &self.turns[0]
    }

    pub fn last(&self) -> &Turn<T> {
        self.turns.last().expect("episode always has the opening turn")
    }

    /// Accumulates the gradients of every trainable tensor into `params`.
    pub fn backward(&self, params: &mut AgentParams<T>, out: &OutputGrads<T>) {
        let hd = params.config.hidden;
        let one = T::one();
        let mut dh: Vec<Vec<T>> = vec![vec![T::zero(); hd]; self.turns.len()];
        let mut dalpha: Vec<Vec<T>> = out.alpha.clone();
        let mut ddesc: Vec<Vec<T>> = vec![vec![T::zero(); hd]; self.descs.len()];

        if let Some(s) = &self.send {
            let turn = &self.turns[s.turn];
            let h = &turn.h;
            let mut ddesc_w = vec![T::zero(); hd];
            for l in 0..s.probs.len() {
                let p = s.probs[l];
                let ds = out.probs[l] * p * (one - p);
                let u = s.hidden[l];
                params.w_gen_m.grad[l] = params.w_gen_m.grad[l] + ds * u;
                params.b_gen_m.grad[l] = params.b_gen_m.grad[l] + ds;
                let da = ds * params.w_gen_m.values[l] * (one - u * u);
                if da == T::zero() {
                    continue;
                }
                params.b_gen_h.grad[l] = params.b_gen_h.grad[l] + da;
                params.b_gen_d.grad[l] = params.b_gen_d.grad[l] + da;
                let row = l * hd..(l + 1) * hd;
                outer_acc(&[da], h, &mut params.gen_h.grad[row.clone()]);
                outer_acc(&[da], &s.desc_w, &mut params.gen_d.grad[row.clone()]);
                for k in 0..hd {
                    dh[s.turn][k] = dh[s.turn][k] + da * params.gen_h.values[row.start + k];
                    ddesc_w[k] = ddesc_w[k] + da * params.gen_d.values[row.start + k];
                }
            }
            let dweights: Vec<T> = self.descs.iter().map(|d| dot(&ddesc_w, d)).collect();
            for (dd, &w) in ddesc.iter_mut().zip(&s.weights) {
                for (x, &g) in dd.iter_mut().zip(&ddesc_w) {
                    *x = *x + w * g;
                }
            }
            let dw_alpha = match params.config.sender_weights {
                SenderWeights::Belief => softmax_backward(&turn.belief, &dweights),
                SenderWeights::RawScores => dweights,
            };
            add_assign(&mut dalpha[s.turn], &dw_alpha);

            // value head
            let dv = out.value;
            params.b_v2.grad[0] = params.b_v2.grad[0] + dv;
            let mut dpre = vec![T::zero(); params.config.value_hidden];
            for (k, &pre) in s.value_pre.iter().enumerate() {
                let act = relu(pre);
                params.w_v2.grad[k] = params.w_v2.grad[k] + dv * act;
                if pre > T::zero() {
                    dpre[k] = dv * params.w_v2.values[k];
                }
            }
            outer_acc(&dpre, h, &mut params.w_v1.grad);
            add_assign(&mut params.b_v1.grad, &dpre);
            matvec_t_acc(&params.w_v1.values, &dpre, &mut dh[s.turn]);
        }

        // predictor and fusion, per turn
        let mut dh_img = vec![T::zero(); hd];
        let mut dh_msg: Vec<Vec<T>> = Vec::with_capacity(self.turns.len());
        for (t, turn) in self.turns.iter().enumerate() {
            for (c, d) in self.descs.iter().enumerate() {
                let g = dalpha[t][c];
                if g == T::zero() {
                    continue;
                }
                for k in 0..hd {
                    dh[t][k] = dh[t][k] + g * d[k];
                    ddesc[c][k] = ddesc[c][k] + g * turn.h[k];
                }
            }
            outer_acc(&dh[t], &turn.fused_input, &mut params.u_fuse.grad);
            add_assign(&mut params.b_fuse.grad, &dh[t]);
            let mut dcat = vec![T::zero(); 2 * hd];
            matvec_t_acc(&params.u_fuse.values, &dh[t], &mut dcat);
            add_assign(&mut dh_img, &dcat[..hd]);
            dh_msg.push(dcat[hd..].to_vec());
        }

        // receiver, back through the turns
        for t in (0..self.turns.len()).rev() {
            let (_, dprev) = params.gru.backward(&self.turns[t].gru, &dh_msg[t]);
            if t > 0 {
                add_assign(&mut dh_msg[t - 1], &dprev);
            }
        }

        // text
        for (tokens, dd) in self.captions.iter().zip(&ddesc) {
            let n = T::lit(tokens.len() as f64);
            for &tok in tokens {
                let row = tok as usize * hd;
                for (g, &x) in params.embed.grad[row..row + hd].iter_mut().zip(dd) {
                    *g = *g + x / n;
                }
            }
        }

        // sensory
        let dpre: Vec<T> = dh_img
            .iter()
            .zip(&self.img_pre)
            .map(|(&g, &p)| if p > T::zero() { g } else { T::zero() })
            .collect();
        outer_acc(&dpre, &self.features, &mut params.w_img.grad);
        add_assign(&mut params.b_img.grad, &dpre);
    }
}
