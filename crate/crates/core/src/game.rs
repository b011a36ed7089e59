//! The two-player reference game: one exchange of messages, rewards, the
//! four-term loss and the minibatch training step.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::agent::{emit_message, AgentParams, Episode, Message, Mode, OutputGrads};
use crate::error::{Error, Result};
use crate::nn::ops::{bernoulli_entropy, bit_entropy_grad};
use crate::nn::{rmsprop_step, OptimizerConfig, Parameterized};
use crate::scalar::Scalar;

pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    SelfAfter,
    SharedAfter,
    #[default]
    Improvement,
}

impl RewardMode {
    pub const ALL: [RewardMode; 3] = [RewardMode::SelfAfter, RewardMode::SharedAfter, RewardMode::Improvement];

    pub fn name(self) -> &'static str {
        match self {
            RewardMode::SelfAfter => "self_after",
            RewardMode::SharedAfter => "shared_after",
            RewardMode::Improvement => "improvement",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    pub rounds: usize,
    pub reward_mode: RewardMode,
    pub alpha_pred: f64,
    pub alpha_value: f64,
    pub alpha_msg: f64,
    pub alpha_entropy: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            rounds: 1,
            reward_mode: RewardMode::Improvement,
            alpha_pred: 1.0,
            alpha_value: 1.0,
            alpha_msg: 1.0,
            alpha_entropy: 0.01,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds != 1 {
            return Err(Error::Config(format!("only one exchange per game is supported, got rounds = {}", self.rounds)));
        }
        for (name, v) in [
            ("alpha_pred", self.alpha_pred),
            ("alpha_value", self.alpha_value),
            ("alpha_msg", self.alpha_msg),
            ("alpha_entropy", self.alpha_entropy),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// One game: a view's features for each player and the shared candidates.
#[derive(Debug, Clone)]
pub struct GameInput<'a, T> {
    pub features: [Vec<T>; 2],
    pub captions: &'a [Vec<u32>],
    pub correct: usize,
}

#[derive(Debug, Clone)]
pub struct PlayerOutcome<T> {
    pub guess_before: usize,
    pub guess_after: usize,
    pub belief_before: Vec<T>,
    pub belief_after: Vec<T>,
    pub message: Message<T>,
    pub value: T,
}

impl<T> PlayerOutcome<T> {
    pub fn correct_before(&self, y: usize) -> bool {
        self.guess_before == y
    }

    pub fn correct_after(&self, y: usize) -> bool {
        self.guess_after == y
    }
}

#[derive(Debug, Clone)]
pub struct GameOutcome<T> {
    pub correct: usize,
    /// 0 if the first player spoke first.
    pub first_speaker: usize,
    pub players: [PlayerOutcome<T>; 2],
    pub success: bool,
}

/// A played game together with the recorded forward passes.
#[derive(Debug, Clone)]
pub struct PlayedGame<T> {
    pub outcome: GameOutcome<T>,
    pub episodes: [Episode<T>; 2],
}

/// Plays one game with an explicit speaker order. `forced` replaces the
/// emitted bits of each player, which pins the game for gradient checks.
pub fn play_ordered<T: Scalar, R: Rng + ?Sized>(
    a: &AgentParams<T>,
    b: &AgentParams<T>,
    input: &GameInput<'_, T>,
    first_speaker: usize,
    mode: Mode,
    forced: Option<&[Vec<u8>; 2]>,
    rng: &mut R,
) -> Result<PlayedGame<T>> {
    let agents = [a, b];
    let mut eps = [
        Episode::open(a, &input.features[0], input.captions)?,
        Episode::open(b, &input.features[1], input.captions)?,
    ];
    let speak = |i: usize, ep: &mut Episode<T>, rng: &mut R| {
        let probs = ep.compose(agents[i]).to_vec();
        let mut msg = emit_message(&probs, mode, rng);
        if let Some(f) = forced {
            msg.bits = f[i].clone();
        }
        msg
    };
    let s = first_speaker;
    let l = 1 - s;
    let first_msg = speak(s, &mut eps[s], rng);
    eps[l].receive(agents[l], &first_msg.as_input())?;
    let reply = speak(l, &mut eps[l], rng);
    eps[s].receive(agents[s], &reply.as_input())?;

    let mut messages = [None, None];
    messages[s] = Some(first_msg);
    messages[l] = Some(reply);
    let players = [0, 1].map(|i| {
        let ep = &eps[i];
        PlayerOutcome {
            guess_before: ep.first().guess,
            guess_after: ep.last().guess,
            belief_before: ep.first().belief.clone(),
            belief_after: ep.last().belief.clone(),
            message: messages[i].take().expect("both players speak once"),
            value: ep.send.as_ref().expect("both players speak once").value,
        }
    });
    let y = input.correct;
    let success = players.iter().all(|p| p.correct_after(y));
    Ok(PlayedGame {
        outcome: GameOutcome {
            correct: y,
            first_speaker: s,
            players,
            success,
        },
        episodes: eps,
    })
}

/// Plays one game with a uniformly random first speaker. The speaker draw
/// happens in both modes.
pub fn play<T: Scalar, R: Rng + ?Sized>(
    a: &AgentParams<T>,
    b: &AgentParams<T>,
    input: &GameInput<'_, T>,
    mode: Mode,
    rng: &mut R,
) -> Result<PlayedGame<T>> {
    let first = rng.gen_range(0..2);
    play_ordered(a, b, input, first, mode, None, rng)
}

pub fn compute_rewards<T>(outcome: &GameOutcome<T>, mode: RewardMode) -> [f64; 2] {
    let y = outcome.correct;
    let after = outcome.players.each_ref().map(|p| p.correct_after(y) as i32 as f64);
    let before = outcome.players.each_ref().map(|p| p.correct_before(y) as i32 as f64);
    match mode {
        RewardMode::SelfAfter => after,
        RewardMode::SharedAfter => [after[0] + after[1]; 2],
        RewardMode::Improvement => [(after[0] - before[0]) + (after[1] - before[1]); 2],
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub pred_before: f64,
    pub pred_after: f64,
    pub value: f64,
    pub msg: f64,
    pub entropy: f64,
    pub total: f64,
}

impl LossRecord {
    fn add_scaled(&mut self, o: &LossRecord, s: f64) {
        self.pred_before += s * o.pred_before;
        self.pred_after += s * o.pred_after;
        self.value += s * o.value;
        self.msg += s * o.msg;
        self.entropy += s * o.entropy;
        self.total += s * o.total;
    }
}

fn clamp_prob<T: Scalar>(p: T) -> (T, bool) {
    let lo = T::lit(PROB_CLAMP);
    let hi = T::one() - lo;
    if p < lo {
        (lo, true)
    } else if p > hi {
        (hi, true)
    } else {
        (p, false)
    }
}

/// Log-probability of `bits` under independent Bernoulli bits, with the
/// probabilities clamped away from 0 and 1.
pub fn message_log_prob<T: Scalar>(probs: &[T], bits: &[u8]) -> T {
    probs.iter().zip(bits).fold(T::zero(), |acc, (&p, &m)| {
        let (p, _) = clamp_prob(p);
        acc + if m == 1 { p.ln() } else { (T::one() - p).ln() }
    })
}

/// Loss of one player and the gradients it seeds into that player's episode.
pub fn player_loss<T: Scalar>(
    episode: &Episode<T>,
    bits: &[u8],
    correct: usize,
    reward: f64,
    cfg: &GameConfig,
) -> Result<(LossRecord, OutputGrads<T>)> {
    player_loss_with_baseline(episode, bits, correct, reward, None, cfg)
}

/// As [`player_loss`]; `baseline` overrides the value used as the message
/// loss baseline, which never receives gradient.
pub fn player_loss_with_baseline<T: Scalar>(
    episode: &Episode<T>,
    bits: &[u8],
    correct: usize,
    reward: f64,
    baseline: Option<T>,
    cfg: &GameConfig,
) -> Result<(LossRecord, OutputGrads<T>)> {
    let send = episode
        .send
        .as_ref()
        .ok_or(Error::Empty("player never composed a message"))?;
    let lit = T::lit;
    let ap = lit(cfg.alpha_pred);
    let n_turns = episode.turns.len();

    let pred_loss = |alpha: &[T]| -> T {
        let m = alpha.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
        let lse = m + alpha.iter().map(|&x| (x - m).exp()).sum::<T>().ln();
        lse - alpha[correct]
    };
    let pred_before = pred_loss(&episode.first().alpha);
    let pred_after = pred_loss(&episode.last().alpha);
    let mut dalpha = vec![vec![T::zero(); episode.descs.len()]; n_turns];
    for t in [0, n_turns - 1] {
        for (c, (&b, g)) in episode.turns[t].belief.iter().zip(dalpha[t].iter_mut()).enumerate() {
            let target = if c == correct { T::one() } else { T::zero() };
            *g = *g + ap * (b - target);
        }
    }

    let r = lit(reward);
    let v = send.value;
    let advantage = r - v;
    let value = advantage * advantage;
    let dvalue = -lit(2.0 * cfg.alpha_value) * advantage;

    let msg_adv = r - baseline.unwrap_or(v);
    let logp = message_log_prob(&send.probs, bits);
    let msg = -msg_adv * logp;
    let h = bernoulli_entropy(&send.probs)?;
    let entropy = -h;
    let am = lit(cfg.alpha_msg);
    let ae = lit(cfg.alpha_entropy);
    let dprobs = send
        .probs
        .iter()
        .zip(bits)
        .map(|(&p, &m)| {
            let (pc, clamped) = clamp_prob(p);
            let dlogp = if clamped {
                T::zero()
            } else if m == 1 {
                T::one() / pc
            } else {
                -T::one() / (T::one() - pc)
            };
            -am * msg_adv * dlogp - ae * bit_entropy_grad(p)
        })
        .collect();

    let total = ap * (pred_before + pred_after) + lit(cfg.alpha_value) * value + am * msg + ae * entropy;
    let rec = LossRecord {
        pred_before: pred_before.as_f64(),
        pred_after: pred_after.as_f64(),
        value: value.as_f64(),
        msg: msg.as_f64(),
        entropy: entropy.as_f64(),
        total: total.as_f64(),
    };
    Ok((
        rec,
        OutputGrads {
            alpha: dalpha,
            probs: dprobs,
            value: dvalue,
        },
    ))
}

fn grads_finite<T: Scalar, M: Parameterized<T>>(m: &M) -> bool {
    m.tensors().iter().all(|t| t.grad.iter().all(|g| g.is_finite()))
}

/// Summary of one optimizer step of a pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub games: usize,
    pub skipped: bool,
    pub success_rate: f64,
    pub mean_reward: [f64; 2],
    pub losses: [LossRecord; 2],
    pub message_entropy: f64,
}

/// Plays every game of the batch in train mode, averages each player's
/// gradients over the batch and takes one RMSProp step per player.
///
/// The message channel is discrete, so no gradient flows between players.
pub fn train_step<T: Scalar, R: Rng + ?Sized>(
    a: &mut AgentParams<T>,
    b: &mut AgentParams<T>,
    batch: &[GameInput<'_, T>],
    cfg: &GameConfig,
    opt: &OptimizerConfig,
    rng: &mut R,
) -> Result<StepReport> {
    if batch.is_empty() {
        return Err(Error::Empty("training batch"));
    }
    a.zero_grad();
    b.zero_grad();
    let n = batch.len();
    let scale = 1.0 / n as f64;
    let mut report = StepReport {
        games: n,
        skipped: false,
        success_rate: 0.0,
        mean_reward: [0.0; 2],
        losses: [LossRecord::default(); 2],
        message_entropy: 0.0,
    };
    let mut finite = true;
    for input in batch {
        let game = play(a, b, input, Mode::Train, rng)?;
        let rewards = compute_rewards(&game.outcome, cfg.reward_mode);
        report.success_rate += scale * game.outcome.success as i32 as f64;
        for i in 0..2 {
            let player = &game.outcome.players[i];
            let (rec, mut grads) = player_loss(&game.episodes[i], &player.message.bits, input.correct, rewards[i], cfg)?;
            finite &= rec.total.is_finite();
            report.losses[i].add_scaled(&rec, scale);
            report.mean_reward[i] += scale * rewards[i];
            report.message_entropy += 0.5 * scale * -rec.entropy;
            let s = T::lit(scale);
            grads.alpha.iter_mut().flatten().for_each(|g| *g = *g * s);
            grads.probs.iter_mut().for_each(|g| *g = *g * s);
            grads.value = grads.value * s;
            let agent = if i == 0 { &mut *a } else { &mut *b };
            game.episodes[i].backward(agent, &grads);
        }
    }
    let applied = finite && grads_finite(a) && grads_finite(b) && {
        rmsprop_step(a, opt)?;
        rmsprop_step(b, opt)?;
        true
    };
    if !applied {
        a.zero_grad();
        b.zero_grad();
        report.skipped = true;
        log::warn!("non-finite loss or gradient, step skipped for agents {} and {}", a.id, b.id);
    }
    a.plays += n as u64;
    b.plays += n as u64;
    Ok(report)
}

/// Pins a game (speaker order, both messages and both rewards) and compares
/// the analytic gradient of player 0's total loss with central differences.
/// The message loss baseline is held at its unperturbed value; coordinates
/// whose stencil flips one of player 0's ReLUs are skipped.
#[allow(clippy::too_many_arguments)]
pub fn check_player_gradients<T: Scalar, R: Rng + ?Sized>(
    a: &mut AgentParams<T>,
    b: &AgentParams<T>,
    input: &GameInput<'_, T>,
    first_speaker: usize,
    bits: &[Vec<u8>; 2],
    reward: f64,
    cfg: &GameConfig,
    step: f64,
    per_tensor: Option<usize>,
    rng: &mut R,
) -> Result<crate::nn::GradCheckReport> {
    let mut scratch = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let game = play_ordered(a, b, input, first_speaker, Mode::Train, Some(bits), &mut scratch)?;
    let (_, grads) = player_loss(&game.episodes[0], &bits[0], input.correct, reward, cfg)?;
    let baseline = game.outcome.players[0].value;
    a.zero_grad();
    game.episodes[0].backward(a, &grads);
    let loss = |m: &AgentParams<T>| -> (T, Vec<bool>) {
        let mut scratch = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let game = play_ordered(m, b, input, first_speaker, Mode::Train, Some(bits), &mut scratch)
            .expect("pinned game replays");
        let ep = &game.episodes[0];
        let (rec, _) = player_loss_with_baseline(ep, &bits[0], input.correct, reward, Some(baseline), cfg)
            .expect("pinned game replays");
        let value_pre = ep.send.as_ref().map_or(&[][..], |s| &s.value_pre[..]);
        let pattern = ep.img_pre.iter().chain(value_pre).map(|&v| v > T::zero()).collect();
        (T::lit(rec.total), pattern)
    };
    let report = crate::nn::gradient_check_piecewise(a, loss, step, per_tensor, rng);
    a.zero_grad();
    Ok(report)
}
