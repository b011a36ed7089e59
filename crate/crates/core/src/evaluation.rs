//! Self-play and cross-play success, historical self-play, protocol
//! complexity and plays-to-threshold.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentParams, Mode, ProtocolSnapshot};
use crate::data::{EvalItem, EvalSet};
use crate::error::{Error, Result};
use crate::game::play_ordered;
use crate::nn::bernoulli_entropy;
use crate::scalar::{RunningMean, Scalar};
use crate::worldgen::dataset::derive_seed;

/// Anything that can take part in an evaluation game.
pub trait Player<T: Scalar>: Sync {
    /// Final guesses of `self` and `partner` when `self` sees the first view
    /// and player `first` speaks first.
    fn final_guesses(&self, partner: &Self, item: &EvalItem<T>, first: usize) -> Result<[usize; 2]>;
}

impl<T: Scalar> Player<T> for AgentParams<T> {
    fn final_guesses(&self, partner: &Self, item: &EvalItem<T>, first: usize) -> Result<[usize; 2]> {
        // eval mode draws nothing from the generator
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let g = play_ordered(self, partner, &item.input(), first, Mode::Eval, None, &mut unused)?;
        Ok(g.outcome.players.each_ref().map(|p| p.guess_after))
    }
}

/// Scripted players for checking the evaluator itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubPlayer {
    /// Always names the correct caption.
    Oracle,
    /// A uniform guess derived from `(salt, example, speaker order)`. Two
    /// stubs with different salts guess independently; a stub playing itself
    /// shares one guess.
    Uniform { salt: u64 },
}

impl StubPlayer {
    fn guess<T>(&self, item: &EvalItem<T>, first: usize) -> usize {
        match *self {
            StubPlayer::Oracle => item.correct,
            StubPlayer::Uniform { salt } => {
                (derive_seed(salt, item.id, first as u64) % item.captions.len() as u64) as usize
            }
        }
    }
}

impl<T: Scalar> Player<T> for StubPlayer {
    fn final_guesses(&self, partner: &Self, item: &EvalItem<T>, first: usize) -> Result<[usize; 2]> {
        Ok([self.guess(item, first), partner.guess(item, first)])
    }
}

/// Games won by a pair on one example, out of the two speaker orders.
pub fn pair_wins<T: Scalar, P: Player<T> + ?Sized>(a: &P, b: &P, item: &EvalItem<T>) -> Result<u32> {
    let mut wins = 0;
    for first in 0..2 {
        let g = a.final_guesses(b, item, first)?;
        wins += (g[0] == item.correct && g[1] == item.correct) as u32;
    }
    Ok(wins)
}

/// Fraction of games in which both final guesses are correct, over every
/// example and both speaker orders. `a` sees the first view.
pub fn pair_success_rate<T: Scalar, P: Player<T> + ?Sized>(a: &P, b: &P, eval: &EvalSet<T>) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut wins = 0u64;
    for item in &eval.items {
        wins += pair_wins(a, b, item)? as u64;
    }
    Ok(wins as f64 / (2 * eval.len()) as f64)
}

/// Rates of every ordered pair; the diagonal is self-play.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessMatrix {
    pub labels: Vec<String>,
    pub rates: Vec<Vec<f64>>,
    pub n_examples: usize,
}

/// What the diagonal of a community-level matrix averages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diagonal {
    /// Distinct pairs inside the community (self-play for a single agent).
    #[default]
    CrossPairs,
    SelfPlay,
}

impl SuccessMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn self_play_mean(&self) -> f64 {
        let n = self.len();
        (0..n).map(|i| self.rates[i][i]).sum::<f64>() / n as f64
    }

    /// Mean over ordered pairs `i ≠ j`; self-play when there is one agent.
    pub fn cross_play_mean(&self) -> f64 {
        let n = self.len();
        if n == 1 {
            return self.rates[0][0];
        }
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    sum += self.rates[i][j];
                }
            }
        }
        sum / (n * (n - 1)) as f64
    }

    pub fn max_cross_play(&self) -> f64 {
        let n = self.len();
        if n == 1 {
            return self.rates[0][0];
        }
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    best = best.max(self.rates[i][j]);
                }
            }
        }
        best
    }

    /// Group-level matrix: off-diagonal entries average every agent pair
    /// across the two groups; the diagonal follows `diagonal`.
    pub fn community_matrix(&self, groups: &[Vec<usize>], diagonal: Diagonal) -> SuccessMatrix {
        let g = groups.len();
        let mut rates = vec![vec![0.0; g]; g];
        for a in 0..g {
            for b in 0..g {
                let mut cells = Vec::new();
                for &i in &groups[a] {
                    for &j in &groups[b] {
                        let keep = if a != b {
                            true
                        } else {
                            match diagonal {
                                Diagonal::CrossPairs => i != j || groups[a].len() == 1,
                                Diagonal::SelfPlay => i == j,
                            }
                        };
                        if keep {
                            cells.push(self.rates[i][j]);
                        }
                    }
                }
                rates[a][b] = cells.iter().sum::<f64>() / cells.len() as f64;
            }
        }
        SuccessMatrix {
            labels: (0..g).map(|k| format!("C{}", k + 1)).collect(),
            rates,
            n_examples: self.n_examples,
        }
    }
}

/// Every ordered pair of `players` on `eval`; with `parallel`, rows are
/// computed on separate threads and merged in index order.
pub fn success_matrix<T: Scalar, P: Player<T>>(
    players: &[&P],
    labels: Vec<String>,
    eval: &EvalSet<T>,
    parallel: bool,
) -> Result<SuccessMatrix> {
    let n = players.len();
    if labels.len() != n {
        return Err(Error::Config(format!("{} labels for {n} players", labels.len())));
    }
    let row = |i: usize| -> Result<Vec<f64>> { (0..n).map(|j| pair_success_rate(players[i], players[j], eval)).collect() };
    let rates = if parallel && n > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..n).map(|i| s.spawn(move || row(i))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("evaluation thread panicked"))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        (0..n).map(row).collect::<Result<Vec<_>>>()?
    };
    Ok(SuccessMatrix {
        labels,
        rates,
        n_examples: eval.len(),
    })
}

/// A frozen agent playing a live one.
pub fn historical_self_play<T: Scalar>(
    snapshot: &ProtocolSnapshot<T>,
    current: &AgentParams<T>,
    eval: &EvalSet<T>,
) -> Result<f64> {
    pair_success_rate(&snapshot.agent, current, eval)
}

/// Mean entropy (nats) of an agent's composed message distribution at its
/// sending turn, over examples and both positions in self-play.
pub fn agent_complexity<T: Scalar>(agent: &AgentParams<T>, eval: &EvalSet<T>) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let mut mean = RunningMean::default();
    for item in &eval.items {
        let input = item.input();
        for first in 0..2 {
            let g = play_ordered(agent, agent, &input, first, Mode::Eval, None, &mut unused)?;
            for ep in &g.episodes {
                let send = ep.send.as_ref().expect("every player sends once");
                mean.push(bernoulli_entropy(&send.probs)?.as_f64());
            }
        }
    }
    Ok(mean.mean())
}

/// Per-agent complexities and their mean.
pub fn protocol_complexity<T: Scalar>(agents: &[&AgentParams<T>], eval: &EvalSet<T>) -> Result<(Vec<f64>, f64)> {
    if agents.is_empty() {
        return Err(Error::Empty("agent list"));
    }
    let per: Vec<f64> = agents.iter().map(|a| agent_complexity(a, eval)).collect::<Result<_>>()?;
    let mut mean = RunningMean::default();
    per.iter().for_each(|&c| mean.push(c));
    Ok((per, mean.mean()))
}

/// A success matrix measured at a point of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTick {
    pub plays_per_agent: f64,
    pub matrix: SuccessMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub threshold: f64,
    /// First tick at which some pair reaches the threshold.
    pub first_pair: Option<f64>,
    /// First tick at which the mean over pairs reaches the threshold.
    pub all_pairs: Option<f64>,
}

/// Pairs are the distinct ordered pairs, or self-play for a lone agent.
pub fn plays_to_threshold(ticks: &[EvalTick], threshold: f64) -> ThresholdRecord {
    let first_pair = ticks
        .iter()
        .find(|t| t.matrix.max_cross_play() >= threshold)
        .map(|t| t.plays_per_agent);
    let all_pairs = ticks
        .iter()
        .find(|t| t.matrix.cross_play_mean() >= threshold)
        .map(|t| t.plays_per_agent);
    ThresholdRecord {
        threshold,
        first_pair,
        all_pairs,
    }
}
