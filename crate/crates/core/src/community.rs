//! Community graphs, contact between communities, weighted pair sampling
//! and the training loop.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, AgentParams};
use crate::data::TrainingSet;
use crate::error::{Error, Result};
use crate::game::{train_step, GameConfig, StepReport};
use crate::nn::OptimizerConfig;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeClass {
    Intra,
    Inter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub class: EdgeClass,
}

/// Agents, their group labels and the weighted interaction edges.
#[derive(Debug, Clone)]
pub struct CommunityGraph<T> {
    pub agents: Vec<AgentParams<T>>,
    groups: Vec<usize>,
    edges: Vec<Edge>,
    bridge: Vec<bool>,
    inter_count: usize,
    intra_count: usize,
    sampler: Option<WeightedIndex<f64>>,
}

fn check_weight(w: f64) -> Result<()> {
    if w > 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("edge weights must be positive and finite, got {w}")))
    }
}

impl<T: Scalar> CommunityGraph<T> {
    /// A graph without edges; every agent in group 0.
    pub fn isolated(agents: Vec<AgentParams<T>>) -> Self {
        let n = agents.len();
        CommunityGraph {
            agents,
            groups: vec![0; n],
            edges: Vec::new(),
            bridge: vec![false; n],
            inter_count: 0,
            intra_count: 0,
            sampler: None,
        }
    }

    /// Rebuilds a graph from agents, group labels and a saved edge list.
    pub fn from_parts(agents: Vec<AgentParams<T>>, groups: Vec<usize>, edges: &[Edge]) -> Result<Self> {
        if groups.len() != agents.len() {
            return Err(Error::Config(format!(
                "{} group labels for {} agents",
                groups.len(),
                agents.len()
            )));
        }
        let mut g = CommunityGraph::isolated(agents);
        g.groups = groups;
        for e in edges {
            g.add_edge(e.i, e.j, e.weight)?;
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn num_groups(&self) -> usize {
        self.groups.iter().max().map_or(0, |g| g + 1)
    }

    /// Agent indices of group `g`, ascending.
    pub fn members(&self, g: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.groups[i] == g).collect()
    }

    pub fn bridge_flags(&self) -> &[bool] {
        &self.bridge
    }

    /// Number of inter-group edges.
    pub fn k(&self) -> usize {
        self.inter_count
    }

    /// Number of intra-group edges.
    pub fn l(&self) -> usize {
        self.intra_count
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        let (i, j) = (i.min(j), i.max(j));
        self.edges.iter().any(|e| e.i == i && e.j == j)
    }

    pub fn add_edge(&mut self, i: usize, j: usize, weight: f64) -> Result<()> {
        check_weight(weight)?;
        if i == j {
            return Err(Error::Config(format!("self-edge on agent {i}")));
        }
        let n = self.len();
        if i >= n || j >= n {
            return Err(Error::Config(format!("edge ({i}, {j}) outside a graph of {n} agents")));
        }
        let (i, j) = (i.min(j), i.max(j));
        if self.has_edge(i, j) {
            return Err(Error::Config(format!("duplicate edge ({i}, {j})")));
        }
        let class = if self.groups[i] == self.groups[j] {
            self.intra_count += 1;
            EdgeClass::Intra
        } else {
            self.inter_count += 1;
            self.bridge[i] = true;
            self.bridge[j] = true;
            EdgeClass::Inter
        };
        self.edges.push(Edge { i, j, weight, class });
        self.sampler = None;
        Ok(())
    }

    pub fn set_class_weight(&mut self, class: EdgeClass, weight: f64) -> Result<()> {
        check_weight(weight)?;
        for e in self.edges.iter_mut().filter(|e| e.class == class) {
            e.weight = weight;
        }
        self.sampler = None;
        Ok(())
    }

    /// `Σ inter weights / Σ intra weights`.
    pub fn interaction_ratio(&self) -> Result<f64> {
        if self.intra_count == 0 {
            return Err(Error::UndefinedRatio("no intra-group edges".into()));
        }
        let sum = |c: EdgeClass| -> f64 { self.edges.iter().filter(|e| e.class == c).map(|e| e.weight).sum() };
        Ok(sum(EdgeClass::Inter) / sum(EdgeClass::Intra))
    }

    /// Draws an edge with probability proportional to its weight; the pair
    /// comes back in random order.
    pub fn sample_pair<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(usize, usize)> {
        if self.edges.is_empty() {
            return Err(Error::Empty("edge set"));
        }
        if self.sampler.is_none() {
            let w = WeightedIndex::new(self.edges.iter().map(|e| e.weight))
                .map_err(|e| Error::Config(format!("edge weights: {e}")))?;
            self.sampler = Some(w);
        }
        let e = self.edges[self.sampler.as_ref().unwrap().sample(rng)];
        Ok(if rng.gen_bool(0.5) { (e.i, e.j) } else { (e.j, e.i) })
    }

    /// Mutable access to two distinct agents.
    pub fn pair_mut(&mut self, i: usize, j: usize) -> (&mut AgentParams<T>, &mut AgentParams<T>) {
        assert_ne!(i, j, "a pair needs two distinct agents");
        if i < j {
            let (lo, hi) = self.agents.split_at_mut(j);
            (&mut lo[i], &mut hi[0])
        } else {
            let (lo, hi) = self.agents.split_at_mut(i);
            (&mut hi[0], &mut lo[j])
        }
    }

    /// Total games played by the agents, each counted once per participant.
    pub fn total_plays(&self) -> u64 {
        self.agents.iter().map(|a| a.plays).sum()
    }

    /// Total plays divided by the number of agents.
    pub fn plays_per_agent(&self) -> f64 {
        self.total_plays() as f64 / self.len().max(1) as f64
    }

    /// Disjoint union: `other`'s agents are appended and its groups renumbered
    /// after this graph's groups.
    pub fn union(mut self, other: CommunityGraph<T>) -> Self {
        let offset = self.len();
        let group_offset = self.num_groups();
        for (k, mut a) in other.agents.into_iter().enumerate() {
            a.id = offset + k;
            self.agents.push(a);
        }
        self.groups.extend(other.groups.iter().map(|g| g + group_offset));
        self.bridge.extend(other.bridge);
        self.edges.extend(other.edges.iter().map(|e| Edge {
            i: e.i + offset,
            j: e.j + offset,
            ..*e
        }));
        self.inter_count += other.inter_count;
        self.intra_count += other.intra_count;
        self.sampler = None;
        self
    }

    /// Recounts K and L from the edge list.
    pub fn recount(&self) -> (usize, usize) {
        let k = self.edges.iter().filter(|e| e.class == EdgeClass::Inter).count();
        (k, self.edges.len() - k)
    }

    /// Adds inter edges between every cross pair of the two agent sets
    /// independently with probability `p_inter`.
    fn connect<R: Rng + ?Sized>(&mut self, left: &[usize], right: &[usize], cfg: &ContactConfig, rng: &mut R) -> Result<usize> {
        let mut tries = 0;
        loop {
            let picked: Vec<(usize, usize)> = left
                .iter()
                .flat_map(|&i| right.iter().map(move |&j| (i, j)))
                .filter(|_| rng.gen_bool(cfg.p_inter))
                .collect();
            if picked.is_empty() && !left.is_empty() && !right.is_empty() {
                match cfg.on_empty {
                    EmptyContact::Error => return Err(Error::Config("contact drew no inter-group edges".into())),
                    EmptyContact::Allow => return Ok(0),
                    EmptyContact::Resample => {
                        tries += 1;
                        if cfg.p_inter == 0.0 || tries > 10_000 {
                            return Err(Error::Config(format!(
                                "contact drew no inter-group edges (p_inter = {})",
                                cfg.p_inter
                            )));
                        }
                        continue;
                    }
                }
            }
            for &(i, j) in &picked {
                self.add_edge(i, j, cfg.w_inter)?;
            }
            return Ok(picked.len());
        }
    }
}

impl<T: Scalar> CommunityGraph<T> {
    /// Fresh agents with Glorot initialisation, ids `0..n`.
    pub fn fresh_agents<R: Rng + ?Sized>(n: usize, cfg: &AgentConfig, rng: &mut R) -> Vec<AgentParams<T>> {
        (0..n).map(|i| AgentParams::init(i, cfg.clone(), rng)).collect()
    }
}

/// Every pair connected with weight `w`.
pub fn fully_connected<T: Scalar>(agents: Vec<AgentParams<T>>, w: f64) -> Result<CommunityGraph<T>> {
    if agents.is_empty() {
        return Err(Error::Config("a community needs at least one agent".into()));
    }
    check_weight(w)?;
    let mut g = CommunityGraph::isolated(agents);
    for (k, a) in g.agents.iter_mut().enumerate() {
        a.id = k;
    }
    for i in 0..g.len() {
        for j in i + 1..g.len() {
            g.add_edge(i, j, w)?;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmptyContact {
    /// Redraw until at least one inter edge exists.
    #[default]
    Resample,
    Error,
    Allow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    pub p_inter: f64,
    pub w_inter: f64,
    pub w_intra: f64,
    /// When set, every inter weight is replaced after the draw so that
    /// `K w_inter / (L w_intra)` equals this value.
    pub target_ratio: Option<f64>,
    pub on_empty: EmptyContact,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig {
            p_inter: 0.2,
            w_inter: 1.0,
            w_intra: 1.0,
            target_ratio: None,
            on_empty: EmptyContact::Resample,
        }
    }
}

impl ContactConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_inter) {
            return Err(Error::Config(format!("p_inter must lie in [0, 1], got {}", self.p_inter)));
        }
        check_weight(self.w_inter).map_err(|_| Error::Config(format!("w_inter must be positive, got {}", self.w_inter)))?;
        check_weight(self.w_intra).map_err(|_| Error::Config(format!("w_intra must be positive, got {}", self.w_intra)))?;
        if let Some(r) = self.target_ratio {
            check_weight(r).map_err(|_| Error::Config(format!("target_ratio must be positive, got {r}")))?;
        }
        Ok(())
    }
}

fn finish_contact<T: Scalar>(g: &mut CommunityGraph<T>, cfg: &ContactConfig) -> Result<()> {
    g.set_class_weight(EdgeClass::Intra, cfg.w_intra)?;
    if let (Some(ratio), k) = (cfg.target_ratio, g.k()) {
        if k > 0 && g.l() > 0 {
            let w = ratio * g.l() as f64 * cfg.w_intra / k as f64;
            g.set_class_weight(EdgeClass::Inter, w)?;
        }
    }
    Ok(())
}

/// Joins two communities: each cross pair becomes an inter edge with
/// probability `p_inter` and weight `w_inter`; intra edges get `w_intra`.
pub fn contact_merge<T: Scalar, R: Rng + ?Sized>(
    g1: CommunityGraph<T>,
    g2: CommunityGraph<T>,
    cfg: &ContactConfig,
    rng: &mut R,
) -> Result<CommunityGraph<T>> {
    cfg.validate()?;
    let left: Vec<usize> = (0..g1.len()).collect();
    let right: Vec<usize> = (g1.len()..g1.len() + g2.len()).collect();
    let mut g = g1.union(g2);
    g.connect(&left, &right, cfg, rng)?;
    finish_contact(&mut g, cfg)?;
    Ok(g)
}

fn union_all<T: Scalar>(communities: Vec<CommunityGraph<T>>) -> Result<(CommunityGraph<T>, Vec<Vec<usize>>)> {
    if communities.len() < 2 {
        return Err(Error::Config("at least two communities are required".into()));
    }
    let mut members = Vec::with_capacity(communities.len());
    let mut it = communities.into_iter();
    let mut g = it.next().unwrap();
    members.push((0..g.len()).collect());
    for c in it {
        let start = g.len();
        members.push((start..start + c.len()).collect());
        g = g.union(c);
    }
    Ok((g, members))
}

/// Contact between consecutive communities only.
pub fn chain<T: Scalar, R: Rng + ?Sized>(
    communities: Vec<CommunityGraph<T>>,
    cfg: &ContactConfig,
    rng: &mut R,
) -> Result<CommunityGraph<T>> {
    cfg.validate()?;
    let (mut g, members) = union_all(communities)?;
    for w in members.windows(2) {
        g.connect(&w[0], &w[1], cfg, rng)?;
    }
    finish_contact(&mut g, cfg)?;
    Ok(g)
}

/// Contact between every pair of communities.
pub fn dense<T: Scalar, R: Rng + ?Sized>(
    communities: Vec<CommunityGraph<T>>,
    cfg: &ContactConfig,
    rng: &mut R,
) -> Result<CommunityGraph<T>> {
    cfg.validate()?;
    let (mut g, members) = union_all(communities)?;
    for a in 0..members.len() {
        for b in a + 1..members.len() {
            g.connect(&members[a], &members[b], cfg, rng)?;
        }
    }
    finish_contact(&mut g, cfg)?;
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub game: GameConfig,
    pub optimizer: OptimizerConfig,
    /// Evaluation cadence in plays per agent; 0 disables periodic ticks.
    pub eval_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            game: GameConfig::default(),
            optimizer: OptimizerConfig::default(),
            eval_every: 5_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.game.validate()?;
        self.optimizer.validate()
    }
}

/// One optimizer step of the training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    /// Plays per agent over the whole graph after this step.
    pub plays_per_agent: f64,
    pub i: usize,
    pub j: usize,
    pub report: StepReport,
}

/// Callbacks of the training loop.
pub trait Hooks<T: Scalar> {
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }

    /// Called every `eval_every` plays per agent of the stage, with the stage's
    /// plays per agent so far.
    fn on_tick(&mut self, _graph: &CommunityGraph<T>, _stage_plays_per_agent: u64) -> Result<()> {
        Ok(())
    }
}

/// Hooks that do nothing.
pub struct NoHooks;

impl<T: Scalar> Hooks<T> for NoHooks {}

/// Trains until every agent has played, on average, `plays_per_agent` more
/// games. Each step samples a pair by edge weight and plays one minibatch.
pub fn run_training<T: Scalar, H: Hooks<T> + ?Sized, R: Rng + ?Sized>(
    graph: &mut CommunityGraph<T>,
    data: &TrainingSet,
    plays_per_agent: u64,
    cfg: &TrainConfig,
    hooks: &mut H,
    rng: &mut R,
) -> Result<u64> {
    cfg.validate()?;
    if plays_per_agent == 0 {
        return Ok(0);
    }
    if graph.edges.is_empty() {
        return Err(Error::Empty("edge set"));
    }
    let n = graph.len() as u64;
    let batch = cfg.optimizer.batch_size as u64;
    let budget = plays_per_agent * n;
    let mut stage_plays = 0u64;
    let mut next_tick = cfg.eval_every;
    let mut steps = 0u64;
    while stage_plays < budget {
        let (i, j) = graph.sample_pair(rng)?;
        let inputs = data.draw_batch::<T, _>(batch as usize, rng)?;
        let (a, b) = graph.pair_mut(i, j);
        let report = train_step(a, b, &inputs, &cfg.game, &cfg.optimizer, rng)?;
        steps += 1;
        stage_plays += 2 * batch;
        hooks.on_step(&StepRecord {
            step: steps,
            plays_per_agent: graph.plays_per_agent(),
            i,
            j,
            report,
        })?;
        while cfg.eval_every > 0 && stage_plays >= next_tick * n {
            hooks.on_tick(graph, next_tick)?;
            next_tick += cfg.eval_every;
        }
    }
    Ok(steps)
}
