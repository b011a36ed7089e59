use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{load_agent, load_snapshot, save_agent, save_snapshot, Frontend, ProtocolSnapshot};
use crate::community::{chain, contact_merge, dense, fully_connected, run_training, CommunityGraph, Edge, Hooks, StepRecord};
use crate::data::{EvalSet, TrainingSet};
use crate::error::{Error, Result};
use crate::evaluation::{
    historical_self_play, plays_to_threshold, protocol_complexity, success_matrix, Diagonal, EvalTick, SuccessMatrix,
    ThresholdRecord,
};
use crate::experiment::config::{ExperimentConfig, Stage};
use crate::report::{heatmap_svg, line_chart_svg, matrix_rows, num, write_csv_file, MATRIX_HEADER};
use crate::worldgen::dataset::derive_seed;
use crate::worldgen::{build_splits_with, DatasetSplits};
use crate::Agent;

const PROGRESS_VERSION: u32 = 1;
const RUN_STREAM: u64 = 0x7E11;
const EVAL_STREAM: u64 = 0xE7A1;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub resume: bool,
    pub plot: bool,
    pub parallel_eval: bool,
    /// Stop every seed after this many stages; a later resume continues.
    pub stop_after: Option<usize>,
}

/// Measurements of one evaluate stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub label: String,
    pub community: String,
    pub plays_per_agent: f64,
    pub self_play: f64,
    pub cross_play: f64,
    pub complexity: Option<f64>,
    pub historical: BTreeMap<String, f64>,
    pub community_matrix: Option<SuccessMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageThresholds {
    pub stage: usize,
    pub community: String,
    pub records: Vec<ThresholdRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedResults {
    pub seed: u64,
    pub evaluations: Vec<EvalResult>,
    pub thresholds: Vec<StageThresholds>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanResult {
    pub self_play: f64,
    pub cross_play: f64,
    pub complexity: Option<f64>,
    pub historical: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub config_hash: String,
    pub seeds: Vec<SeedResults>,
    /// Seed means per evaluation label.
    pub mean: BTreeMap<String, MeanResult>,
}

impl RunSummary {
    pub fn evaluation(&self, label: &str) -> Option<&MeanResult> {
        self.mean.get(label)
    }
}

struct Community {
    name: String,
    uids: Vec<String>,
    group_names: Vec<String>,
    graph: CommunityGraph<f64>,
}

impl Community {
    fn groups(&self) -> Vec<Vec<usize>> {
        (0..self.graph.num_groups()).map(|g| self.graph.members(g)).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct CommunityState {
    name: String,
    uids: Vec<String>,
    group_names: Vec<String>,
    groups: Vec<usize>,
    edges: Vec<Edge>,
}

#[derive(Serialize, Deserialize)]
struct Progress {
    version: u32,
    config_hash: String,
    completed: usize,
    rng: ChaCha8Rng,
    communities: Vec<CommunityState>,
    snapshots: Vec<(String, Vec<String>)>,
    results: SeedResults,
}

struct SeedRun<'a> {
    cfg: &'a ExperimentConfig,
    opts: &'a RunOptions,
    hash: String,
    dir: PathBuf,
    rng: ChaCha8Rng,
    communities: Vec<Community>,
    snapshots: Vec<(String, Vec<String>, Vec<ProtocolSnapshot<f64>>)>,
    results: SeedResults,
    train: TrainingSet,
    eval: EvalSet<f64>,
}

fn load_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<DatasetSplits> {
    match &cfg.data.path {
        Some(p) => {
            let f = fs::File::open(p).map_err(|e| Error::Config(format!("data.path {}: {e}", p.display())))?;
            DatasetSplits::read_manifest(BufReader::new(f))
        }
        None => build_splits_with(cfg.data.seed.unwrap_or(seed), &cfg.data.generate),
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs every seed of an experiment into `opts.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    let hash = cfg.hash();
    fs::create_dir_all(&opts.out_dir)?;
    fs::write(opts.out_dir.join("resolved_config.toml"), cfg.to_toml()?)?;
    let frontend = Arc::new(Frontend::from_config(&cfg.frontend)?);
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let t = Instant::now();
        let res = run_seed(cfg, opts, &hash, seed, frontend.clone())?;
        log::info!("seed {seed} finished in {:.1?}", t.elapsed());
        seeds.push(res);
    }
    let mut means = BTreeMap::new();
    if let Some(first) = seeds.first() {
        for (k, e) in first.evaluations.iter().enumerate() {
            let all: Vec<&EvalResult> = seeds.iter().map(|s| &s.evaluations[k]).collect();
            let complexity = if all.iter().all(|r| r.complexity.is_some()) {
                Some(mean(all.iter().map(|r| r.complexity.unwrap())))
            } else {
                None
            };
            let historical = e
                .historical
                .keys()
                .map(|h| (h.clone(), mean(all.iter().map(|r| r.historical[h]))))
                .collect();
            means.insert(
                e.label.clone(),
                MeanResult {
                    self_play: mean(all.iter().map(|r| r.self_play)),
                    cross_play: mean(all.iter().map(|r| r.cross_play)),
                    complexity,
                    historical,
                },
            );
        }
    }
    let summary = RunSummary {
        name: cfg.name.clone(),
        config_hash: hash,
        seeds,
        mean: means,
    };
    fs::write(opts.out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

fn run_seed(cfg: &ExperimentConfig, opts: &RunOptions, hash: &str, seed: u64, frontend: Arc<Frontend>) -> Result<SeedResults> {
    let dir = opts.out_dir.join(format!("seed-{seed}"));
    fs::create_dir_all(&dir)?;
    let data = load_dataset(cfg, seed)?;
    let cut = data.config.cut_range;
    let train = TrainingSet::new(data.train.clone(), frontend.clone(), cut)?;
    let eval_examples = data.split(cfg.data.eval_split.split());
    let eval_examples = match cfg.data.eval_examples {
        Some(n) => &eval_examples[..n.min(eval_examples.len())],
        None => eval_examples,
    };
    let eval = EvalSet::new(eval_examples, &frontend, cut, derive_seed(seed, EVAL_STREAM, 0))?;
    let mut run = SeedRun {
        cfg,
        opts,
        hash: hash.to_string(),
        dir,
        rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, RUN_STREAM, 0)),
        communities: Vec::new(),
        snapshots: Vec::new(),
        results: SeedResults {
            seed,
            ..SeedResults::default()
        },
        train,
        eval,
    };
    let start = if opts.resume { run.restore()? } else { 0 };
    let end = opts.stop_after.map_or(cfg.stages.len(), |n| n.min(cfg.stages.len()));
    for k in start..end {
        let t = Instant::now();
        run.stage(k)?;
        run.save_progress(k + 1)?;
        log::info!("seed {seed} stage {k} ({}) done in {:.1?}", cfg.stages[k].kind(), t.elapsed());
    }
    if end < cfg.stages.len() {
        return Ok(run.results);
    }
    for c in &run.communities {
        let dir = run.dir.join("checkpoints").join(&c.name);
        fs::create_dir_all(&dir)?;
        for (uid, a) in c.uids.iter().zip(&c.graph.agents) {
            save_agent(&dir.join(format!("{uid}.ckpt")), a, None)?;
        }
    }
    fs::write(run.dir.join("summary.json"), serde_json::to_string_pretty(&run.results)?)?;
    Ok(run.results)
}

struct TickRecorder<'a> {
    eval: &'a EvalSet<f64>,
    uids: &'a [String],
    parallel: bool,
    complexity: bool,
    ticks: Vec<EvalTick>,
    tick_rows: Vec<Vec<String>>,
    matrix_rows: Vec<Vec<String>>,
    train_rows: Vec<Vec<String>>,
}

impl Hooks<f64> for TickRecorder<'_> {
    fn on_step(&mut self, r: &StepRecord) -> Result<()> {
        let l = &r.report.losses;
        let avg = |f: fn(&crate::game::LossRecord) -> f64| num((f(&l[0]) + f(&l[1])) / 2.0);
        self.train_rows.push(vec![
            r.step.to_string(),
            num(r.plays_per_agent),
            self.uids[r.i].clone(),
            self.uids[r.j].clone(),
            (r.report.skipped as u8).to_string(),
            num(r.report.success_rate),
            num((r.report.mean_reward[0] + r.report.mean_reward[1]) / 2.0),
            avg(|x| x.pred_before),
            avg(|x| x.pred_after),
            avg(|x| x.value),
            avg(|x| x.msg),
            avg(|x| x.entropy),
            avg(|x| x.total),
            num(r.report.message_entropy),
        ]);
        Ok(())
    }

    fn on_tick(&mut self, graph: &CommunityGraph<f64>, stage_plays: u64) -> Result<()> {
        let players: Vec<&Agent> = graph.agents.iter().collect();
        let m = success_matrix(&players, self.uids.to_vec(), self.eval, self.parallel)?;
        let complexity = if self.complexity {
            num(protocol_complexity(&players, self.eval)?.1)
        } else {
            String::new()
        };
        let plays = stage_plays as f64;
        self.tick_rows.push(vec![
            stage_plays.to_string(),
            num(graph.plays_per_agent()),
            num(m.self_play_mean()),
            num(m.cross_play_mean()),
            complexity,
        ]);
        for row in matrix_rows(&m) {
            let mut r = vec![stage_plays.to_string()];
            r.extend(row);
            self.matrix_rows.push(r);
        }
        log::info!(
            "  {stage_plays} plays/agent: self-play {:.3}, cross-play {:.3}",
            m.self_play_mean(),
            m.cross_play_mean()
        );
        self.ticks.push(EvalTick {
            plays_per_agent: plays,
            matrix: m,
        });
        Ok(())
    }
}

impl SeedRun<'_> {
    fn community_index(&self, name: &str) -> Result<usize> {
        self.communities
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::Config(format!("community `{name}` does not exist")))
    }

    fn take(&mut self, name: &str) -> Result<Community> {
        let k = self.community_index(name)?;
        Ok(self.communities.remove(k))
    }

    fn file(&self, stage: usize, what: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("stage{stage:02}_{what}.{ext}"))
    }

    fn csv(&self, stage: usize, what: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        write_csv_file(&self.file(stage, what, "csv"), &self.hash, header, rows)
    }

    fn stage(&mut self, k: usize) -> Result<()> {
        let stage = self.cfg.stages[k].clone();
        match stage {
            Stage::Build { community, size, weight } => {
                let agents = CommunityGraph::<f64>::fresh_agents(size, &self.cfg.agent, &mut self.rng);
                let graph = fully_connected(agents, weight)?;
                self.communities.push(Community {
                    uids: (0..size).map(|i| format!("{community}.{i}")).collect(),
                    group_names: vec![community.clone()],
                    name: community,
                    graph,
                });
            }
            Stage::Train {
                community,
                plays_per_agent,
            } => self.train_stage(k, &community, plays_per_agent)?,
            Stage::Snapshot { community, label } => {
                let c = &self.communities[self.community_index(&community)?];
                let dir = self.dir.join("snapshots").join(&label);
                fs::create_dir_all(&dir)?;
                let mut snaps = Vec::with_capacity(c.uids.len());
                for (uid, a) in c.uids.iter().zip(&c.graph.agents) {
                    let mut s = ProtocolSnapshot::capture(label.clone(), a);
                    s.agent.id = 0;
                    save_snapshot(&dir.join(format!("{uid}.ckpt")), &s)?;
                    snaps.push(s);
                }
                self.snapshots.push((label, c.uids.clone(), snaps));
            }
            Stage::Merge { into, sources, contact }
            | Stage::Chain { into, sources, contact }
            | Stage::Dense { into, sources, contact } => {
                let parts: Vec<Community> = sources.iter().map(|s| self.take(s)).collect::<Result<_>>()?;
                let mut uids = Vec::new();
                let mut group_names = Vec::new();
                let mut graphs = Vec::new();
                for p in parts {
                    uids.extend(p.uids);
                    group_names.extend(p.group_names);
                    graphs.push(p.graph);
                }
                let graph = match &self.cfg.stages[k] {
                    Stage::Merge { .. } => {
                        let g2 = graphs.pop().unwrap();
                        let g1 = graphs.pop().unwrap();
                        contact_merge(g1, g2, &contact, &mut self.rng)?
                    }
                    Stage::Chain { .. } => chain(graphs, &contact, &mut self.rng)?,
                    _ => dense(graphs, &contact, &mut self.rng)?,
                };
                let rows: Vec<Vec<String>> = graph
                    .edges()
                    .iter()
                    .map(|e| {
                        vec![
                            uids[e.i].clone(),
                            uids[e.j].clone(),
                            num(e.weight),
                            format!("{:?}", e.class).to_lowercase(),
                        ]
                    })
                    .collect();
                self.csv(k, &format!("edges_{into}"), &["i", "j", "weight", "class"], &rows)?;
                let bridges: Vec<Vec<String>> = uids
                    .iter()
                    .zip(graph.bridge_flags())
                    .map(|(u, &b)| vec![u.clone(), (b as u8).to_string()])
                    .collect();
                self.csv(k, &format!("bridges_{into}"), &["agent", "bridge"], &bridges)?;
                log::info!(
                    "  {into}: K = {}, L = {}, ratio = {:.4}",
                    graph.k(),
                    graph.l(),
                    graph.interaction_ratio().unwrap_or(f64::NAN)
                );
                self.communities.push(Community {
                    name: into,
                    uids,
                    group_names,
                    graph,
                });
            }
            Stage::Evaluate {
                community,
                label,
                historical,
                complexity,
            } => self.evaluate_stage(k, &community, &label, &historical, complexity)?,
        }
        Ok(())
    }

    fn train_stage(&mut self, k: usize, community: &str, plays: u64) -> Result<()> {
        let ci = self.community_index(community)?;
        let c = &mut self.communities[ci];
        let mut rec = TickRecorder {
            eval: &self.eval,
            uids: &c.uids,
            parallel: self.opts.parallel_eval,
            complexity: self.cfg.complexity_at_ticks,
            ticks: Vec::new(),
            tick_rows: Vec::new(),
            matrix_rows: Vec::new(),
            train_rows: Vec::new(),
        };
        run_training(&mut c.graph, &self.train, plays, &self.cfg.train, &mut rec, &mut self.rng)?;
        let TickRecorder {
            ticks,
            tick_rows,
            matrix_rows,
            train_rows,
            ..
        } = rec;
        let records: Vec<ThresholdRecord> = self.cfg.thresholds.iter().map(|&t| plays_to_threshold(&ticks, t)).collect();
        self.csv(
            k,
            "train_log",
            &[
                "step",
                "plays_per_agent",
                "i",
                "j",
                "skipped",
                "success_rate",
                "mean_reward",
                "loss_pred_before",
                "loss_pred_after",
                "loss_value",
                "loss_msg",
                "loss_entropy",
                "loss_total",
                "message_entropy",
            ],
            &train_rows,
        )?;
        self.csv(
            k,
            "ticks",
            &["stage_plays_per_agent", "plays_per_agent", "self_play", "cross_play", "complexity"],
            &tick_rows,
        )?;
        self.csv(
            k,
            "tick_matrices",
            &["stage_plays_per_agent", "i", "j", "rate", "n_examples"],
            &matrix_rows,
        )?;
        let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
        let rows: Vec<Vec<String>> = records
            .iter()
            .map(|r| vec![num(r.threshold), opt(r.first_pair), opt(r.all_pairs)])
            .collect();
        self.csv(k, "thresholds", &["threshold", "first_pair", "all_pairs"], &rows)?;
        if self.opts.plot && !tick_rows.is_empty() {
            let series = |col: usize| -> Vec<(f64, f64)> {
                tick_rows
                    .iter()
                    .filter(|r| !r[col].is_empty())
                    .map(|r| (r[0].parse().unwrap(), r[col].parse().unwrap()))
                    .collect()
            };
            let svg = line_chart_svg(
                &[("self-play".into(), series(2)), ("cross-play".into(), series(3))],
                &format!("{community}: success rate"),
                "plays per agent",
                "success rate",
            );
            fs::write(self.file(k, "ticks", "svg"), svg)?;
            if self.cfg.complexity_at_ticks {
                let svg = line_chart_svg(
                    &[("complexity".into(), series(4))],
                    &format!("{community}: protocol complexity"),
                    "plays per agent",
                    "entropy (nats)",
                );
                fs::write(self.file(k, "complexity", "svg"), svg)?;
            }
        }
        self.results.thresholds.push(StageThresholds {
            stage: k,
            community: community.to_string(),
            records,
        });
        Ok(())
    }

    fn evaluate_stage(&mut self, k: usize, community: &str, label: &str, historical: &[String], complexity: bool) -> Result<()> {
        let c = &self.communities[self.community_index(community)?];
        let players: Vec<&Agent> = c.graph.agents.iter().collect();
        let m = success_matrix(&players, c.uids.clone(), &self.eval, self.opts.parallel_eval)?;
        self.csv(k, &format!("matrix_{label}"), &MATRIX_HEADER, &matrix_rows(&m))?;
        let community_matrix = if c.graph.num_groups() > 1 {
            let mut cm = m.community_matrix(&c.groups(), Diagonal::CrossPairs);
            cm.labels = c.group_names.clone();
            self.csv(k, &format!("community_matrix_{label}"), &MATRIX_HEADER, &matrix_rows(&cm))?;
            let mut sp = m.community_matrix(&c.groups(), Diagonal::SelfPlay);
            sp.labels = c.group_names.clone();
            self.csv(k, &format!("community_matrix_selfdiag_{label}"), &MATRIX_HEADER, &matrix_rows(&sp))?;
            if self.opts.plot {
                fs::write(
                    self.file(k, &format!("community_matrix_{label}"), "svg"),
                    heatmap_svg(&cm, &format!("{label}: community success")),
                )?;
            }
            Some(cm)
        } else {
            None
        };
        if self.opts.plot {
            fs::write(
                self.file(k, &format!("matrix_{label}"), "svg"),
                heatmap_svg(&m, &format!("{label}: pair success")),
            )?;
        }
        let complexity = if complexity {
            let (per, mean) = protocol_complexity(&players, &self.eval)?;
            let rows: Vec<Vec<String>> = c.uids.iter().zip(&per).map(|(u, &x)| vec![u.clone(), num(x)]).collect();
            self.csv(k, &format!("complexity_{label}"), &["agent", "complexity"], &rows)?;
            Some(mean)
        } else {
            None
        };
        let mut hist = BTreeMap::new();
        let mut rows = Vec::new();
        for h in historical {
            let (_, snap_uids, snaps) = self
                .snapshots
                .iter()
                .find(|(l, _, _)| l == h)
                .ok_or_else(|| Error::Config(format!("snapshot `{h}` was not taken")))?;
            let mut rates = Vec::new();
            // each frozen agent plays against its own current version
            for (uid, snap) in snap_uids.iter().zip(snaps) {
                if let Some(pos) = c.uids.iter().position(|u| u == uid) {
                    let r = historical_self_play(snap, &c.graph.agents[pos], &self.eval)?;
                    rows.push(vec![h.clone(), uid.clone(), num(r)]);
                    rates.push(r);
                }
            }
            if rates.is_empty() {
                return Err(Error::Config(format!("no agent of `{community}` appears in snapshot `{h}`")));
            }
            hist.insert(h.clone(), mean(rates));
        }
        if !historical.is_empty() {
            self.csv(k, &format!("historical_{label}"), &["snapshot", "agent", "rate"], &rows)?;
        }
        self.results.evaluations.push(EvalResult {
            label: label.to_string(),
            community: community.to_string(),
            plays_per_agent: c.graph.plays_per_agent(),
            self_play: m.self_play_mean(),
            cross_play: m.cross_play_mean(),
            complexity,
            historical: hist,
            community_matrix,
        });
        Ok(())
    }

    fn save_progress(&self, completed: usize) -> Result<()> {
        let state = self.dir.join("state");
        let agents = state.join("agents");
        fs::create_dir_all(&agents)?;
        let mut communities = Vec::new();
        for c in &self.communities {
            for (uid, a) in c.uids.iter().zip(&c.graph.agents) {
                save_agent(&agents.join(format!("{uid}.ckpt")), a, None)?;
            }
            communities.push(CommunityState {
                name: c.name.clone(),
                uids: c.uids.clone(),
                group_names: c.group_names.clone(),
                groups: c.graph.groups().to_vec(),
                edges: c.graph.edges().to_vec(),
            });
        }
        let progress = Progress {
            version: PROGRESS_VERSION,
            config_hash: self.hash.clone(),
            completed,
            rng: self.rng.clone(),
            communities,
            snapshots: self.snapshots.iter().map(|(l, u, _)| (l.clone(), u.clone())).collect(),
            results: self.results.clone(),
        };
        let tmp = state.join("progress.json.tmp");
        fs::write(&tmp, serde_json::to_vec(&progress)?)?;
        fs::rename(tmp, state.join("progress.json"))?;
        Ok(())
    }

    /// Loads saved progress; returns the first stage still to run.
    fn restore(&mut self) -> Result<usize> {
        let path = self.dir.join("state").join("progress.json");
        if !path.exists() {
            return Ok(0);
        }
        let progress: Progress = serde_json::from_slice(&fs::read(&path)?)?;
        if progress.version != PROGRESS_VERSION {
            return Err(Error::FormatVersion {
                expected: PROGRESS_VERSION,
                found: progress.version,
            });
        }
        if progress.config_hash != self.hash {
            return Err(Error::Config(format!(
                "{} was written by a different configuration; rerun without resume",
                self.dir.display()
            )));
        }
        let agents_dir = self.dir.join("state").join("agents");
        for cs in progress.communities {
            let mut agents = Vec::with_capacity(cs.uids.len());
            for (k, uid) in cs.uids.iter().enumerate() {
                let (mut a, _) = load_agent::<f64>(&agents_dir.join(format!("{uid}.ckpt")))?;
                a.id = k;
                agents.push(a);
            }
            let graph = CommunityGraph::from_parts(agents, cs.groups, &cs.edges)?;
            self.communities.push(Community {
                name: cs.name,
                uids: cs.uids,
                group_names: cs.group_names,
                graph,
            });
        }
        for (label, uids) in progress.snapshots {
            let dir = self.dir.join("snapshots").join(&label);
            let snaps = uids
                .iter()
                .map(|u| load_snapshot::<f64>(&dir.join(format!("{u}.ckpt"))))
                .collect::<Result<Vec<_>>>()?;
            self.snapshots.push((label, uids, snaps));
        }
        self.rng = progress.rng;
        self.results = progress.results;
        log::info!("resuming {} at stage {}", self.dir.display(), progress.completed);
        Ok(progress.completed)
    }
}

/// Convenience for tests and tools: the run directory of one seed.
pub fn seed_dir(out_dir: &Path, seed: u64) -> PathBuf {
    out_dir.join(format!("seed-{seed}"))
}
