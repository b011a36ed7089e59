use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{AgentConfig, FrontendConfig};
use crate::community::{ContactConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::worldgen::{GenConfig, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    #[default]
    InDomain,
    OutOfDomain,
}

impl EvalSplit {
    pub fn split(self) -> Split {
        match self {
            EvalSplit::InDomain => Split::EvalInDomain,
            EvalSplit::OutOfDomain => Split::EvalOutOfDomain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Dataset seed; the run seed when absent.
    pub seed: Option<u64>,
    /// A manifest written by `gen-data`, used instead of generating.
    pub path: Option<PathBuf>,
    pub generate: GenConfig,
    pub eval_split: EvalSplit,
    /// Use only the first `n` examples of the evaluation split.
    pub eval_examples: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            seed: None,
            path: None,
            generate: GenConfig::default(),
            eval_split: EvalSplit::InDomain,
            eval_examples: None,
        }
    }
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

/// One step of an experiment schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Stage {
    /// A new fully-connected community of fresh agents.
    Build {
        community: String,
        size: usize,
        #[serde(default = "one")]
        weight: f64,
    },
    Train {
        community: String,
        plays_per_agent: u64,
    },
    /// Freezes every agent of a community under `label`.
    Snapshot { community: String, label: String },
    /// Contact between two communities; the sources are consumed.
    Merge {
        into: String,
        sources: Vec<String>,
        contact: ContactConfig,
    },
    /// Contact between consecutive sources only.
    Chain {
        into: String,
        sources: Vec<String>,
        contact: ContactConfig,
    },
    /// Contact between every pair of sources.
    Dense {
        into: String,
        sources: Vec<String>,
        contact: ContactConfig,
    },
    Evaluate {
        community: String,
        label: String,
        /// Snapshot labels to play against the current agents.
        #[serde(default)]
        historical: Vec<String>,
        #[serde(default = "yes")]
        complexity: bool,
    },
}

impl Stage {
    pub fn kind(&self) -> &'static str {
        match self {
            Stage::Build { .. } => "build",
            Stage::Train { .. } => "train",
            Stage::Snapshot { .. } => "snapshot",
            Stage::Merge { .. } => "merge",
            Stage::Chain { .. } => "chain",
            Stage::Dense { .. } => "dense",
            Stage::Evaluate { .. } => "evaluate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    pub frontend: FrontendConfig,
    pub agent: AgentConfig,
    pub train: TrainConfig,
    /// Success-rate thresholds reported for every training stage.
    pub thresholds: Vec<f64>,
    /// Also measure protocol complexity at every evaluation tick.
    pub complexity_at_ticks: bool,
    pub stages: Vec<Stage>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "experiment".into(),
            seeds: vec![0],
            data: DataConfig::default(),
            frontend: FrontendConfig::default(),
            agent: AgentConfig::default(),
            train: TrainConfig::default(),
            thresholds: vec![0.7, 0.75],
            complexity_at_ticks: true,
            stages: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks every field and the stage sequence; all problems are reported
    /// together.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let mut check = |field: &str, r: Result<()>| {
            if let Err(e) = r {
                problems.push(format!("{field}: {e}"));
            }
        };
        check("data.generate", self.data.generate.validate());
        check("agent", self.agent.validate());
        check("train", self.train.validate());
        if self.frontend.output_dim != self.agent.image_features {
            problems.push(format!(
                "frontend.output_dim ({}) must equal agent.image_features ({})",
                self.frontend.output_dim, self.agent.image_features
            ));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            problems.push(format!("name: `{}` is not a valid directory name", self.name));
        }
        if self.seeds.is_empty() {
            problems.push("seeds: at least one seed is required".into());
        }
        let unique: BTreeSet<_> = self.seeds.iter().collect();
        if unique.len() != self.seeds.len() {
            problems.push("seeds: duplicates".into());
        }
        if let Some(0) = self.data.eval_examples {
            problems.push("data.eval_examples: must be positive".into());
        }
        for t in &self.thresholds {
            if !(0.0..=1.0).contains(t) {
                problems.push(format!("thresholds: {t} outside [0, 1]"));
            }
        }
        if self.stages.is_empty() {
            problems.push("stages: empty schedule".into());
        }

        let mut live: BTreeSet<String> = BTreeSet::new();
        let mut used_names: BTreeSet<String> = BTreeSet::new();
        let mut snapshots: BTreeSet<String> = BTreeSet::new();
        let mut labels: BTreeSet<String> = BTreeSet::new();
        for (k, stage) in self.stages.iter().enumerate() {
            let at = format!("stages[{k}] ({})", stage.kind());
            let need = |name: &String, problems: &mut Vec<String>| {
                if !live.contains(name) {
                    problems.push(format!("{at}: community `{name}` does not exist at this point"));
                }
            };
            match stage {
                Stage::Build { community, size, weight } => {
                    if *size == 0 {
                        problems.push(format!("{at}: size must be at least 1"));
                    }
                    if !(*weight > 0.0 && weight.is_finite()) {
                        problems.push(format!("{at}: weight must be positive"));
                    }
                    if !used_names.insert(community.clone()) {
                        problems.push(format!("{at}: community name `{community}` already used"));
                    }
                    live.insert(community.clone());
                }
                Stage::Train { community, .. } => need(community, &mut problems),
                Stage::Snapshot { community, label } => {
                    need(community, &mut problems);
                    if !labels.insert(label.clone()) {
                        problems.push(format!("{at}: label `{label}` is not unique"));
                    }
                    snapshots.insert(label.clone());
                }
                Stage::Merge { into, sources, contact }
                | Stage::Chain { into, sources, contact }
                | Stage::Dense { into, sources, contact } => {
                    let expected_two = matches!(stage, Stage::Merge { .. });
                    if expected_two && sources.len() != 2 {
                        problems.push(format!("{at}: merge takes exactly two sources"));
                    }
                    if sources.len() < 2 {
                        problems.push(format!("{at}: at least two sources are required"));
                    }
                    let distinct: BTreeSet<_> = sources.iter().collect();
                    if distinct.len() != sources.len() {
                        problems.push(format!("{at}: repeated source"));
                    }
                    for s in sources {
                        need(s, &mut problems);
                    }
                    if let Err(e) = contact.validate() {
                        problems.push(format!("{at}: contact: {e}"));
                    }
                    for s in sources {
                        live.remove(s);
                    }
                    if !used_names.insert(into.clone()) {
                        problems.push(format!("{at}: community name `{into}` already used"));
                    }
                    live.insert(into.clone());
                }
                Stage::Evaluate {
                    community,
                    label,
                    historical,
                    ..
                } => {
                    need(community, &mut problems);
                    if !labels.insert(label.clone()) {
                        problems.push(format!("{at}: label `{label}` is not unique"));
                    }
                    for h in historical {
                        if !snapshots.contains(h) {
                            problems.push(format!("{at}: snapshot `{h}` is not taken before this stage"));
                        }
                    }
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}
