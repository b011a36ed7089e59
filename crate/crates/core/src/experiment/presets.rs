use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::community::{ContactConfig, TrainConfig};
use crate::error::{Error, Result};
use crate::experiment::config::{DataConfig, ExperimentConfig, Stage};
use crate::game::{GameConfig, RewardMode};
use crate::nn::OptimizerConfig;
use crate::worldgen::GenConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Seconds; for checking that a schedule runs end to end.
    Smoke,
    /// Minutes on one CPU.
    Desk,
    /// The full budgets.
    Full,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::Smoke, Scale::Desk, Scale::Full];

    pub fn name(self) -> &'static str {
        match self {
            Scale::Smoke => "smoke",
            Scale::Desk => "desk",
            Scale::Full => "full",
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scale::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scale `{s}` (expected smoke, desk or full)")))
    }
}

struct Budget {
    n_train: usize,
    n_eval: usize,
    eval_examples: Option<usize>,
    learning_rate: f64,
    plays: u64,
    pretrain: u64,
    seeds: Vec<u64>,
    eval_every: u64,
    max_community: usize,
}

fn budget(scale: Scale) -> Budget {
    match scale {
        Scale::Smoke => Budget {
            n_train: 60,
            n_eval: 30,
            eval_examples: Some(20),
            learning_rate: 3e-3,
            plays: 128,
            pretrain: 128,
            seeds: vec![0],
            eval_every: 64,
            max_community: 2,
        },
        Scale::Desk => Budget {
            n_train: 500,
            n_eval: 1000,
            eval_examples: None,
            learning_rate: 3e-3,
            plays: 30_000,
            pretrain: 20_000,
            seeds: vec![0, 1, 2],
            eval_every: 5_000,
            max_community: 5,
        },
        Scale::Full => Budget {
            n_train: 5000,
            n_eval: 1000,
            eval_examples: None,
            learning_rate: 1e-4,
            plays: 200_000,
            pretrain: 200_000,
            seeds: vec![0, 1, 2, 3, 4],
            eval_every: 5_000,
            max_community: usize::MAX,
        },
    }
}

pub struct PresetInfo {
    pub name: &'static str,
    pub description: &'static str,
}

pub const PRESETS: &[PresetInfo] = &[
    PresetInfo {
        name: "symmetry-n2",
        description: "two agents trained together; cross-play rises, self-play stays near chance",
    },
    PresetInfo {
        name: "symmetry-n3",
        description: "three fully-connected agents; self-play tracks cross-play",
    },
    PresetInfo {
        name: "symmetry-n5",
        description: "five fully-connected agents",
    },
    PresetInfo {
        name: "reward-self-after",
        description: "three agents, reward = own correctness after the exchange",
    },
    PresetInfo {
        name: "reward-shared-after",
        description: "three agents, reward = both agents' correctness after the exchange",
    },
    PresetInfo {
        name: "reward-improvement",
        description: "three agents, reward = both agents' gain from before to after the exchange",
    },
    PresetInfo {
        name: "contact-10-10",
        description: "two pretrained communities of equal size brought into contact (snapshots L1_0, L2_0)",
    },
    PresetInfo {
        name: "contact-10-2",
        description: "a large and a small pretrained community brought into contact",
    },
    PresetInfo {
        name: "continuum-5-5-10-5-5",
        description: "five pretrained communities chained consecutively",
    },
    PresetInfo {
        name: "dense-5x5",
        description: "five pretrained communities, every pair in contact",
    },
];

fn contact() -> ContactConfig {
    ContactConfig {
        p_inter: 0.2,
        w_inter: 1.0,
        w_intra: 1.0,
        target_ratio: Some(1.0),
        ..ContactConfig::default()
    }
}

fn symmetry(b: &Budget, n: usize) -> Vec<Stage> {
    vec![
        Stage::Build {
            community: "C1".into(),
            size: n,
            weight: 1.0,
        },
        Stage::Train {
            community: "C1".into(),
            plays_per_agent: b.plays,
        },
        Stage::Evaluate {
            community: "C1".into(),
            label: "final".into(),
            historical: vec![],
            complexity: true,
        },
    ]
}

/// Pretrains each community alone, evaluates and snapshots it, joins them
/// with `join`, then trains and evaluates the joined community.
fn contact_schedule(b: &Budget, sizes: &[usize], join: fn(String, Vec<String>, ContactConfig) -> Stage) -> Vec<Stage> {
    let names: Vec<String> = (1..=sizes.len()).map(|k| format!("C{k}")).collect();
    let labels: Vec<String> = (1..=sizes.len()).map(|k| format!("L{k}_0")).collect();
    let mut stages = Vec::new();
    for (name, &size) in names.iter().zip(sizes) {
        stages.push(Stage::Build {
            community: name.clone(),
            size: size.min(b.max_community),
            weight: 1.0,
        });
    }
    for (name, label) in names.iter().zip(&labels) {
        stages.push(Stage::Train {
            community: name.clone(),
            plays_per_agent: b.pretrain,
        });
        stages.push(Stage::Evaluate {
            community: name.clone(),
            label: format!("{name}_pre"),
            historical: vec![],
            complexity: true,
        });
        stages.push(Stage::Snapshot {
            community: name.clone(),
            label: label.clone(),
        });
    }
    stages.push(join("M".into(), names, contact()));
    stages.push(Stage::Train {
        community: "M".into(),
        plays_per_agent: b.pretrain,
    });
    stages.push(Stage::Evaluate {
        community: "M".into(),
        label: "final".into(),
        historical: labels,
        complexity: true,
    });
    stages
}

/// The configuration of a named preset at a scale.
pub fn preset(name: &str, scale: Scale) -> Result<ExperimentConfig> {
    let b = budget(scale);
    let mut reward_mode = RewardMode::Improvement;
    let merge = |into, sources, contact| Stage::Merge { into, sources, contact };
    let chain = |into, sources, contact| Stage::Chain { into, sources, contact };
    let dense = |into, sources, contact| Stage::Dense { into, sources, contact };
    let stages = match name {
        "symmetry-n2" => symmetry(&b, 2),
        "symmetry-n3" => symmetry(&b, 3),
        "symmetry-n5" => symmetry(&b, 5.min(b.max_community.max(3))),
        "reward-self-after" | "reward-shared-after" | "reward-improvement" => {
            reward_mode = match name {
                "reward-self-after" => RewardMode::SelfAfter,
                "reward-shared-after" => RewardMode::SharedAfter,
                _ => RewardMode::Improvement,
            };
            symmetry(&b, 3)
        }
        "contact-10-10" => contact_schedule(&b, &[10, 10], merge),
        "contact-10-2" => contact_schedule(&b, &[10, 2], merge),
        "continuum-5-5-10-5-5" => {
            let sizes: &[usize] = if scale == Scale::Desk { &[3, 3, 5, 3, 3] } else { &[5, 5, 10, 5, 5] };
            contact_schedule(&b, sizes, chain)
        }
        "dense-5x5" => {
            let size = if scale == Scale::Desk { 3 } else { 5 };
            contact_schedule(&b, &[size; 5], dense)
        }
        _ => {
            let known: Vec<&str> = PRESETS.iter().map(|p| p.name).collect();
            return Err(Error::Config(format!("unknown preset `{name}`; known: {}", known.join(", "))));
        }
    };
    let cfg = ExperimentConfig {
        name: format!("{name}-{scale}"),
        seeds: b.seeds,
        data: DataConfig {
            generate: GenConfig {
                n_train: b.n_train,
                n_eval_in_domain: b.n_eval,
                n_eval_out_of_domain: b.n_eval,
                ..GenConfig::default()
            },
            eval_examples: b.eval_examples,
            ..DataConfig::default()
        },
        train: TrainConfig {
            game: GameConfig {
                reward_mode,
                ..GameConfig::default()
            },
            optimizer: OptimizerConfig {
                learning_rate: b.learning_rate,
                ..OptimizerConfig::default()
            },
            eval_every: b.eval_every,
        },
        stages,
        ..ExperimentConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}
