mod common;

use std::collections::HashMap;

use emcomm::community::{
    chain, contact_merge, dense, fully_connected, run_training, CommunityGraph, ContactConfig, EdgeClass, EmptyContact,
    Hooks, StepRecord, TrainConfig,
};
use emcomm::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn community(n: usize, seed: u64) -> CommunityGraph<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    fully_connected(CommunityGraph::fresh_agents(n, &common::small_config(), &mut rng), 1.0).unwrap()
}

#[test]
fn fully_connected_counts() {
    let g = community(5, 0);
    assert_eq!(g.l(), 10);
    assert_eq!(g.k(), 0);
    assert!(g.bridge_flags().iter().all(|&b| !b));
    assert!(matches!(g.interaction_ratio(), Ok(r) if r == 0.0));
}

#[test]
fn ratio_undefined_without_intra_edges() {
    let g = community(1, 0);
    assert!(matches!(g.interaction_ratio(), Err(Error::UndefinedRatio(_))));
}

#[test]
fn sampled_pair_frequencies_follow_weights() {
    let mut g = CommunityGraph::isolated(CommunityGraph::<f64>::fresh_agents(3, &common::small_config(), &mut ChaCha8Rng::seed_from_u64(1)));
    g.add_edge(0, 1, 1.0).unwrap();
    g.add_edge(1, 2, 3.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 40_000;
    let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
    let mut first_low = 0;
    for _ in 0..n {
        let (i, j) = g.sample_pair(&mut rng).unwrap();
        first_low += (i < j) as usize;
        *counts.entry((i.min(j), i.max(j))).or_default() += 1;
    }
    let f01 = counts[&(0, 1)] as f64 / n as f64;
    // binomial sd is about 0.002
    assert!((f01 - 0.25).abs() < 0.01, "{f01}");
    let order = first_low as f64 / n as f64;
    assert!((order - 0.5).abs() < 0.01, "{order}");
}

#[test]
fn inter_edge_count_is_binomial() {
    let cfg = ContactConfig {
        p_inter: 0.3,
        on_empty: EmptyContact::Allow,
        ..ContactConfig::default()
    };
    let trials = 400;
    let mut ks = Vec::new();
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + t);
        let g = contact_merge(community(4, 0), community(5, 1), &cfg, &mut rng).unwrap();
        ks.push(g.k() as f64);
    }
    let mean = ks.iter().sum::<f64>() / trials as f64;
    let var = ks.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let (n, p) = (20.0, 0.3);
    assert!((mean - n * p).abs() < 4.0 * (n * p * (1.0 - p) / trials as f64).sqrt(), "mean {mean}");
    assert!((var / (n * p * (1.0 - p)) - 1.0).abs() < 0.25, "var {var}");
}

#[test]
fn full_contact_of_two_tens() {
    let cfg = ContactConfig {
        p_inter: 1.0,
        ..ContactConfig::default()
    };
    let g = contact_merge(community(10, 0), community(10, 1), &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!((g.k(), g.l()), (100, 90));
    assert_eq!(g.recount(), (100, 90));
    assert_eq!(g.interaction_ratio().unwrap(), 100.0 / 90.0);
    assert!(g.bridge_flags().iter().all(|&b| b));
    assert_eq!(g.num_groups(), 2);
    assert_eq!(g.members(1), (10..20).collect::<Vec<_>>());
    assert!(g.agents.iter().enumerate().all(|(k, a)| a.id == k));
}

#[test]
fn target_ratio_rescales_inter_weights() {
    let cfg = ContactConfig {
        p_inter: 0.5,
        w_intra: 2.0,
        target_ratio: Some(1.0),
        ..ContactConfig::default()
    };
    let g = contact_merge(community(4, 0), community(3, 1), &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert!((g.interaction_ratio().unwrap() - 1.0).abs() < 1e-12);
    assert!(g.edges().iter().filter(|e| e.class == EdgeClass::Intra).all(|e| e.weight == 2.0));
}

#[test]
fn empty_contact_policies() {
    let mut cfg = ContactConfig {
        p_inter: 0.0,
        on_empty: EmptyContact::Error,
        ..ContactConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(contact_merge(community(2, 0), community(2, 1), &cfg, &mut rng).is_err());
    cfg.on_empty = EmptyContact::Allow;
    let g = contact_merge(community(2, 0), community(2, 1), &cfg, &mut rng).unwrap();
    assert_eq!(g.k(), 0);
    assert!(g.bridge_flags().iter().all(|&b| !b));
    cfg.on_empty = EmptyContact::Resample;
    cfg.p_inter = 0.01;
    let g = contact_merge(community(2, 0), community(2, 1), &cfg, &mut rng).unwrap();
    assert!(g.k() >= 1);
}

#[test]
fn chain_connects_only_neighbours() {
    let cfg = ContactConfig {
        p_inter: 1.0,
        ..ContactConfig::default()
    };
    let parts = (0..4).map(|s| community(2, s)).collect();
    let g = chain(parts, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let groups = g.groups().to_vec();
    for e in g.edges().iter().filter(|e| e.class == EdgeClass::Inter) {
        assert_eq!(groups[e.i].abs_diff(groups[e.j]), 1);
    }
    assert_eq!(g.k(), 3 * 4);
    let g = dense((0..4).map(|s| community(2, s)).collect(), &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(g.k(), 6 * 4);
}

#[test]
fn invalid_contact_is_rejected() {
    let cfg = ContactConfig {
        p_inter: 1.5,
        ..ContactConfig::default()
    };
    assert!(contact_merge(community(2, 0), community(2, 1), &cfg, &mut ChaCha8Rng::seed_from_u64(0))
        .unwrap_err()
        .is_config());
    let mut g = community(3, 0);
    assert!(g.add_edge(0, 0, 1.0).is_err());
    assert!(g.add_edge(0, 1, 1.0).is_err());
    assert!(g.add_edge(0, 7, 1.0).is_err());
    assert!(fully_connected::<f64>(vec![], 1.0).is_err());
}

#[test]
fn from_parts_restores_graph() {
    let cfg = ContactConfig {
        p_inter: 0.5,
        ..ContactConfig::default()
    };
    let g = contact_merge(community(3, 0), community(3, 1), &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let h = CommunityGraph::from_parts(g.agents.clone(), g.groups().to_vec(), g.edges()).unwrap();
    assert_eq!(h.edges(), g.edges());
    assert_eq!(h.bridge_flags(), g.bridge_flags());
    assert_eq!((h.k(), h.l()), (g.k(), g.l()));
}

struct Count {
    steps: u64,
    ticks: Vec<u64>,
}

impl Hooks<f64> for Count {
    fn on_step(&mut self, _: &StepRecord) -> emcomm::Result<()> {
        self.steps += 1;
        Ok(())
    }

    fn on_tick(&mut self, _: &CommunityGraph<f64>, plays: u64) -> emcomm::Result<()> {
        self.ticks.push(plays);
        Ok(())
    }
}

#[test]
fn training_budget_and_ticks() {
    use emcomm::agent::{AgentConfig, Frontend, FrontendConfig};
    use emcomm::data::TrainingSet;
    use emcomm::worldgen::{build_splits_with, GenConfig};
    use std::sync::Arc;

    let gen = GenConfig {
        n_train: 20,
        n_eval_in_domain: 30,
        n_eval_out_of_domain: 30,
        ..GenConfig::default()
    };
    let splits = build_splits_with(3, &gen).unwrap();
    let fe = FrontendConfig {
        output_dim: 16,
        ..FrontendConfig::default()
    };
    let frontend = Arc::new(Frontend::from_config(&fe).unwrap());
    let data = TrainingSet::new(splits.train.clone(), frontend, splits.config.cut_range).unwrap();
    let acfg = AgentConfig {
        image_features: 16,
        ..common::small_config()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = fully_connected(CommunityGraph::<f64>::fresh_agents(3, &acfg, &mut rng), 1.0).unwrap();
    let mut cfg = TrainConfig::default();
    cfg.optimizer.batch_size = 4;
    cfg.eval_every = 8;
    let mut hooks = Count { steps: 0, ticks: vec![] };
    let steps = run_training(&mut g, &data, 16, &cfg, &mut hooks, &mut rng).unwrap();
    // 48 plays at 8 per step
    assert_eq!(steps, 6);
    assert_eq!(hooks.steps, 6);
    assert_eq!(hooks.ticks, vec![8, 16]);
    assert_eq!(g.total_plays(), 48);
    assert_eq!(g.plays_per_agent(), 16.0);
}

proptest! {
    #[test]
    fn recount_matches_incremental_counts(n1 in 1usize..6, n2 in 1usize..6, p in 0.0f64..=1.0, seed in 0u64..1000) {
        let cfg = ContactConfig { p_inter: p, on_empty: EmptyContact::Allow, ..ContactConfig::default() };
        let g = contact_merge(community(n1, 0), community(n2, 1), &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(g.recount(), (g.k(), g.l()));
        prop_assert_eq!(g.l(), n1 * (n1 - 1) / 2 + n2 * (n2 - 1) / 2);
        prop_assert!(g.k() <= n1 * n2);
        for (a, &b) in g.bridge_flags().iter().enumerate() {
            let touches = g.edges().iter().any(|e| e.class == EdgeClass::Inter && (e.i == a || e.j == a));
            prop_assert_eq!(b, touches);
        }
    }
}
