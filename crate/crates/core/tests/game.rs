mod common;

use common::{perturbed_agent, random_captions, random_input, small_config};
use emcomm::agent::{AgentParams, Mode};
use emcomm::game::{
    check_player_gradients, compute_rewards, message_log_prob, play, play_ordered, player_loss, train_step,
    GameConfig, GameOutcome, PlayerOutcome, RewardMode,
};
use emcomm::agent::Message;
use emcomm::nn::OptimizerConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn outcome(before: [bool; 2], after: [bool; 2]) -> GameOutcome<f64> {
    let player = |b: bool, a: bool| PlayerOutcome {
        guess_before: if b { 0 } else { 1 },
        guess_after: if a { 0 } else { 1 },
        belief_before: vec![],
        belief_after: vec![],
        message: Message::blank(8),
        value: 0.0,
    };
    GameOutcome {
        correct: 0,
        first_speaker: 0,
        players: [player(before[0], after[0]), player(before[1], after[1])],
        success: after[0] && after[1],
    }
}

#[test]
fn reward_table() {
    let imp = RewardMode::Improvement;
    assert_eq!(compute_rewards(&outcome([false, false], [true, true]), imp), [2.0, 2.0]);
    assert_eq!(compute_rewards(&outcome([true, true], [true, true]), imp), [0.0, 0.0]);
    assert_eq!(compute_rewards(&outcome([true, true], [false, true]), imp), [-1.0, -1.0]);
    assert_eq!(compute_rewards(&outcome([false, true], [true, true]), RewardMode::SharedAfter), [2.0, 2.0]);
    assert_eq!(compute_rewards(&outcome([false, true], [true, false]), RewardMode::SelfAfter), [1.0, 0.0]);
}

#[test]
fn improvement_reward_flips_under_time_reversal() {
    for bits in 0..16u8 {
        let b = [bits & 1 != 0, bits & 2 != 0];
        let a = [bits & 4 != 0, bits & 8 != 0];
        let fwd = compute_rewards(&outcome(b, a), RewardMode::Improvement);
        let rev = compute_rewards(&outcome(a, b), RewardMode::Improvement);
        assert_eq!(fwd[0], -rev[0]);
        assert!((-2.0..=2.0).contains(&fwd[0]));
        if a[0] && a[1] {
            assert_eq!(compute_rewards(&outcome(b, a), RewardMode::SharedAfter), [2.0, 2.0]);
        }
    }
}

#[test]
fn half_probabilities_give_closed_form_terms() {
    let p = [0.5f64; 8];
    let ln2 = std::f64::consts::LN_2;
    for m in [[0u8; 8], [1; 8], [1, 0, 1, 1, 0, 0, 1, 0]] {
        assert!((message_log_prob(&p, &m) + 8.0 * ln2).abs() < 1e-12);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = small_config();
    let mut a = AgentParams::<f64>::init(0, cfg.clone(), &mut rng);
    a.w_v2.values.iter_mut().for_each(|v| *v = 0.0);
    let caps = random_captions(10, 20, &mut rng);
    let input = random_input(&caps, cfg.image_features, &mut rng);
    let b = a.clone();
    let game = play_ordered(&a, &b, &input, 0, Mode::Train, None, &mut rng).unwrap();
    let (rec, _) = player_loss(&game.episodes[0], &game.outcome.players[0].message.bits, input.correct, 0.0, &GameConfig::default()).unwrap();
    assert!((rec.entropy + 8.0 * ln2).abs() < 1e-12);
    // zero value head and zero reward: no value or message loss
    assert_eq!(rec.value, 0.0);
    assert_eq!(rec.msg, 0.0);
}

#[test]
fn eval_self_play_is_repeatable() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = small_config();
    let a = perturbed_agent(0, cfg.clone(), 0.3, &mut rng);
    let caps = random_captions(10, 20, &mut rng);
    for _ in 0..20 {
        let mut input = random_input(&caps, cfg.image_features, &mut rng);
        input.features[1] = input.features[0].clone();
        let seed = rng.gen();
        let g1 = play(&a, &a, &input, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let g2 = play(&a, &a, &input, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let [p, q] = &g1.outcome.players;
        assert_eq!(p.guess_before, q.guess_before);
        assert_eq!(g1.outcome.success, p.guess_after == input.correct && q.guess_after == input.correct);
        assert_eq!(p.belief_after, g2.outcome.players[0].belief_after);
        assert_eq!(g1.outcome.first_speaker, g2.outcome.first_speaker);
    }
}

#[test]
fn full_loss_gradients_match_finite_differences() {
    let cfg = small_config();
    for seed in 0..6 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut a = perturbed_agent(0, cfg.clone(), 0.3, &mut rng);
        let b = perturbed_agent(1, cfg.clone(), 0.3, &mut rng);
        let caps = random_captions(10, 20, &mut rng);
        let input = random_input(&caps, cfg.image_features, &mut rng);
        let bits = [0, 1].map(|_| (0..8).map(|_| rng.gen_range(0..2u8)).collect::<Vec<_>>());
        let reward = rng.gen_range(-2..=2) as f64;
        let first = (seed % 2) as usize;
        let report = check_player_gradients(&mut a, &b, &input, first, &bits, reward, &GameConfig::default(), 1e-3, None, &mut rng).unwrap();
        let worst = report.worst().unwrap();
        assert!(report.passes(1e-5), "seed {seed}: {worst:?}");
    }
}

#[test]
fn raw_score_sender_gradients_match_finite_differences() {
    let mut cfg = small_config();
    cfg.sender_weights = emcomm::agent::SenderWeights::RawScores;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut a = perturbed_agent(0, cfg.clone(), 0.3, &mut rng);
    let b = perturbed_agent(1, cfg.clone(), 0.3, &mut rng);
    let caps = random_captions(10, 20, &mut rng);
    let input = random_input(&caps, cfg.image_features, &mut rng);
    let bits = [vec![1, 0, 1, 0, 0, 1, 1, 0], vec![0, 0, 1, 1, 0, 1, 0, 1]];
    let report = check_player_gradients(&mut a, &b, &input, 1, &bits, 1.0, &GameConfig::default(), 1e-3, None, &mut rng).unwrap();
    assert!(report.passes(1e-5), "{:?}", report.worst());
}

#[test]
fn message_gradient_is_the_reinforce_estimator() {
    // only the message term: dL/dp_l = -(r - V)(m_l - p_l) / (p_l (1 - p_l))
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = small_config();
    let a = perturbed_agent(0, cfg.clone(), 0.3, &mut rng);
    let caps = random_captions(10, 20, &mut rng);
    let input = random_input(&caps, cfg.image_features, &mut rng);
    let game = play_ordered(&a, &a, &input, 0, Mode::Train, None, &mut rng).unwrap();
    let gcfg = GameConfig {
        alpha_pred: 0.0,
        alpha_value: 0.0,
        alpha_entropy: 0.0,
        ..GameConfig::default()
    };
    let bits = &game.outcome.players[0].message.bits;
    let (_, grads) = player_loss(&game.episodes[0], bits, input.correct, 1.5, &gcfg).unwrap();
    let send = game.episodes[0].send.as_ref().unwrap();
    for l in 0..8 {
        let p = send.probs[l];
        let m = bits[l] as f64;
        let expect = -(1.5 - send.value) * (m - p) / (p * (1.0 - p));
        assert!((grads.probs[l] - expect).abs() <= 1e-12 * expect.abs().max(1.0));
    }
}

#[test]
fn reinforce_step_raises_sampled_message_probability() {
    let cfg = small_config();
    let gcfg = GameConfig {
        alpha_pred: 0.0,
        alpha_value: 0.0,
        alpha_entropy: 0.0,
        ..GameConfig::default()
    };
    let opt = OptimizerConfig {
        learning_rate: 1e-3,
        batch_size: 1,
        ..OptimizerConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let mut a = perturbed_agent(0, cfg.clone(), 0.3, &mut rng);
        a.w_v2.values.iter_mut().for_each(|v| *v = 0.0);
        a.b_v2.values[0] = 0.0;
        let b = perturbed_agent(1, cfg.clone(), 0.3, &mut rng);
        let caps = random_captions(10, 20, &mut rng);
        let input = random_input(&caps, cfg.image_features, &mut rng);
        let first = rng.gen_range(0..2);
        let game = play_ordered(&a, &b, &input, first, Mode::Train, None, &mut rng).unwrap();
        let bits = [0, 1].map(|i| game.outcome.players[i].message.bits.clone());
        let before = message_log_prob(&game.outcome.players[0].message.probabilities, &bits[0]);
        let (_, grads) = player_loss(&game.episodes[0], &bits[0], input.correct, 1.0, &gcfg).unwrap();
        game.episodes[0].backward(&mut a, &grads);
        emcomm::nn::rmsprop_step(&mut a, &opt).unwrap();
        let again = play_ordered(&a, &b, &input, first, Mode::Train, Some(&bits), &mut rng).unwrap();
        let after = message_log_prob(&again.outcome.players[0].message.probabilities, &bits[0]);
        assert!(after > before, "{before} -> {after}");
    }
}

#[test]
fn supervised_only_training_overfits_a_fixed_batch() {
    let cfg = small_config();
    let gcfg = GameConfig {
        alpha_value: 0.0,
        alpha_msg: 0.0,
        alpha_entropy: 0.0,
        ..GameConfig::default()
    };
    let opt = OptimizerConfig {
        learning_rate: 1e-3,
        ..OptimizerConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut a = AgentParams::<f64>::init(0, cfg.clone(), &mut rng);
    let mut b = AgentParams::<f64>::init(1, cfg.clone(), &mut rng);
    let caps: Vec<Vec<Vec<u32>>> = (0..32).map(|_| random_captions(10, 20, &mut rng)).collect();
    let batch: Vec<_> = caps.iter().map(|c| random_input(c, cfg.image_features, &mut rng)).collect();
    let first = train_step(&mut a, &mut b, &batch, &gcfg, &opt, &mut rng).unwrap();
    let mut last = first.clone();
    for _ in 0..200 {
        last = train_step(&mut a, &mut b, &batch, &gcfg, &opt, &mut rng).unwrap();
        assert!(!last.skipped);
    }
    assert!(last.losses[0].total < 0.75 * first.losses[0].total, "{:?} -> {:?}", first.losses[0], last.losses[0]);
    assert_eq!(a.plays, 201 * 32);
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut a = perturbed_agent(0, cfg.clone(), 0.3, &mut rng);
    let mut b = perturbed_agent(1, cfg.clone(), 0.3, &mut rng);
    let (a0, b0) = (a.clone(), b.clone());
    let caps = random_captions(10, 20, &mut rng);
    let batch: Vec<_> = (0..4).map(|_| random_input(&caps, cfg.image_features, &mut rng)).collect();
    let opt = OptimizerConfig {
        learning_rate: 0.0,
        ..OptimizerConfig::default()
    };
    train_step(&mut a, &mut b, &batch, &GameConfig::default(), &opt, &mut rng).unwrap();
    for (x, y) in [(&a, &a0), (&b, &b0)] {
        assert_eq!(x.w_img.values, y.w_img.values);
        assert_eq!(x.gen_h.values, y.gen_h.values);
        assert_eq!(x.plays, 4);
    }
}

#[test]
fn non_finite_inputs_skip_the_step() {
    let cfg = small_config();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut a = perturbed_agent(0, cfg.clone(), 0.3, &mut rng);
    let mut b = perturbed_agent(1, cfg.clone(), 0.3, &mut rng);
    let caps = random_captions(10, 20, &mut rng);
    let input = random_input(&caps, cfg.image_features, &mut rng);
    a.b_v2.values[0] = f64::NAN;
    let a0 = a.clone();
    let report = train_step(&mut a, &mut b, &[input], &GameConfig::default(), &OptimizerConfig::default(), &mut rng).unwrap();
    assert!(report.skipped);
    assert_eq!(a.w_img.values, a0.w_img.values);
}

#[test]
fn rounds_other_than_one_are_rejected() {
    let cfg = GameConfig {
        rounds: 2,
        ..GameConfig::default()
    };
    assert!(cfg.validate().unwrap_err().is_config());
}
