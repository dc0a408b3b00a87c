//! Policy gradient, optimizer and search-loop behaviour.

use effrank_core::agent::*;
use effrank_core::ansatz::TokenSequence;
use effrank_core::data::make_dataset;
use effrank_core::error::Result;
use effrank_core::fisher::RankSettings;
use effrank_core::quantum::MeasurementProtocol;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config() -> PolicyConfig {
    PolicyConfig {
        vocab: 4,
        max_len: 3,
        embed_dim: 8,
        layers: 1,
        heads: 2,
        ff_dim: 16,
    }
}

fn batch_of(seqs: &[(Vec<usize>, Vec<f64>)]) -> Vec<(&[usize], &[f64])> {
    seqs.iter().map(|(s, r)| (s.as_slice(), r.as_slice())).collect()
}

fn random_batch(vocab: usize, len: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<(Vec<usize>, Vec<f64>)> {
    (0..count)
        .map(|_| {
            let mut s = vec![0];
            s.extend((1..len).map(|_| rng.random_range(0..vocab)));
            let r = (1..len).map(|_| rng.random_range(0..5) as f64).collect();
            (s, r)
        })
        .collect()
}

fn assert_gradient_matches(policy: &Policy, batch: &[(&[usize], &[f64])]) {
    let (_, grad) = policy.policy_loss(batch).unwrap();
    let h = 1e-5;
    let mut probe = policy.clone();
    let mut worst: f64 = 0.0;
    for i in 0..policy.param_count() {
        let x = policy.params()[i];
        probe.params_mut()[i] = x + h;
        let plus = probe.policy_loss(batch).unwrap().0;
        probe.params_mut()[i] = x - h;
        let minus = probe.policy_loss(batch).unwrap().0;
        probe.params_mut()[i] = x;
        let fd = (plus - minus) / (2.0 * h);
        let err = (grad[i] - fd).abs();
        let scale = grad[i].abs().max(fd.abs());
        if err > 1e-9 {
            worst = worst.max(err / scale);
        }
    }
    assert!(worst < 1e-4, "worst relative error {worst:e}");
}

#[test]
fn tiny_agent_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..3 {
        let policy = Policy::new(tiny_config(), seed).unwrap();
        let data = random_batch(4, 3, 5, &mut rng);
        assert_gradient_matches(&policy, &batch_of(&data));
    }
}

#[test]
fn two_layer_gradients_match_finite_differences() {
    let cfg = PolicyConfig {
        vocab: 9,
        max_len: 5,
        embed_dim: 8,
        layers: 2,
        heads: 4,
        ff_dim: 12,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let policy = Policy::new(cfg, 1).unwrap();
    let data = random_batch(9, 5, 3, &mut rng);
    assert_gradient_matches(&policy, &batch_of(&data));
}

#[test]
fn zero_rewards_give_zero_loss_and_gradient() {
    let policy = Policy::new(tiny_config(), 0).unwrap();
    let data = vec![(vec![0, 1, 3], vec![0.0, 0.0]), (vec![0, 2, 2], vec![0.0, 0.0])];
    let (loss, grad) = policy.policy_loss(&batch_of(&data)).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grad.iter().all(|&g| g == 0.0));
}

#[test]
fn duplicating_the_batch_keeps_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let policy = Policy::new(tiny_config(), 2).unwrap();
    let data = random_batch(4, 3, 4, &mut rng);
    let mut doubled = data.clone();
    doubled.extend(data.clone());
    let (a, ga) = policy.policy_loss(&batch_of(&data)).unwrap();
    let (b, gb) = policy.policy_loss(&batch_of(&doubled)).unwrap();
    assert!((a - b).abs() < 1e-14 * a.abs().max(1.0));
    for (x, y) in ga.iter().zip(&gb) {
        assert!((x - y).abs() < 1e-13);
    }
}

#[test]
fn loss_rejects_malformed_batches() {
    let policy = Policy::new(tiny_config(), 0).unwrap();
    let seq = [0usize, 1, 2];
    assert!(policy.policy_loss(&[]).is_err());
    assert!(policy.policy_loss(&[(&seq, &[1.0])]).is_err());
    assert!(policy.policy_loss(&[(&[0, 1, 9], &[1.0, 1.0])]).is_err());
    assert!(policy.policy_loss(&[(&seq, &[1.0, 1.0]), (&[0, 1], &[1.0])]).is_err());
}

#[test]
fn loss_decreases_on_a_frozen_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut policy = Policy::new(PolicyConfig::new(9, 10), 3).unwrap();
    let data: Vec<_> = random_batch(9, 10, 8, &mut rng)
        .into_iter()
        .map(|(s, r)| (s, r.into_iter().map(|x| x + 1.0).collect::<Vec<_>>()))
        .collect();
    let batch = batch_of(&data);
    let cfg = AdamConfig::default();
    let mut adam = AdamState::new(policy.param_count());
    let first = policy.policy_loss(&batch).unwrap().0;
    let mut last = first;
    for _ in 0..50 {
        let (loss, grad) = policy.policy_loss(&batch).unwrap();
        last = loss;
        adam_step(policy.params_mut(), &grad, &mut adam, &cfg).unwrap();
    }
    assert!(first > 0.0);
    assert!(last < 0.8 * first, "{first} -> {last}");
}

#[test]
fn sampling_is_deterministic_and_starts_at_zero() {
    let policy = Policy::new(PolicyConfig::new(9, 10), 0).unwrap();
    let a = sample_sequence(&policy, 3, 10, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = sample_sequence(&policy, 3, 10, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.tokens()[0], 0);
    assert_eq!(a.len(), 10);
    assert!(a.tokens().iter().all(|&t| t < 9));
    assert!(sample_sequence(&policy, 2, 10, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
}

#[test]
fn one_hot_logits_give_the_argmax_sequence() {
    let target = [0usize, 5, 2, 7, 7, 1];
    let seq = sample_with(3, target.len(), &mut ChaCha8Rng::seed_from_u64(9), |prefix| {
        let mut logits = vec![f64::NEG_INFINITY; 9];
        logits[target[prefix.len()]] = 0.0;
        Ok(logits)
    })
    .unwrap();
    assert_eq!(seq.tokens(), &target);
}

/// κ stand-in: number of distinct tokens in the prefix.
struct Distinct(usize);

impl Evaluator for Distinct {
    fn qubits(&self) -> usize {
        self.0
    }

    fn kappa(&self, tokens: &[usize]) -> Result<usize> {
        let mut t = tokens.to_vec();
        t.sort_unstable();
        t.dedup();
        Ok(t.len())
    }
}

fn rl_evaluator() -> KappaEvaluator {
    KappaEvaluator {
        dataset: make_dataset(3, 20, 0).unwrap(),
        protocol: "Z".parse::<MeasurementProtocol>().unwrap(),
        settings: RankSettings::default(),
    }
}

#[test]
fn prefix_rewards_are_bounded_and_cached() {
    let eval = rl_evaluator();
    let mut cache = RewardCache::new();
    // Three single-qubit gates stacked on qubit 0.
    let seq = TokenSequence::new(3, vec![0, 0, 0, 1]).unwrap();
    let r = prefix_rewards(&seq, &eval, &mut cache).unwrap();
    assert_eq!(r.len(), 3);
    assert!(r[0] <= 3.0);
    assert!(r.iter().all(|&x| x >= 0.0 && x <= 63.0 && x.fract() == 0.0));
    let evals = cache.evaluations();
    assert_eq!(evals, 3);
    let again = prefix_rewards(&seq, &eval, &mut cache).unwrap();
    assert_eq!(r, again);
    assert_eq!(cache.evaluations(), evals);
    for l in 2..=4 {
        let fresh = eval.kappa(&seq.tokens()[..l]).unwrap();
        assert_eq!(cache.get(&seq.tokens()[..l]), Some(fresh));
    }
    let wrong = TokenSequence::new(2, vec![0, 1]).unwrap();
    assert!(prefix_rewards(&wrong, &eval, &mut cache).is_err());
}

fn small_search(seed: u64) -> SearchConfig {
    SearchConfig {
        qubits: 2,
        length: 4,
        max_rounds: 12,
        threshold: usize::MAX,
        embed_dim: 8,
        layers: 1,
        heads: 2,
        ff_dim: 8,
        batch_size: 8,
        seed,
        ..SearchConfig::default()
    }
}

#[test]
fn round_records_track_running_max_and_score() {
    let out = run_search(small_search(1), &Distinct(2)).unwrap();
    assert_eq!(out.log.len(), 12);
    let mut running = 0;
    for (i, rec) in out.log.iter().enumerate() {
        assert_eq!(rec.round, i + 1);
        assert_eq!(rec.sequences.len(), 10);
        assert!(rec.kappa_max_running >= running);
        running = rec.kappa_max_running;
        assert_eq!(rec.max_kappa_round, *rec.kappas.iter().max().unwrap());
        assert!(rec.loss.is_some());
        for (seq, r) in rec.sequences.iter().zip(&rec.rewards) {
            assert_eq!(seq.tokens()[0], 0);
            assert_eq!(r.len(), 3);
        }
    }
    let means: Vec<f64> = out.log.iter().map(|r| r.mean_kappa).collect();
    let first_ten = means[..10].iter().sum::<f64>() / 10.0;
    assert!((out.log[9].score - first_ten).abs() < 1e-12);
    let next = means[2..12].iter().sum::<f64>() / 10.0;
    assert!((out.log[11].score - next).abs() < 1e-12);
    assert_eq!(out.best_kappa, running);
    assert_eq!(Distinct(2).kappa(out.best.tokens()).unwrap(), out.best_kappa);
}

#[test]
fn first_round_uses_uniform_sequences() {
    let mut state = SearchState::new(small_search(3)).unwrap();
    let rec = state.train_round(&Distinct(2)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let _policy_seed: u64 = rng.random();
    for seq in &rec.sequences {
        assert_eq!(seq, &random_sequence(2, 4, &mut rng).unwrap());
    }
}

#[test]
fn zero_threshold_stops_after_one_round() {
    let cfg = SearchConfig {
        threshold: 0,
        ..small_search(0)
    };
    let out = run_search(cfg, &Distinct(2)).unwrap();
    assert_eq!(out.log.len(), 1);
    assert!(out.reached_threshold);
}

#[test]
fn searches_are_reproducible_and_resumable() {
    let eval = Distinct(2);
    let full = run_search(small_search(5), &eval).unwrap();
    assert_eq!(full, run_search(small_search(5), &eval).unwrap());

    let mut state = SearchState::new(small_search(5)).unwrap();
    for _ in 0..5 {
        state.train_round(&eval).unwrap();
    }
    let snap = state.snapshot();
    let mut resumed = SearchState::restore(small_search(5), snap.clone()).unwrap();
    assert_eq!(resumed.snapshot(), snap);
    let tail = run_search_with(&mut resumed, &eval, |_, _| Ok::<(), effrank_core::Error>(())).unwrap();
    assert_eq!(tail.log, full.log[5..]);
    assert_eq!(resumed.policy().params(), {
        let mut s = SearchState::new(small_search(5)).unwrap();
        run_search_with(&mut s, &eval, |_, _| Ok::<(), effrank_core::Error>(())).unwrap();
        s.policy().params().to_vec()
    });
}

#[test]
fn policy_learns_a_simple_reward() {
    // Reward favours token 3; the trained policy should emit it more often.
    struct Likes3;
    impl Evaluator for Likes3 {
        fn qubits(&self) -> usize {
            2
        }
        fn kappa(&self, tokens: &[usize]) -> Result<usize> {
            Ok(tokens.iter().filter(|&&t| t == 3).count())
        }
    }
    let cfg = SearchConfig {
        max_rounds: 40,
        adam: AdamConfig {
            lr: 3e-3,
            ..AdamConfig::default()
        },
        ..small_search(2)
    };
    let out = run_search(cfg, &Likes3).unwrap();
    let early = out.log[0].mean_kappa;
    let late: f64 = out.log[30..].iter().map(|r| r.mean_kappa).sum::<f64>() / 10.0;
    assert!(late > early + 0.5, "{early} -> {late}");
}

#[test]
fn random_search_respects_the_budget() {
    let cfg = RandomSearchConfig {
        max_evaluations: Some(25),
        threshold: usize::MAX,
        ..RandomSearchConfig::matching(&small_search(8))
    };
    let out = random_search(&cfg, &Distinct(2)).unwrap();
    assert!(out.evaluations <= 25);
    let mut running = 0;
    for rec in &out.log {
        assert!(rec.kappa_max_running >= running);
        running = rec.kappa_max_running;
        assert!(rec.loss.is_none());
        assert!(rec.sequences.iter().all(|s| s.tokens()[0] == 0));
    }
    assert_eq!(out, random_search(&cfg, &Distinct(2)).unwrap());
    let unlimited = RandomSearchConfig {
        max_evaluations: None,
        ..cfg
    };
    assert_eq!(random_search(&unlimited, &Distinct(2)).unwrap().log.len(), 12);
}
