//! Policy-gradient architecture search with prefix effective-rank rewards,
//! and the uniform random-search baseline.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::transformer::{softmax, Policy, PolicyConfig};
use crate::ansatz::{decode_token_slice, TokenSequence};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::fisher::{effective_rank, RankSettings};
use crate::quantum::MeasurementProtocol;

/// Scores a token prefix.
pub trait Evaluator {
    fn qubits(&self) -> usize;
    fn kappa(&self, tokens: &[usize]) -> Result<usize>;
}

/// Effective rank of the decoded circuit on a fixed dataset and protocol.
#[derive(Clone, Debug)]
pub struct KappaEvaluator {
    pub dataset: Dataset,
    pub protocol: MeasurementProtocol,
    pub settings: RankSettings,
}

impl Evaluator for KappaEvaluator {
    fn qubits(&self) -> usize {
        self.dataset.qubits()
    }

    fn kappa(&self, tokens: &[usize]) -> Result<usize> {
        let circuit = decode_token_slice(self.dataset.qubits(), tokens)?;
        Ok(effective_rank(&circuit, &self.dataset, &self.protocol, &self.settings)?.kappa)
    }
}

/// Memo of κ by token prefix. `evaluations` counts cache misses.
#[derive(Clone, Debug, Default)]
pub struct RewardCache {
    map: BTreeMap<Vec<usize>, usize>,
    evaluations: u64,
}

impl RewardCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, tokens: &[usize]) -> Option<usize> {
        self.map.get(tokens).copied()
    }

    pub fn get_or_eval<E: Evaluator + ?Sized>(&mut self, tokens: &[usize], eval: &E) -> Result<usize> {
        if let Some(k) = self.map.get(tokens) {
            return Ok(*k);
        }
        let k = eval.kappa(tokens)?;
        self.evaluations += 1;
        self.map.insert(tokens.to_vec(), k);
        Ok(k)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }
}

/// κ of every prefix `a_1..a_l` for `l = 2..=L`, as rewards for positions
/// `2..=L`.
pub fn prefix_rewards<E: Evaluator + ?Sized>(
    seq: &TokenSequence,
    eval: &E,
    cache: &mut RewardCache,
) -> Result<Vec<f64>> {
    if seq.qubits() != eval.qubits() {
        return Err(Error::DimensionMismatch {
            expected: eval.qubits(),
            found: seq.qubits(),
        });
    }
    let tokens = seq.tokens();
    (2..=tokens.len())
        .map(|l| cache.get_or_eval(&tokens[..l], eval).map(|k| k as f64))
        .collect()
}

/// Draws `a_2..a_L` from `next_logits(prefix)` with `a_1 = 0`.
pub fn sample_with<R: Rng + ?Sized>(
    qubits: usize,
    len: usize,
    rng: &mut R,
    mut next_logits: impl FnMut(&[usize]) -> Result<Vec<f64>>,
) -> Result<TokenSequence> {
    if len == 0 {
        return Err(Error::InvalidArgument("sequence length must be positive".into()));
    }
    let mut tokens = Vec::with_capacity(len);
    tokens.push(0);
    while tokens.len() < len {
        let probs = softmax(&next_logits(&tokens)?);
        let dist = WeightedIndex::new(&probs)
            .map_err(|e| Error::InvalidArgument(alloc::format!("bad token distribution: {e}")))?;
        tokens.push(dist.sample(rng));
    }
    TokenSequence::new(qubits, tokens)
}

pub fn sample_sequence<R: Rng + ?Sized>(
    policy: &Policy,
    qubits: usize,
    len: usize,
    rng: &mut R,
) -> Result<TokenSequence> {
    if policy.config().vocab != qubits * qubits {
        return Err(Error::DimensionMismatch {
            expected: qubits * qubits,
            found: policy.config().vocab,
        });
    }
    sample_with(qubits, len, rng, |prefix| policy.logits(prefix))
}

/// Uniform tokens after `a_1 = 0`.
pub fn random_sequence<R: Rng + ?Sized>(qubits: usize, len: usize, rng: &mut R) -> Result<TokenSequence> {
    let vocab = qubits * qubits;
    let mut tokens = vec![0; len.max(1)];
    for t in tokens.iter_mut().skip(1) {
        *t = rng.random_range(0..vocab);
    }
    TokenSequence::new(qubits, tokens)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchConfig {
    pub qubits: usize,
    pub length: usize,
    pub samples_per_round: usize,
    pub max_rounds: usize,
    /// Stop once the running best κ reaches this.
    pub threshold: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub adam: AdamConfig,
    /// Rounds kept in the replay window.
    pub replay_rounds: usize,
    pub batch_size: usize,
    /// Passes over the replay window per round.
    pub epochs: usize,
    /// Subtract the round's mean reward before storing.
    pub baseline: bool,
    /// Rounds averaged into the score.
    pub score_window: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            qubits: 3,
            length: 10,
            samples_per_round: 10,
            max_rounds: 1000,
            threshold: 16,
            embed_dim: 64,
            layers: 2,
            heads: 4,
            ff_dim: 128,
            adam: AdamConfig::default(),
            replay_rounds: 50,
            batch_size: 32,
            epochs: 1,
            baseline: false,
            score_window: 10,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn policy_config(&self) -> PolicyConfig {
        PolicyConfig {
            vocab: self.qubits * self.qubits,
            max_len: self.length,
            embed_dim: self.embed_dim,
            layers: self.layers,
            heads: self.heads,
            ff_dim: self.ff_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if self.qubits == 0 {
            return bad("search needs at least one qubit");
        }
        if self.length < 2 {
            return bad("search sequences need length >= 2");
        }
        if self.samples_per_round == 0 || self.max_rounds == 0 {
            return bad("samples_per_round and max_rounds must be positive");
        }
        if self.replay_rounds == 0 || self.batch_size == 0 || self.score_window == 0 {
            return bad("replay_rounds, batch_size and score_window must be positive");
        }
        self.adam.validate()?;
        self.policy_config().validate()
    }
}

/// Summary of one search round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    pub sequences: Vec<TokenSequence>,
    /// Prefix rewards per sequence, as scored (before any baseline).
    pub rewards: Vec<Vec<f64>>,
    /// κ of each full sequence.
    pub kappas: Vec<usize>,
    pub mean_kappa: f64,
    pub max_kappa_round: usize,
    pub kappa_max_running: usize,
    /// Mean of `mean_kappa` over the trailing score window.
    pub score: f64,
    /// Mean minibatch loss; `None` when no update ran.
    pub loss: Option<f64>,
    /// Cumulative κ evaluations.
    pub evaluations: u64,
}

/// Serializable generator position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Everything needed to resume a search bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSnapshot {
    pub policy: Vec<f64>,
    pub adam: AdamState,
    pub rng: RngState,
    pub round: usize,
    pub kappa_max: usize,
    pub best: Option<TokenSequence>,
    pub recent_means: Vec<f64>,
    /// Replay window, oldest round first; each entry is (tokens, stored rewards).
    pub replay: Vec<Vec<(Vec<usize>, Vec<f64>)>>,
    /// Cached prefix scores in key order.
    pub cache: Vec<(Vec<usize>, usize)>,
    pub evaluations: u64,
}

type ReplayRound = Vec<(Vec<usize>, Vec<f64>)>;

pub struct SearchState {
    config: SearchConfig,
    policy: Policy,
    adam: AdamState,
    rng: ChaCha8Rng,
    replay: VecDeque<ReplayRound>,
    recent_means: VecDeque<f64>,
    round: usize,
    kappa_max: usize,
    best: Option<TokenSequence>,
    cache: RewardCache,
}

impl SearchState {
    pub fn new(config: SearchConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let policy = Policy::new(config.policy_config(), rng.random())?;
        let adam = AdamState::new(policy.param_count());
        Ok(Self {
            config,
            policy,
            adam,
            rng,
            replay: VecDeque::new(),
            recent_means: VecDeque::new(),
            round: 0,
            kappa_max: 0,
            best: None,
            cache: RewardCache::new(),
        })
    }

    pub fn restore(config: SearchConfig, snap: SearchSnapshot) -> Result<Self> {
        config.validate()?;
        let policy = Policy::from_params(config.policy_config(), snap.policy)?;
        if snap.adam.m.len() != policy.param_count() || snap.adam.v.len() != policy.param_count() {
            return Err(Error::ParamLength {
                expected: policy.param_count(),
                found: snap.adam.m.len(),
            });
        }
        if let Some(best) = &snap.best {
            if best.qubits() != config.qubits {
                return Err(Error::DimensionMismatch {
                    expected: config.qubits,
                    found: best.qubits(),
                });
            }
        }
        Ok(Self {
            config,
            policy,
            adam: snap.adam,
            rng: snap.rng.restore(),
            replay: snap.replay.into_iter().collect(),
            recent_means: snap.recent_means.into_iter().collect(),
            round: snap.round,
            kappa_max: snap.kappa_max,
            best: snap.best,
            cache: RewardCache {
                map: snap.cache.into_iter().collect(),
                evaluations: snap.evaluations,
            },
        })
    }

    pub fn snapshot(&self) -> SearchSnapshot {
        SearchSnapshot {
            policy: self.policy.params().to_vec(),
            adam: self.adam.clone(),
            rng: RngState::capture(&self.rng),
            round: self.round,
            kappa_max: self.kappa_max,
            best: self.best.clone(),
            recent_means: self.recent_means.iter().copied().collect(),
            replay: self.replay.iter().cloned().collect(),
            cache: self.cache.map.iter().map(|(k, v)| (k.clone(), *v)).collect(),
            evaluations: self.evaluations(),
        }
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn kappa_max(&self) -> usize {
        self.kappa_max
    }

    pub fn best(&self) -> Option<&TokenSequence> {
        self.best.as_ref()
    }

    pub fn evaluations(&self) -> u64 {
        self.cache.evaluations()
    }

    pub fn cache(&self) -> &RewardCache {
        &self.cache
    }

    /// Samples a round, scores it, and trains on the replay window.
    /// The first round draws uniformly random sequences.
    pub fn train_round<E: Evaluator + ?Sized>(&mut self, eval: &E) -> Result<RoundRecord> {
        let c = &self.config;
        if eval.qubits() != c.qubits {
            return Err(Error::DimensionMismatch {
                expected: c.qubits,
                found: eval.qubits(),
            });
        }
        let mut sequences = Vec::with_capacity(c.samples_per_round);
        for _ in 0..c.samples_per_round {
            let seq = if self.round == 0 {
                random_sequence(c.qubits, c.length, &mut self.rng)?
            } else {
                sample_sequence(&self.policy, c.qubits, c.length, &mut self.rng)?
            };
            sequences.push(seq);
        }
        let mut rewards = Vec::with_capacity(sequences.len());
        let mut kappas = Vec::with_capacity(sequences.len());
        for seq in &sequences {
            let r = prefix_rewards(seq, eval, &mut self.cache)?;
            kappas.push(*r.last().expect("length >= 2") as usize);
            rewards.push(r);
        }
        self.round += 1;
        let (max_round, argmax) = kappas
            .iter()
            .enumerate()
            .fold((0, 0), |(m, a), (i, &k)| if k > m { (k, i) } else { (m, a) });
        if max_round > self.kappa_max || self.best.is_none() {
            self.kappa_max = self.kappa_max.max(max_round);
            self.best = Some(sequences[argmax].clone());
        }
        let mean = kappas.iter().sum::<usize>() as f64 / kappas.len() as f64;
        self.recent_means.push_back(mean);
        while self.recent_means.len() > self.config.score_window {
            self.recent_means.pop_front();
        }
        let score = self.recent_means.iter().sum::<f64>() / self.recent_means.len() as f64;

        let stored = if self.config.baseline {
            let count = rewards.iter().map(Vec::len).sum::<usize>() as f64;
            let b = rewards.iter().flatten().sum::<f64>() / count;
            rewards.iter().map(|r| r.iter().map(|x| x - b).collect()).collect()
        } else {
            rewards.clone()
        };
        self.replay.push_back(
            sequences
                .iter()
                .map(|s| s.tokens().to_vec())
                .zip(stored)
                .collect(),
        );
        while self.replay.len() > self.config.replay_rounds {
            self.replay.pop_front();
        }
        let loss = self.train_on_window()?;

        Ok(RoundRecord {
            round: self.round,
            sequences,
            rewards,
            kappas,
            mean_kappa: mean,
            max_kappa_round: max_round,
            kappa_max_running: self.kappa_max,
            score,
            loss,
            evaluations: self.evaluations(),
        })
    }

    fn train_on_window(&mut self) -> Result<Option<f64>> {
        let items: Vec<(&[usize], &[f64])> = self
            .replay
            .iter()
            .flatten()
            .map(|(s, r)| (s.as_slice(), r.as_slice()))
            .collect();
        let mut order: Vec<usize> = (0..items.len()).collect();
        let mut total = 0.0;
        let mut steps = 0usize;
        for _ in 0..self.config.epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(self.config.batch_size) {
                let batch: Vec<_> = chunk.iter().map(|&i| items[i]).collect();
                let (loss, grad) = self.policy.policy_loss(&batch)?;
                adam_step(self.policy.params_mut(), &grad, &mut self.adam, &self.config.adam)?;
                total += loss;
                steps += 1;
            }
        }
        Ok((steps > 0).then(|| total / steps as f64))
    }
}

/// Result of a search run.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub best: TokenSequence,
    pub best_kappa: usize,
    pub log: Vec<RoundRecord>,
    /// Whether the threshold was met before the budget ran out.
    pub reached_threshold: bool,
    pub evaluations: u64,
}

/// Trains until the running best κ reaches the threshold or the round budget
/// is spent. `on_round` sees the state after every round; its errors abort
/// the run.
pub fn run_search_with<E, X>(
    state: &mut SearchState,
    eval: &E,
    mut on_round: impl FnMut(&SearchState, &RoundRecord) -> core::result::Result<(), X>,
) -> core::result::Result<SearchOutcome, X>
where
    E: Evaluator + ?Sized,
    X: From<Error>,
{
    let mut log = Vec::new();
    let threshold = state.config.threshold;
    while state.round < state.config.max_rounds && !(state.round > 0 && state.kappa_max >= threshold) {
        let rec = state.train_round(eval)?;
        on_round(state, &rec)?;
        log.push(rec);
    }
    let best = state
        .best
        .clone()
        .ok_or_else(|| Error::InvalidArgument("search ran no rounds".into()))?;
    Ok(SearchOutcome {
        best,
        best_kappa: state.kappa_max,
        log,
        reached_threshold: state.kappa_max >= threshold,
        evaluations: state.evaluations(),
    })
}

pub fn run_search<E: Evaluator + ?Sized>(config: SearchConfig, eval: &E) -> Result<SearchOutcome> {
    let mut state = SearchState::new(config)?;
    run_search_with(&mut state, eval, |_, _| Ok::<(), Error>(()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomSearchConfig {
    pub qubits: usize,
    pub length: usize,
    pub samples_per_round: usize,
    pub max_rounds: usize,
    /// Cap on κ evaluations; the run stops as soon as it is spent.
    pub max_evaluations: Option<u64>,
    pub threshold: usize,
    pub score_window: usize,
    pub seed: u64,
}

impl RandomSearchConfig {
    /// Same shape, budget and seed as an RL search.
    pub fn matching(rl: &SearchConfig) -> Self {
        Self {
            qubits: rl.qubits,
            length: rl.length,
            samples_per_round: rl.samples_per_round,
            max_rounds: rl.max_rounds,
            max_evaluations: None,
            threshold: rl.threshold,
            score_window: rl.score_window,
            seed: rl.seed,
        }
    }
}

/// Uniform sequences with `a_1 = 0`, scored on the full sequence only.
/// Logs use the same record type as the trained search with no loss.
pub fn random_search<E: Evaluator + ?Sized>(config: &RandomSearchConfig, eval: &E) -> Result<SearchOutcome> {
    if config.qubits == 0 || config.length < 2 || config.samples_per_round == 0 || config.score_window == 0 {
        return Err(Error::InvalidArgument(alloc::format!("invalid random search {config:?}")));
    }
    if eval.qubits() != config.qubits {
        return Err(Error::DimensionMismatch {
            expected: config.qubits,
            found: eval.qubits(),
        });
    }
    let budget = config.max_evaluations.unwrap_or(u64::MAX);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cache = RewardCache::new();
    let mut log: Vec<RoundRecord> = Vec::new();
    let mut recent = VecDeque::new();
    let mut kappa_max = 0;
    let mut best: Option<TokenSequence> = None;
    let mut exhausted = false;
    for round in 1..=config.max_rounds {
        if exhausted || (round > 1 && kappa_max >= config.threshold) {
            break;
        }
        let mut sequences = Vec::new();
        let mut kappas = Vec::new();
        for _ in 0..config.samples_per_round {
            let seq = random_sequence(config.qubits, config.length, &mut rng)?;
            let k = match cache.get(seq.tokens()) {
                Some(k) => k,
                None if cache.evaluations() >= budget => {
                    exhausted = true;
                    break;
                }
                None => cache.get_or_eval(seq.tokens(), eval)?,
            };
            if k > kappa_max || best.is_none() {
                kappa_max = kappa_max.max(k);
                best = Some(seq.clone());
            }
            sequences.push(seq);
            kappas.push(k);
        }
        if sequences.is_empty() {
            break;
        }
        let mean = kappas.iter().sum::<usize>() as f64 / kappas.len() as f64;
        recent.push_back(mean);
        while recent.len() > config.score_window {
            recent.pop_front();
        }
        log.push(RoundRecord {
            round,
            rewards: sequences.iter().map(|_| Vec::new()).collect(),
            max_kappa_round: kappas.iter().copied().max().unwrap_or(0),
            sequences,
            kappas,
            mean_kappa: mean,
            kappa_max_running: kappa_max,
            score: recent.iter().sum::<f64>() / recent.len() as f64,
            loss: None,
            evaluations: cache.evaluations(),
        });
    }
    let best = best.ok_or_else(|| Error::InvalidArgument("random search scored no sequences".into()))?;
    Ok(SearchOutcome {
        best,
        best_kappa: kappa_max,
        log,
        reached_threshold: kappa_max >= config.threshold,
        evaluations: cache.evaluations(),
    })
}
