//! Experiment configuration file. Unset optional fields take per-experiment
//! defaults when resolved.

use std::path::PathBuf;

use effrank_core::agent::{AdamConfig, RandomSearchConfig, SearchConfig};
use effrank_core::ansatz::{BlockOrder, ChainDirection, ChainLayout};
use effrank_core::data::rich_dataset_size;
use effrank_core::fisher::{GradientMethod, RankSettings, DEFAULT_DRAWS, DEFAULT_FD_STEP};
use effrank_core::quantum::{Basis, MeasurementProtocol};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SweepData,
    SweepDepth,
    RlSearch,
    RandomSearch,
    Rank,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::SweepData => "sweep-data",
            ExperimentKind::SweepDepth => "sweep-depth",
            ExperimentKind::RlSearch => "rl-search",
            ExperimentKind::RandomSearch => "random-search",
            ExperimentKind::Rank => "rank",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// States drawn; unset means the canonical size for `n`.
    pub size: Option<usize>,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { size: None, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FisherConfig {
    /// `shift`, `exact` or `fd`; unset picks `exact` for the universal
    /// ansatz and `shift` otherwise.
    pub method: Option<String>,
    pub fd_step: f64,
    pub draws: usize,
    /// Unset means the method's default threshold.
    pub rel_tol: Option<f64>,
    /// Seed of the parameter draws.
    pub seed: u64,
}

impl Default for FisherConfig {
    fn default() -> Self {
        Self {
            method: None,
            fd_step: DEFAULT_FD_STEP,
            draws: DEFAULT_DRAWS,
            rel_tol: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    /// `forward` (k → k+1) or `backward`.
    pub direction: String,
    /// `singles-first` or `cnots-first`.
    pub order: String,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            direction: "forward".into(),
            order: "singles-first".into(),
        }
    }
}

impl ChainConfig {
    pub fn layout(&self) -> Result<ChainLayout> {
        let direction = match self.direction.as_str() {
            "forward" => ChainDirection::Forward,
            "backward" => ChainDirection::Backward,
            other => return Err(CliError::Config(format!("unknown chain direction {other:?}"))),
        };
        let order = match self.order.as_str() {
            "singles-first" => BlockOrder::SinglesFirst,
            "cnots-first" => BlockOrder::CnotsFirst,
            other => return Err(CliError::Config(format!("unknown block order {other:?}"))),
        };
        Ok(ChainLayout { direction, order })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub length: usize,
    pub samples_per_round: usize,
    pub max_rounds: usize,
    pub threshold: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub replay_rounds: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub baseline: bool,
    pub score_window: usize,
    /// Random search only: cap on κ evaluations.
    pub max_evaluations: Option<u64>,
    /// Write a checkpoint every this many rounds (0 disables periodic saves).
    pub checkpoint_every: usize,
    /// Checkpoint to resume from.
    pub resume: Option<PathBuf>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        let s = SearchConfig::default();
        Self {
            length: s.length,
            samples_per_round: s.samples_per_round,
            max_rounds: s.max_rounds,
            threshold: s.threshold,
            embed_dim: s.embed_dim,
            layers: s.layers,
            heads: s.heads,
            ff_dim: s.ff_dim,
            lr: s.adam.lr,
            beta1: s.adam.beta1,
            beta2: s.adam.beta2,
            eps: s.adam.eps,
            replay_rounds: s.replay_rounds,
            batch_size: s.batch_size,
            epochs: s.epochs,
            baseline: s.baseline,
            score_window: s.score_window,
            max_evaluations: None,
            checkpoint_every: 50,
            resume: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When set, must match the subcommand.
    pub experiment: Option<ExperimentKind>,
    pub n: Option<usize>,
    pub dataset: DatasetConfig,
    /// Basis word such as `XYZ`.
    pub protocol: Option<String>,
    pub protocol_weights: Option<Vec<f64>>,
    /// Data sweep: protocols compared.
    pub protocols: Option<Vec<String>>,
    /// Data sweep: dataset sizes.
    pub num_states: Option<Vec<usize>>,
    /// Depth sweep: largest block count.
    pub m_max: Option<usize>,
    pub chain: ChainConfig,
    pub fisher: FisherConfig,
    pub agent: AgentConfig,
    /// Search seed.
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            n: None,
            dataset: DatasetConfig::default(),
            protocol: None,
            protocol_weights: None,
            protocols: None,
            num_states: None,
            m_max: None,
            chain: ChainConfig::default(),
            fisher: FisherConfig::default(),
            agent: AgentConfig::default(),
            seed: 0,
            out: None,
        }
    }
}

pub fn parse_protocol(word: &str, weights: Option<&[f64]>) -> Result<MeasurementProtocol> {
    let base: MeasurementProtocol = word
        .parse()
        .map_err(|e| CliError::Config(format!("protocol {word:?}: {e}")))?;
    match weights {
        None => Ok(base),
        Some(w) => MeasurementProtocol::with_weights(base.bases(), w)
            .map_err(|e| CliError::Config(format!("protocol weights: {e}"))),
    }
}

pub fn parse_method(name: &str, fd_step: f64) -> Result<GradientMethod> {
    match name {
        "shift" => Ok(GradientMethod::Shift),
        "exact" => Ok(GradientMethod::Exact),
        "fd" => Ok(GradientMethod::FiniteDifference { step: fd_step }),
        other => Err(CliError::Config(format!(
            "unknown method {other:?} (expected shift, exact or fd)"
        ))),
    }
}

impl ExperimentConfig {
    pub fn check_kind(&self, kind: ExperimentKind) -> Result<()> {
        match self.experiment {
            Some(k) if k != kind => Err(CliError::Config(format!(
                "config is for {} but {} was requested",
                k.as_str(),
                kind.as_str()
            ))),
            _ => Ok(()),
        }
    }

    pub fn qubits(&self, kind: ExperimentKind) -> Result<usize> {
        let n = self.n.unwrap_or(match kind {
            ExperimentKind::SweepData => 2,
            _ => 3,
        });
        let range = match kind {
            ExperimentKind::SweepData => 1..=3,
            ExperimentKind::SweepDepth => 2..=4,
            _ => 1..=4,
        };
        if !range.contains(&n) {
            return Err(CliError::Config(format!(
                "{} supports n in {}..={}, got {n}",
                kind.as_str(),
                range.start(),
                range.end()
            )));
        }
        Ok(n)
    }

    pub fn protocol(&self, kind: ExperimentKind) -> Result<MeasurementProtocol> {
        let default = match kind {
            ExperimentKind::RlSearch | ExperimentKind::RandomSearch => "X",
            _ => "XYZ",
        };
        parse_protocol(
            self.protocol.as_deref().unwrap_or(default),
            self.protocol_weights.as_deref(),
        )
    }

    pub fn sweep_protocols(&self) -> Result<Vec<MeasurementProtocol>> {
        match &self.protocols {
            None => Ok(vec![
                MeasurementProtocol::new(&[Basis::X])?,
                MeasurementProtocol::new(&[Basis::X, Basis::Y])?,
                MeasurementProtocol::new(&[Basis::X, Basis::Y, Basis::Z])?,
            ]),
            Some(words) if words.is_empty() => Err(CliError::Config("protocols list is empty".into())),
            Some(words) => words.iter().map(|w| parse_protocol(w, None)).collect(),
        }
    }

    pub fn sweep_sizes(&self, n: usize) -> Result<Vec<usize>> {
        let sizes = match &self.num_states {
            Some(s) => s.clone(),
            None => (1..=if n >= 3 { 20 } else { 12 }).collect(),
        };
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(CliError::Config("num_states must be non-empty and positive".into()));
        }
        Ok(sizes)
    }

    pub fn depth_limit(&self, n: usize) -> Result<usize> {
        let m = self.m_max.unwrap_or(match n {
            2 => 8,
            3 => 12,
            _ => 16,
        });
        if m == 0 {
            return Err(CliError::Config("m_max must be positive".into()));
        }
        Ok(m)
    }

    pub fn dataset_size(&self, n: usize) -> Result<usize> {
        match self.dataset.size {
            Some(0) => Err(CliError::Config("dataset size must be positive".into())),
            Some(s) => Ok(s),
            None => Ok(rich_dataset_size(n)),
        }
    }

    /// Rank settings; `universal` selects the exact default method.
    pub fn rank_settings(&self, universal: bool) -> Result<RankSettings> {
        let name = self
            .fisher
            .method
            .as_deref()
            .unwrap_or(if universal { "exact" } else { "shift" });
        let method = parse_method(name, self.fisher.fd_step)?;
        if let GradientMethod::FiniteDifference { step } = method {
            if !(step > 0.0 && step.is_finite()) {
                return Err(CliError::Config(format!("fd_step must be positive, got {step}")));
            }
        }
        let rel_tol = self.fisher.rel_tol.unwrap_or(method.default_rank_tol());
        if !(rel_tol > 0.0 && rel_tol < 1.0) {
            return Err(CliError::Config(format!("rel_tol must lie in (0, 1), got {rel_tol}")));
        }
        if self.fisher.draws == 0 {
            return Err(CliError::Config("draws must be positive".into()));
        }
        Ok(RankSettings {
            method,
            draws: self.fisher.draws,
            rel_tol,
            seed: self.fisher.seed,
        })
    }

    pub fn search_config(&self, n: usize) -> Result<SearchConfig> {
        let a = &self.agent;
        let cfg = SearchConfig {
            qubits: n,
            length: a.length,
            samples_per_round: a.samples_per_round,
            max_rounds: a.max_rounds,
            threshold: a.threshold,
            embed_dim: a.embed_dim,
            layers: a.layers,
            heads: a.heads,
            ff_dim: a.ff_dim,
            adam: AdamConfig {
                lr: a.lr,
                beta1: a.beta1,
                beta2: a.beta2,
                eps: a.eps,
            },
            replay_rounds: a.replay_rounds,
            batch_size: a.batch_size,
            epochs: a.epochs,
            baseline: a.baseline,
            score_window: a.score_window,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn random_config(&self, n: usize) -> Result<RandomSearchConfig> {
        let rl = self.search_config(n)?;
        Ok(RandomSearchConfig {
            max_evaluations: self.agent.max_evaluations,
            ..RandomSearchConfig::matching(&rl)
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Checks every setting the experiment reads.
    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        self.check_kind(kind)?;
        let n = self.qubits(kind)?;
        self.protocol(kind)?;
        match kind {
            ExperimentKind::SweepData => {
                self.sweep_protocols()?;
                self.sweep_sizes(n)?;
                self.rank_settings(true)?;
            }
            ExperimentKind::SweepDepth => {
                self.depth_limit(n)?;
                self.dataset_size(n)?;
                self.chain.layout()?;
                self.rank_settings(false)?;
            }
            ExperimentKind::RlSearch | ExperimentKind::RandomSearch => {
                self.dataset_size(n)?;
                self.search_config(n)?;
                self.rank_settings(false)?;
            }
            ExperimentKind::Rank => {
                self.rank_settings(false)?;
            }
        }
        Ok(())
    }
}
