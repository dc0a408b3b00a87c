//! The experiments behind each subcommand. Functions return rows and
//! summaries; writing files is left to the `write_*` helpers and `run`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use effrank_core::agent::{
    random_search as run_random, run_search_with, KappaEvaluator, RoundRecord, SearchOutcome, SearchState,
};
use effrank_core::ansatz::{chain_blocks_with, decode_tokens, universal_circuit};
use effrank_core::data::make_dataset;
use effrank_core::fisher::{effective_rank, RankReport, RankSettings};
use effrank_core::quantum::{Circuit, MeasurementProtocol};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{CliError, Result};
use crate::formats::{read_json, write_json, CheckpointJson, CircuitJson};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepDataRow {
    pub n: usize,
    pub protocol: String,
    pub num_states: usize,
    pub kappa: usize,
    pub d_n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepDepthRow {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub kappa: usize,
    pub kappa_over_dn: f64,
    pub eta: f64,
}

/// One line of the round log shared by both searches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: usize,
    pub mean_kappa: f64,
    pub max_kappa_round: usize,
    pub kappa_max_running: usize,
    pub score_sbar: f64,
    pub loss: Option<f64>,
}

impl From<&RoundRecord> for RoundRow {
    fn from(r: &RoundRecord) -> Self {
        Self {
            round: r.round,
            mean_kappa: r.mean_kappa,
            max_kappa_round: r.max_kappa_round,
            kappa_max_running: r.kappa_max_running,
            score_sbar: r.score,
            loss: r.loss,
        }
    }
}

/// Best circuit found by a search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestCircuit {
    pub n: usize,
    pub tokens: Vec<usize>,
    pub kappa: usize,
    pub p: usize,
    pub circuit: CircuitJson,
    pub rounds: usize,
    pub evaluations: u64,
    pub reached_threshold: bool,
    /// The round or evaluation budget ran out before the threshold.
    pub budget_exhausted: bool,
}

/// κ of the universal ansatz for every protocol and dataset size. Datasets
/// are prefixes of one seeded draw.
pub fn sweep_data(cfg: &ExperimentConfig) -> Result<Vec<SweepDataRow>> {
    let kind = ExperimentKind::SweepData;
    cfg.validate(kind)?;
    let n = cfg.qubits(kind)?;
    let sizes = cfg.sweep_sizes(n)?;
    let protocols = cfg.sweep_protocols()?;
    let settings = cfg.rank_settings(true)?;
    let circuit = universal_circuit(n)?;
    let largest = *sizes.iter().max().expect("non-empty");
    let full = make_dataset(n, largest, cfg.dataset.seed)?;
    let mut rows = Vec::with_capacity(sizes.len() * protocols.len());
    for proto in &protocols {
        for &k in &sizes {
            let report = effective_rank(&circuit, &full.prefix(k)?, proto, &settings)?;
            rows.push(SweepDataRow {
                n,
                protocol: proto.label(),
                num_states: k,
                kappa: report.kappa,
                d_n: report.d_n,
            });
        }
    }
    Ok(rows)
}

/// κ of `m` chain blocks for `m = 1..=m_max`.
pub fn sweep_depth(cfg: &ExperimentConfig) -> Result<Vec<SweepDepthRow>> {
    let kind = ExperimentKind::SweepDepth;
    cfg.validate(kind)?;
    let n = cfg.qubits(kind)?;
    let data = make_dataset(n, cfg.dataset_size(n)?, cfg.dataset.seed)?;
    let proto = cfg.protocol(kind)?;
    let settings = cfg.rank_settings(false)?;
    let layout = cfg.chain.layout()?;
    (1..=cfg.depth_limit(n)?)
        .map(|m| {
            let c = chain_blocks_with(n, m, layout)?;
            let r = effective_rank(&c, &data, &proto, &settings)?;
            Ok(SweepDepthRow {
                n,
                m,
                p: r.p,
                kappa: r.kappa,
                kappa_over_dn: r.kappa as f64 / r.d_n as f64,
                eta: r.eta,
            })
        })
        .collect()
}

pub fn search_evaluator(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<KappaEvaluator> {
    let n = cfg.qubits(kind)?;
    Ok(KappaEvaluator {
        dataset: make_dataset(n, cfg.dataset_size(n)?, cfg.dataset.seed)?,
        protocol: cfg.protocol(kind)?,
        settings: cfg.rank_settings(false)?,
    })
}

pub fn rank(circuit: &Circuit, cfg: &ExperimentConfig, data: Option<effrank_core::data::Dataset>) -> Result<RankReport> {
    let kind = ExperimentKind::Rank;
    cfg.check_kind(kind)?;
    let n = circuit.qubits();
    let data = match data {
        Some(d) => d,
        None => make_dataset(n, cfg.dataset_size(n)?, cfg.dataset.seed)?,
    };
    let proto: MeasurementProtocol = cfg.protocol(kind)?;
    let universal = circuit.gates().iter().any(|g| !g.shift_compatible());
    let settings: RankSettings = cfg.rank_settings(universal)?;
    Ok(effective_rank(circuit, &data, &proto, &settings)?)
}

fn best_circuit(out: &SearchOutcome) -> Result<BestCircuit> {
    let circuit = decode_tokens(&out.best)?;
    Ok(BestCircuit {
        n: out.best.qubits(),
        tokens: out.best.tokens().to_vec(),
        kappa: out.best_kappa,
        p: circuit.param_count(),
        circuit: CircuitJson::from_circuit(&circuit),
        rounds: out.log.last().map_or(0, |r| r.round),
        evaluations: out.evaluations,
        reached_threshold: out.reached_threshold,
        budget_exhausted: !out.reached_threshold,
    })
}

pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::Format(e.to_string()))
}

/// Header-only CSV for a row type, used when a log starts empty.
fn header_csv(header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    w.into_inner().map_err(|e| CliError::Format(e.to_string()))
}

pub const ROUND_HEADER: [&str; 6] = [
    "round",
    "mean_kappa",
    "max_kappa_round",
    "kappa_max_running",
    "score_sbar",
    "loss",
];

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Round log appended one row at a time so an interrupted run keeps its
/// progress.
struct RoundLog {
    path: PathBuf,
    file: fs::File,
}

impl RoundLog {
    /// Starts a fresh log, or keeps rows up to `resume_round` of an existing one.
    fn open(path: PathBuf, resume_round: Option<usize>) -> Result<Self> {
        let mut kept = Vec::new();
        if let (Some(last), true) = (resume_round, path.exists()) {
            let mut r = csv::Reader::from_path(&path)?;
            for row in r.deserialize::<RoundRow>() {
                let row = row?;
                if row.round <= last {
                    kept.push(row);
                }
            }
        }
        let bytes = if kept.is_empty() {
            header_csv(&ROUND_HEADER)?
        } else {
            rows_to_csv(&kept)?
        };
        write_bytes(&path, &bytes)?;
        let file = fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| CliError::io(&path, e))?;
        Ok(Self { path, file })
    }

    fn append(&mut self, row: &RoundRow) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.serialize(row)?;
        let bytes = w.into_inner().map_err(|e| CliError::Format(e.to_string()))?;
        self.file.write_all(&bytes).map_err(|e| CliError::io(&self.path, e))
    }
}

/// Paths written by the searches.
pub struct SearchFiles {
    pub rounds: PathBuf,
    pub best: PathBuf,
    pub checkpoint: PathBuf,
}

impl SearchFiles {
    pub fn rl(dir: &Path) -> Self {
        Self {
            rounds: dir.join("rl_rounds.csv"),
            best: dir.join("rl_best.json"),
            checkpoint: dir.join("rl_checkpoint.json"),
        }
    }

    pub fn random(dir: &Path) -> Self {
        Self {
            rounds: dir.join("random_rounds.csv"),
            best: dir.join("random_best.json"),
            checkpoint: dir.join("random_checkpoint.json"),
        }
    }
}

/// Policy-gradient search, writing the round log, periodic checkpoints and
/// the best circuit into `dir`.
pub fn rl_search(cfg: &ExperimentConfig, dir: &Path) -> Result<(SearchOutcome, BestCircuit)> {
    let kind = ExperimentKind::RlSearch;
    cfg.validate(kind)?;
    let n = cfg.qubits(kind)?;
    let search = cfg.search_config(n)?;
    let eval = search_evaluator(cfg, kind)?;
    ensure_dir(dir)?;
    let files = SearchFiles::rl(dir);

    let mut state = match &cfg.agent.resume {
        Some(path) => {
            let ck: CheckpointJson = read_json(path)?;
            if ck.n != n {
                return Err(CliError::Config(format!("checkpoint is for n = {}, config has n = {n}", ck.n)));
            }
            SearchState::restore(search, ck.to_snapshot()?)?
        }
        None => SearchState::new(search)?,
    };
    let resumed_at = cfg.agent.resume.as_ref().map(|_| state.round());
    let mut log = RoundLog::open(files.rounds.clone(), resumed_at)?;
    let every = cfg.agent.checkpoint_every;
    let checkpoint = |s: &SearchState| write_json(&files.checkpoint, &CheckpointJson::from_snapshot(n, &s.snapshot()));

    let outcome = run_search_with(&mut state, &eval, |s, rec| -> Result<()> {
        log.append(&RoundRow::from(rec))?;
        if every > 0 && rec.round % every == 0 {
            checkpoint(s)?;
        }
        Ok(())
    })?;
    checkpoint(&state)?;
    let best = best_circuit(&outcome)?;
    write_json(&files.best, &best)?;
    Ok((outcome, best))
}

/// Uniform random search with the same log schema.
pub fn random_search(cfg: &ExperimentConfig, dir: &Path) -> Result<(SearchOutcome, BestCircuit)> {
    let kind = ExperimentKind::RandomSearch;
    cfg.validate(kind)?;
    let n = cfg.qubits(kind)?;
    let rc = cfg.random_config(n)?;
    let eval = search_evaluator(cfg, kind)?;
    ensure_dir(dir)?;
    let files = SearchFiles::random(dir);
    let outcome = run_random(&rc, &eval)?;
    let rows: Vec<RoundRow> = outcome.log.iter().map(RoundRow::from).collect();
    write_bytes(&files.rounds, &if rows.is_empty() { header_csv(&ROUND_HEADER)? } else { rows_to_csv(&rows)? })?;
    let best = best_circuit(&outcome)?;
    write_json(&files.best, &best)?;
    Ok((outcome, best))
}

pub fn write_sweep_data(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<SweepDataRow>> {
    let rows = sweep_data(cfg)?;
    ensure_dir(dir)?;
    write_bytes(&dir.join("sweep_data.csv"), &rows_to_csv(&rows)?)?;
    Ok(rows)
}

pub fn write_sweep_depth(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<SweepDepthRow>> {
    let rows = sweep_depth(cfg)?;
    ensure_dir(dir)?;
    write_bytes(&dir.join("sweep_depth.csv"), &rows_to_csv(&rows)?)?;
    Ok(rows)
}

/// JSON form of a rank report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankJson {
    pub kappa: usize,
    pub p: usize,
    pub eta: f64,
    pub d_n: usize,
    pub draws: Vec<usize>,
    pub spectrum: Vec<f64>,
}

impl From<&RankReport> for RankJson {
    fn from(r: &RankReport) -> Self {
        Self {
            kappa: r.kappa,
            p: r.p,
            eta: r.eta,
            d_n: r.d_n,
            draws: r.draws.clone(),
            spectrum: r.spectrum.clone(),
        }
    }
}
