use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use effrank::config::ExperimentConfig;
use effrank::experiments::{self, RankJson};
use effrank::formats::{read_circuit, read_dataset, read_json, write_json};
use effrank::{CliError, ExperimentKind, Result};

#[derive(Parser)]
#[command(name = "effrank", version, about = "Fisher effective rank of quantum circuits and RL circuit search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// κ of the universal ansatz against dataset size and protocol.
    SweepData(Common),
    /// κ of stacked chain blocks against depth.
    SweepDepth(Common),
    /// Transformer policy-gradient search over gate tokens.
    RlSearch(Common),
    /// Uniform random search with the same log format.
    RandomSearch(Common),
    /// One-shot κ of a circuit file.
    Rank {
        #[command(flatten)]
        common: Common,
        /// Circuit JSON or token-sequence JSON.
        #[arg(long)]
        circuit: PathBuf,
        /// Dataset JSON; defaults to a seeded Wishart dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Basis word such as XYZ.
        #[arg(long)]
        protocol: Option<String>,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Search seed (sweeps and rank: parameter-draw seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Gradient method: shift, exact or fd.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    draws: Option<usize>,
}

impl Common {
    fn load(&self, kind: ExperimentKind) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => read_json::<ExperimentConfig>(path).map_err(|e| match e {
                CliError::Format(msg) => CliError::Config(msg),
                other => other,
            })?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            match kind {
                ExperimentKind::RlSearch | ExperimentKind::RandomSearch => cfg.seed = seed,
                _ => cfg.fisher.seed = seed,
            }
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        if let Some(m) = &self.method {
            cfg.fisher.method = Some(m.clone());
        }
        if let Some(t) = self.rel_tol {
            cfg.fisher.rel_tol = Some(t);
        }
        if let Some(d) = self.draws {
            cfg.fisher.draws = d;
        }
        cfg.validate(kind)?;
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("summary serializes"));
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SweepData(common) => {
            let cfg = common.load(ExperimentKind::SweepData)?;
            let rows = experiments::write_sweep_data(&cfg, &cfg.out_dir())?;
            print_json(&serde_json::json!({ "rows": rows.len(), "out": cfg.out_dir().join("sweep_data.csv") }));
        }
        Command::SweepDepth(common) => {
            let cfg = common.load(ExperimentKind::SweepDepth)?;
            let rows = experiments::write_sweep_depth(&cfg, &cfg.out_dir())?;
            print_json(&serde_json::json!({ "rows": rows.len(), "out": cfg.out_dir().join("sweep_depth.csv") }));
        }
        Command::RlSearch(common) => {
            let cfg = common.load(ExperimentKind::RlSearch)?;
            let (_, best) = experiments::rl_search(&cfg, &cfg.out_dir())?;
            print_json(&best);
        }
        Command::RandomSearch(common) => {
            let cfg = common.load(ExperimentKind::RandomSearch)?;
            let (_, best) = experiments::random_search(&cfg, &cfg.out_dir())?;
            print_json(&best);
        }
        Command::Rank {
            common,
            circuit,
            dataset,
            protocol,
        } => {
            let mut cfg = common.load(ExperimentKind::Rank)?;
            if protocol.is_some() {
                cfg.protocol = protocol;
                cfg.validate(ExperimentKind::Rank)?;
            }
            let circuit = read_circuit(&circuit)?;
            let data = dataset.as_deref().map(read_dataset).transpose()?;
            let report = RankJson::from(&experiments::rank(&circuit, &cfg, data)?);
            if let Some(dir) = &cfg.out {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                write_json(&dir.join("rank.json"), &report)?;
            }
            print_json(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
