//! JSON file formats for circuits, token sequences, datasets and search
//! checkpoints. Everything read back is re-validated by the core types.

use std::fs;
use std::path::Path;

use effrank_core::agent::{AdamState, RngState, SearchSnapshot};
use effrank_core::ansatz::{decode_tokens, TokenSequence};
use effrank_core::data::Dataset;
use effrank_core::numerics::{ComplexMatrix, C64};
use effrank_core::pauli::PauliString;
use effrank_core::quantum::{Circuit, DensityMatrix, GateKind, GateOp};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateJson {
    pub kind: String,
    pub i: usize,
    pub j: usize,
    pub slots: Vec<usize>,
    /// Pauli words of `generator` and `composite` gates, e.g. `"XZ"`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paulis: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitJson {
    pub n: usize,
    pub gates: Vec<GateJson>,
    pub p: usize,
}

impl CircuitJson {
    pub fn from_circuit(c: &Circuit) -> Self {
        let gates = c
            .gates()
            .iter()
            .map(|g| {
                let (i, j, paulis) = match g {
                    GateOp::Single { qubit, .. } => (*qubit, *qubit, Vec::new()),
                    GateOp::Cnot { control, target } => (*control, *target, Vec::new()),
                    GateOp::Generator { pauli, .. } => (0, 0, vec![pauli.to_string()]),
                    GateOp::Composite { generators, .. } => {
                        (0, 0, generators.iter().map(|p| p.to_string()).collect())
                    }
                };
                GateJson {
                    kind: g.kind().as_str().to_string(),
                    i,
                    j,
                    slots: g.slots().to_vec(),
                    paulis,
                }
            })
            .collect();
        Self {
            n: c.qubits(),
            gates,
            p: c.param_count(),
        }
    }

    pub fn to_circuit(&self) -> Result<Circuit> {
        let gates = self
            .gates
            .iter()
            .enumerate()
            .map(|(k, g)| gate_from_json(k, g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Circuit::new(self.n, gates, self.p)?)
    }
}

fn gate_from_json(k: usize, g: &GateJson) -> Result<GateOp> {
    let bad = |msg: String| CliError::Format(format!("gate {k}: {msg}"));
    let kind: GateKind = g.kind.parse().map_err(|_| bad(format!("unknown kind {:?}", g.kind)))?;
    let paulis = || -> Result<Vec<PauliString>> {
        g.paulis
            .iter()
            .map(|w| w.parse::<PauliString>().map_err(|_| bad(format!("bad Pauli word {w:?}"))))
            .collect()
    };
    match kind {
        GateKind::Single => {
            if g.i != g.j {
                return Err(bad("single gate needs i == j".into()));
            }
            let slots: [usize; 3] = g
                .slots
                .as_slice()
                .try_into()
                .map_err(|_| bad("single gate needs 3 slots".into()))?;
            Ok(GateOp::Single { qubit: g.i, slots })
        }
        GateKind::Cnot => {
            if !g.slots.is_empty() {
                return Err(bad("cnot takes no slots".into()));
            }
            Ok(GateOp::Cnot {
                control: g.i,
                target: g.j,
            })
        }
        GateKind::Generator => {
            let mut ps = paulis()?;
            if ps.len() != 1 || g.slots.len() != 1 {
                return Err(bad("generator needs one Pauli word and one slot".into()));
            }
            Ok(GateOp::Generator {
                pauli: ps.remove(0),
                slot: g.slots[0],
            })
        }
        GateKind::Composite => Ok(GateOp::Composite {
            generators: paulis()?,
            slots: g.slots.clone(),
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokensJson {
    pub n: usize,
    pub tokens: Vec<usize>,
}

impl TokensJson {
    pub fn from_sequence(seq: &TokenSequence) -> Self {
        Self {
            n: seq.qubits(),
            tokens: seq.tokens().to_vec(),
        }
    }

    pub fn to_sequence(&self) -> Result<TokenSequence> {
        Ok(TokenSequence::new(self.n, self.tokens.clone())?)
    }
}

/// Either file form accepted where a circuit is expected.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum CircuitFile {
    Circuit(CircuitJson),
    Tokens(TokensJson),
    /// A search result file; only its embedded circuit is used.
    Embedded { circuit: CircuitJson },
}

impl CircuitFile {
    pub fn to_circuit(&self) -> Result<Circuit> {
        match self {
            CircuitFile::Circuit(c) => c.to_circuit(),
            CircuitFile::Tokens(t) => Ok(decode_tokens(&t.to_sequence()?)?),
            CircuitFile::Embedded { circuit } => circuit.to_circuit(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetJson {
    pub n: usize,
    pub seed: u64,
    /// Each state is its `d × d` matrix flattened row-major as `[re, im]` pairs.
    pub states: Vec<Vec<[f64; 2]>>,
}

impl DatasetJson {
    pub fn from_dataset(d: &Dataset) -> Self {
        Self {
            n: d.qubits(),
            seed: d.seed(),
            states: d
                .states()
                .iter()
                .map(|s| s.matrix().as_slice().iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        if self.n == 0 || self.n > effrank_core::quantum::MAX_QUBITS {
            return Err(CliError::Format(format!("dataset qubit count {} out of range", self.n)));
        }
        let dim = 1usize << self.n;
        let states = self
            .states
            .iter()
            .enumerate()
            .map(|(k, entries)| {
                if entries.len() != dim * dim {
                    return Err(CliError::Format(format!(
                        "state {k} has {} entries, expected {}",
                        entries.len(),
                        dim * dim
                    )));
                }
                let data = entries.iter().map(|&[re, im]| C64::new(re, im)).collect();
                let m = ComplexMatrix::from_vec(dim, dim, data)?;
                DensityMatrix::new(self.n, m).map_err(|e| CliError::Format(format!("state {k}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset::from_states(self.n, states, self.seed)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamJson {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngJson {
    /// 64 hex digits.
    pub seed: String,
    pub stream: u64,
    /// Decimal string; the position can exceed 2^64.
    pub word_pos: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayEntry {
    pub tokens: Vec<usize>,
    pub rewards: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointJson {
    pub version: u32,
    pub n: usize,
    pub policy: Vec<f64>,
    pub adam: AdamJson,
    pub rng: RngJson,
    pub round: usize,
    pub kappa_max: usize,
    pub best: Option<Vec<usize>>,
    pub recent_means: Vec<f64>,
    pub replay: Vec<Vec<ReplayEntry>>,
    pub cache: Vec<(Vec<usize>, usize)>,
    pub evaluations: u64,
}

impl CheckpointJson {
    pub fn from_snapshot(n: usize, s: &SearchSnapshot) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            n,
            policy: s.policy.clone(),
            adam: AdamJson {
                m: s.adam.m.clone(),
                v: s.adam.v.clone(),
                t: s.adam.t,
            },
            rng: RngJson {
                seed: s.rng.seed.iter().map(|b| format!("{b:02x}")).collect(),
                stream: s.rng.stream,
                word_pos: s.rng.word_pos.to_string(),
            },
            round: s.round,
            kappa_max: s.kappa_max,
            best: s.best.as_ref().map(|b| b.tokens().to_vec()),
            recent_means: s.recent_means.clone(),
            replay: s
                .replay
                .iter()
                .map(|round| {
                    round
                        .iter()
                        .map(|(t, r)| ReplayEntry {
                            tokens: t.clone(),
                            rewards: r.clone(),
                        })
                        .collect()
                })
                .collect(),
            cache: s.cache.clone(),
            evaluations: s.evaluations,
        }
    }

    pub fn to_snapshot(&self) -> Result<SearchSnapshot> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CliError::Format(format!(
                "checkpoint version {} is not supported",
                self.version
            )));
        }
        let bad_seed = || CliError::Format("checkpoint rng seed must be 64 hex digits".into());
        if self.rng.seed.len() != 64 || !self.rng.seed.is_ascii() {
            return Err(bad_seed());
        }
        let mut seed = [0u8; 32];
        for (k, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.rng.seed[2 * k..2 * k + 2], 16).map_err(|_| bad_seed())?;
        }
        let word_pos = self
            .rng
            .word_pos
            .parse::<u128>()
            .map_err(|_| CliError::Format("checkpoint rng word_pos is not an integer".into()))?;
        let best = self
            .best
            .as_ref()
            .map(|t| TokenSequence::new(self.n, t.clone()))
            .transpose()?;
        for (tokens, _) in &self.cache {
            TokenSequence::new(self.n, tokens.clone())?;
        }
        Ok(SearchSnapshot {
            policy: self.policy.clone(),
            adam: AdamState {
                m: self.adam.m.clone(),
                v: self.adam.v.clone(),
                t: self.adam.t,
            },
            rng: RngState {
                seed,
                stream: self.rng.stream,
                word_pos,
            },
            round: self.round,
            kappa_max: self.kappa_max,
            best,
            recent_means: self.recent_means.clone(),
            replay: self
                .replay
                .iter()
                .map(|round| round.iter().map(|e| (e.tokens.clone(), e.rewards.clone())).collect())
                .collect(),
            cache: self.cache.clone(),
            evaluations: self.evaluations,
        })
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_circuit(path: &Path) -> Result<Circuit> {
    read_json::<CircuitFile>(path)?.to_circuit()
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    read_json::<DatasetJson>(path)?.to_dataset()
}

#[cfg(test)]
mod tests {
    use super::*;
    use effrank_core::ansatz::{chain_blocks, generator_product_circuit, universal_circuit};
    use effrank_core::data::make_dataset;

    #[test]
    fn circuit_json_round_trips() {
        for c in [
            chain_blocks(3, 2).unwrap(),
            universal_circuit(2).unwrap(),
            generator_product_circuit(1).unwrap(),
            Circuit::empty(2).unwrap(),
        ] {
            let json = CircuitJson::from_circuit(&c);
            let text = serde_json::to_string(&json).unwrap();
            let back: CircuitFile = serde_json::from_str(&text).unwrap();
            assert_eq!(back.to_circuit().unwrap(), c);
        }
    }

    #[test]
    fn circuit_json_shape() {
        let json = CircuitJson::from_circuit(&chain_blocks(2, 1).unwrap());
        let v: serde_json::Value = serde_json::to_value(&json).unwrap();
        assert_eq!(v["n"], 2);
        assert_eq!(v["p"], 6);
        assert_eq!(
            v["gates"][2],
            serde_json::json!({"kind": "cnot", "i": 0, "j": 1, "slots": []})
        );
        assert_eq!(
            v["gates"][1],
            serde_json::json!({"kind": "single", "i": 1, "j": 1, "slots": [3, 4, 5]})
        );
    }

    #[test]
    fn invalid_circuits_are_rejected() {
        let parse = |s: &str| serde_json::from_str::<CircuitFile>(s).unwrap().to_circuit();
        assert!(parse(r#"{"n":2,"gates":[{"kind":"single","i":0,"j":1,"slots":[0,1,2]}],"p":3}"#).is_err());
        assert!(parse(r#"{"n":2,"gates":[{"kind":"single","i":0,"j":0,"slots":[0,1,2]}],"p":2}"#).is_err());
        assert!(parse(r#"{"n":2,"gates":[{"kind":"cnot","i":0,"j":0,"slots":[]}],"p":0}"#).is_err());
        assert!(parse(r#"{"n":2,"gates":[{"kind":"swap","i":0,"j":1,"slots":[]}],"p":0}"#).is_err());
        assert!(parse(r#"{"n":3,"tokens":[0,9]}"#).is_err());
        assert_eq!(parse(r#"{"n":3,"tokens":[0,4,8,1,5]}"#).unwrap(), chain_blocks(3, 1).unwrap());
    }

    #[test]
    fn dataset_json_round_trips_and_revalidates() {
        let d = make_dataset(2, 3, 5).unwrap();
        let json = DatasetJson::from_dataset(&d);
        let text = serde_json::to_string(&json).unwrap();
        let back: DatasetJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_dataset().unwrap(), d);

        let mut broken = json.clone();
        broken.states[0][0][0] += 0.5;
        assert!(broken.to_dataset().is_err());
        let mut short = json.clone();
        short.states[1].pop();
        assert!(short.to_dataset().is_err());
        let mut empty = json;
        empty.states.clear();
        assert!(empty.to_dataset().is_err());
    }
}
