//! Circuit families: the universal su(2^n) exponential, the hardware-efficient
//! chain of building blocks, and circuits decoded from gate-token sequences.
//!
//! Token `a` on `n` qubits names the pair `(i, j) = (a / n, a % n)`: a `u`
//! gate on qubit `i` when `i == j`, otherwise a CNOT with control `i` and
//! target `j`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::pauli::{lie_dimension, pauli_generators};
use crate::quantum::{Circuit, GateOp};

pub use crate::pauli::PauliString;

/// Orientation of the CNOT chain inside a building block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ChainDirection {
    /// `k → k+1`.
    #[default]
    Forward,
    /// `k+1 → k`.
    Backward,
}

/// Order of the two layers inside a building block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BlockOrder {
    /// Single-qubit layer, then the CNOT chain.
    #[default]
    SinglesFirst,
    CnotsFirst,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ChainLayout {
    pub direction: ChainDirection,
    pub order: BlockOrder,
}

/// `exp(i Σ_j θ_j g_j)` over all `4^n - 1` Pauli generators, as one gate.
pub fn universal_circuit(n: usize) -> Result<Circuit> {
    if n == 0 || n > 4 {
        return Err(Error::InvalidArgument(alloc::format!(
            "universal ansatz needs 1 <= n <= 4, got {n}"
        )));
    }
    let generators = pauli_generators(n)?;
    let p = lie_dimension(n);
    Circuit::new(
        n,
        alloc::vec![GateOp::Composite {
            generators,
            slots: (0..p).collect(),
        }],
        p,
    )
}

/// The same generator set as one `exp(iθ_j g_j)` gate per generator.
pub fn generator_product_circuit(n: usize) -> Result<Circuit> {
    let generators = pauli_generators(n)?;
    let p = generators.len();
    let gates = generators
        .into_iter()
        .enumerate()
        .map(|(slot, pauli)| GateOp::Generator { pauli, slot })
        .collect();
    Circuit::new(n, gates, p)
}

/// `m` stacked chain blocks with the default layout.
pub fn chain_blocks(n: usize, m: usize) -> Result<Circuit> {
    chain_blocks_with(n, m, ChainLayout::default())
}

pub fn chain_blocks_with(n: usize, m: usize, layout: ChainLayout) -> Result<Circuit> {
    if n < 2 {
        return Err(Error::InvalidArgument(alloc::format!(
            "chain blocks need at least 2 qubits, got {n}"
        )));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("chain needs at least one block".into()));
    }
    let mut gates = Vec::with_capacity(m * (2 * n - 1));
    let mut next_slot = 0;
    for _ in 0..m {
        let singles = (0..n).map(|q| {
            let slots = [next_slot + 3 * q, next_slot + 3 * q + 1, next_slot + 3 * q + 2];
            GateOp::Single { qubit: q, slots }
        });
        let cnots = (0..n - 1).map(|k| match layout.direction {
            ChainDirection::Forward => GateOp::Cnot {
                control: k,
                target: k + 1,
            },
            ChainDirection::Backward => GateOp::Cnot {
                control: k + 1,
                target: k,
            },
        });
        match layout.order {
            BlockOrder::SinglesFirst => {
                gates.extend(singles);
                gates.extend(cnots);
            }
            BlockOrder::CnotsFirst => {
                gates.extend(cnots);
                gates.extend(singles);
            }
        }
        next_slot += 3 * n;
    }
    Circuit::new(n, gates, next_slot)
}

/// A gate-token sequence on `n` qubits.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenSequence {
    qubits: usize,
    tokens: Vec<usize>,
}

impl TokenSequence {
    /// Every token must be below `n²`.
    pub fn new(qubits: usize, tokens: Vec<usize>) -> Result<Self> {
        if qubits == 0 {
            return Err(Error::InvalidArgument("token sequences need n >= 1".into()));
        }
        let vocab = qubits * qubits;
        if let Some((position, &token)) = tokens.iter().enumerate().find(|(_, &t)| t >= vocab) {
            return Err(Error::InvalidToken {
                position,
                token,
                qubits,
            });
        }
        Ok(Self { qubits, tokens })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn vocab(&self) -> usize {
        self.qubits * self.qubits
    }

    /// The first `len` tokens.
    pub fn prefix(&self, len: usize) -> Self {
        Self {
            qubits: self.qubits,
            tokens: self.tokens[..len.min(self.tokens.len())].to_vec(),
        }
    }
}

/// Token for the pair `(i, j)`.
pub fn token_of(n: usize, i: usize, j: usize) -> usize {
    n * i + j
}

/// Builds the circuit named by a token sequence; each single-qubit token
/// takes three fresh parameter slots.
pub fn decode_tokens(seq: &TokenSequence) -> Result<Circuit> {
    decode_token_slice(seq.qubits, &seq.tokens)
}

pub(crate) fn decode_token_slice(n: usize, tokens: &[usize]) -> Result<Circuit> {
    let vocab = n * n;
    let mut gates = Vec::with_capacity(tokens.len());
    let mut next_slot = 0;
    for (position, &a) in tokens.iter().enumerate() {
        if a >= vocab {
            return Err(Error::InvalidToken {
                position,
                token: a,
                qubits: n,
            });
        }
        let (i, j) = (a / n, a % n);
        if i == j {
            gates.push(GateOp::Single {
                qubit: i,
                slots: [next_slot, next_slot + 1, next_slot + 2],
            });
            next_slot += 3;
        } else {
            gates.push(GateOp::Cnot {
                control: i,
                target: j,
            });
        }
    }
    Circuit::new(n, gates, next_slot)
}

/// Inverse of [`decode_tokens`] for circuits made of `u` and CNOT gates.
pub fn encode_gates(circuit: &Circuit) -> Result<TokenSequence> {
    let n = circuit.qubits();
    let tokens = circuit
        .gates()
        .iter()
        .enumerate()
        .map(|(k, g)| match g {
            GateOp::Single { qubit, .. } => Ok(token_of(n, *qubit, *qubit)),
            GateOp::Cnot { control, target } => Ok(token_of(n, *control, *target)),
            _ => Err(Error::NotTokenExpressible { gate: k }),
        })
        .collect::<Result<Vec<_>>>()?;
    TokenSequence::new(n, tokens)
}
