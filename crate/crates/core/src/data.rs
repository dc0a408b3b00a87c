//! Random mixed-state datasets from the Wishart ensemble.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, C64};
use crate::quantum::DensityMatrix;

/// Largest register for which datasets are generated.
pub const MAX_DATA_QUBITS: usize = 4;

/// States per canonical "rich" dataset at `n` qubits.
pub fn rich_dataset_size(n: usize) -> usize {
    if n >= 4 {
        40
    } else {
        20
    }
}

/// A finite list of input states, drawn uniformly.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    qubits: usize,
    states: Vec<DensityMatrix>,
    seed: u64,
}

impl Dataset {
    /// Builds a dataset from explicit states; all must share `qubits`.
    pub fn from_states(qubits: usize, states: Vec<DensityMatrix>, seed: u64) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(s) = states.iter().find(|s| s.qubits() != qubits) {
            return Err(Error::DimensionMismatch {
                expected: qubits,
                found: s.qubits(),
            });
        }
        Ok(Self {
            qubits,
            states,
            seed,
        })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn states(&self) -> &[DensityMatrix] {
        &self.states
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// The first `k` states (at least one).
    pub fn prefix(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.states.len() {
            return Err(Error::InvalidArgument(alloc::format!(
                "prefix length {k} outside 1..={}",
                self.states.len()
            )));
        }
        Ok(Self {
            qubits: self.qubits,
            states: self.states[..k].to_vec(),
            seed: self.seed,
        })
    }
}

/// `GG† / Tr(GG†)` with `G` a square matrix of standard complex Gaussians.
pub fn wishart_state<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<DensityMatrix> {
    if n == 0 || n > MAX_DATA_QUBITS {
        return Err(Error::InvalidArgument(alloc::format!(
            "Wishart states need 1 <= n <= {MAX_DATA_QUBITS}, got {n}"
        )));
    }
    let dim = 1usize << n;
    let scale = core::f64::consts::FRAC_1_SQRT_2;
    let g = ComplexMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    });
    let w = g.matmul(&g.adjoint());
    let tr = w.trace().re;
    let mut rho = w.scale(C64::new(1.0 / tr, 0.0));
    rho.symmetrize();
    DensityMatrix::new(n, rho)
}

/// `size` Wishart states from the stream seeded by `seed`. States are drawn
/// sequentially, so smaller datasets are prefixes of larger ones.
pub fn make_dataset(n: usize, size: usize, seed: u64) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = (0..size)
        .map(|_| wishart_state(n, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Dataset::from_states(n, states, seed)
}
