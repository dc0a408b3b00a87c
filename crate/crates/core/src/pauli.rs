//! Pauli strings and the generator basis of su(2^n).

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, C64, ONE, ZERO};

/// Largest register accepted by [`pauli_generators`].
pub const MAX_GENERATOR_QUBITS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pauli {
    I = 0,
    X = 1,
    Y = 2,
    Z = 3,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn from_index(k: usize) -> Option<Self> {
        Self::ALL.get(k).copied()
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    fn phases(self) -> bool {
        matches!(self, Pauli::Y | Pauli::Z)
    }
}

/// A tensor product of single-qubit Paulis; letter 0 acts on qubit 0, the
/// most significant bit of a basis index.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PauliString {
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Self {
        Self { letters }
    }

    /// Decodes the base-4 word `code` (I=0, X=1, Y=2, Z=3, qubit 0 most
    /// significant) on `n` qubits.
    pub fn from_code(n: usize, mut code: usize) -> Self {
        let mut letters = alloc::vec![Pauli::I; n];
        for slot in letters.iter_mut().rev() {
            *slot = Pauli::ALL[code % 4];
            code /= 4;
        }
        Self { letters }
    }

    pub fn code(&self) -> usize {
        self.letters.iter().fold(0, |acc, &p| acc * 4 + p as usize)
    }

    pub fn qubits(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    pub fn is_identity(&self) -> bool {
        self.letters.iter().all(|&p| p == Pauli::I)
    }

    /// Bit masks over basis indices: bits flipped by X/Y letters and bits
    /// picking up a sign from Y/Z letters, plus the number of Y letters.
    fn masks(&self) -> (usize, usize, usize) {
        let n = self.letters.len();
        let mut flip = 0;
        let mut phase = 0;
        let mut ys = 0;
        for (q, &p) in self.letters.iter().enumerate() {
            let bit = 1 << (n - 1 - q);
            if p.flips() {
                flip |= bit;
            }
            if p.phases() {
                phase |= bit;
            }
            if p == Pauli::Y {
                ys += 1;
            }
        }
        (flip, phase, ys)
    }

    /// `(row, value)` of the single nonzero entry in column `col`.
    pub fn column_entry(&self, col: usize) -> (usize, C64) {
        let (flip, phase, ys) = self.masks();
        // Y = iXZ: each Y contributes a factor i, each set phase bit a sign.
        let mut v = match ys % 4 {
            0 => ONE,
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        };
        if (col & phase).count_ones() % 2 == 1 {
            v = -v;
        }
        (col ^ flip, v)
    }

    pub fn matrix(&self) -> ComplexMatrix {
        let dim = 1 << self.letters.len();
        let mut m = ComplexMatrix::zeros(dim, dim);
        for col in 0..dim {
            let (row, v) = self.column_entry(col);
            m[(row, col)] = v;
        }
        m
    }

    /// `m += s · P`.
    pub fn add_scaled_to(&self, m: &mut ComplexMatrix, s: f64) {
        let dim = m.rows();
        for col in 0..dim {
            let (row, v) = self.column_entry(col);
            m[(row, col)] += v * s;
        }
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.letters {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::InvalidArgument(alloc::format!(
                    "invalid Pauli letter {other:?} in {s:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        if letters.is_empty() {
            return Err(Error::InvalidArgument(String::from("empty Pauli string")));
        }
        Ok(Self { letters })
    }
}

/// All `4^n - 1` non-identity Pauli strings in ascending base-4 order.
pub fn pauli_generators(n: usize) -> Result<Vec<PauliString>> {
    if n == 0 || n > MAX_GENERATOR_QUBITS {
        return Err(Error::InvalidArgument(alloc::format!(
            "generator set needs 1 <= n <= {MAX_GENERATOR_QUBITS}, got {n}"
        )));
    }
    Ok((1..1usize << (2 * n))
        .map(|code| PauliString::from_code(n, code))
        .collect())
}

/// `4^n - 1`, the dimension of su(2^n).
pub fn lie_dimension(n: usize) -> usize {
    (1usize << (2 * n)) - 1
}

/// 2x2 matrix of a single Pauli letter.
pub fn single_matrix(p: Pauli) -> ComplexMatrix {
    match p {
        Pauli::I => ComplexMatrix::identity(2),
        Pauli::X => ComplexMatrix::from_vec(2, 2, alloc::vec![ZERO, ONE, ONE, ZERO]).unwrap(),
        Pauli::Y => ComplexMatrix::from_vec(
            2,
            2,
            alloc::vec![ZERO, C64::new(0.0, -1.0), C64::new(0.0, 1.0), ZERO],
        )
        .unwrap(),
        Pauli::Z => ComplexMatrix::from_real_diagonal(&[1.0, -1.0]),
    }
}
