//! Density-matrix simulation of parameterized circuits and the measurement
//! protocols that turn an output state into a probability vector.
//!
//! Qubit 0 is the most significant bit of a basis index, so outcome `y` of an
//! `n`-qubit measurement reads as the big-endian bit string `y_0 y_1 … y_{n-1}`.
//!
//! Gates act on matrices through index arithmetic on the affected qubits;
//! [`GateOp::unitary`] builds the Kronecker-embedded `2^n × 2^n` unitary and
//! serves as the reference implementation in tests.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;


// Float math for no_std builds; shadowed by inherent methods when std is linked.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::numerics::{self, ComplexMatrix, C64, I, ONE, ZERO};
use crate::pauli::PauliString;

/// Largest register simulated.
pub const MAX_QUBITS: usize = 5;

const STATE_TOL: f64 = 1e-10;

/// A 2×2 complex matrix in row-major order.
pub type Mat2 = [[C64; 2]; 2];

// ---------------------------------------------------------------------------
// Density matrices
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    qubits: usize,
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity (all within 1e-10).
    pub fn new(qubits: usize, matrix: ComplexMatrix) -> Result<Self> {
        check_qubits(qubits)?;
        let dim = 1usize << qubits;
        if matrix.rows() != dim || matrix.cols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: matrix.rows(),
            });
        }
        let dev = matrix.hermitian_deviation().unwrap_or(f64::INFINITY);
        if dev > STATE_TOL {
            return Err(Error::InvalidState(alloc::format!(
                "not Hermitian (deviation {dev:e})"
            )));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::InvalidState(alloc::format!("trace {tr} is not 1")));
        }
        let mut sym = matrix.clone();
        sym.symmetrize();
        let eig = numerics::hermitian_eig(&sym)?;
        if eig.eigenvalues[0] < -STATE_TOL {
            return Err(Error::InvalidState(alloc::format!(
                "negative eigenvalue {:e}",
                eig.eigenvalues[0]
            )));
        }
        Ok(Self { qubits, matrix })
    }

    pub(crate) fn from_trusted(qubits: usize, matrix: ComplexMatrix) -> Self {
        Self { qubits, matrix }
    }

    /// `|index⟩⟨index|`.
    pub fn basis_state(qubits: usize, index: usize) -> Result<Self> {
        check_qubits(qubits)?;
        let dim = 1usize << qubits;
        if index >= dim {
            return Err(Error::InvalidArgument(alloc::format!(
                "basis index {index} out of range for {qubits} qubits"
            )));
        }
        let mut m = ComplexMatrix::zeros(dim, dim);
        m[(index, index)] = ONE;
        Ok(Self { qubits, matrix: m })
    }

    /// `I / 2^n`.
    pub fn maximally_mixed(qubits: usize) -> Result<Self> {
        check_qubits(qubits)?;
        let dim = 1usize << qubits;
        let m = ComplexMatrix::identity(dim).scale(C64::new(1.0 / dim as f64, 0.0));
        Ok(Self { qubits, matrix: m })
    }

    /// `|ψ⟩⟨ψ|` for a normalized amplitude vector.
    pub fn pure(qubits: usize, amplitudes: &[C64]) -> Result<Self> {
        check_qubits(qubits)?;
        let dim = 1usize << qubits;
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: amplitudes.len(),
            });
        }
        let m = ComplexMatrix::from_fn(dim, dim, |r, c| amplitudes[r] * amplitudes[c].conj());
        Self::new(qubits, m)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.qubits
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let mut m = self.matrix.clone();
        m.symmetrize();
        Ok(numerics::hermitian_eig(&m)?.eigenvalues)
    }
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        return Err(Error::InvalidArgument(alloc::format!(
            "qubit count must be in 1..={MAX_QUBITS}, got {n}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Local gate kernels
// ---------------------------------------------------------------------------

/// `m ← L_q · m · R_q†` where `L_q`, `R_q` act as 2×2 matrices on qubit `q`.
pub fn sandwich_single(m: &mut ComplexMatrix, n: usize, q: usize, left: &Mat2, right: &Mat2) {
    let dim = 1usize << n;
    let bit = 1usize << (n - 1 - q);
    let data = m.as_mut_slice();
    // Rows: m ← L · m.
    for r0 in 0..dim {
        if r0 & bit != 0 {
            continue;
        }
        let r1 = r0 | bit;
        for c in 0..dim {
            let a = data[r0 * dim + c];
            let b = data[r1 * dim + c];
            data[r0 * dim + c] = left[0][0] * a + left[0][1] * b;
            data[r1 * dim + c] = left[1][0] * a + left[1][1] * b;
        }
    }
    // Columns: m ← m · R†.
    let rc = [
        [right[0][0].conj(), right[0][1].conj()],
        [right[1][0].conj(), right[1][1].conj()],
    ];
    for r in 0..dim {
        let row = &mut data[r * dim..(r + 1) * dim];
        for c0 in 0..dim {
            if c0 & bit != 0 {
                continue;
            }
            let c1 = c0 | bit;
            let a = row[c0];
            let b = row[c1];
            row[c0] = a * rc[0][0] + b * rc[0][1];
            row[c1] = a * rc[1][0] + b * rc[1][1];
        }
    }
}

/// `m ← CNOT · m · CNOT` (CNOT is a real symmetric permutation).
pub fn conjugate_cnot(m: &mut ComplexMatrix, n: usize, control: usize, target: usize) {
    let dim = 1usize << n;
    let cbit = 1usize << (n - 1 - control);
    let tbit = 1usize << (n - 1 - target);
    let perm = |b: usize| if b & cbit != 0 { b ^ tbit } else { b };
    let src = m.clone();
    let s = src.as_slice();
    let d = m.as_mut_slice();
    for r in 0..dim {
        let pr = perm(r);
        for c in 0..dim {
            d[pr * dim + perm(c)] = s[r * dim + c];
        }
    }
}

/// The single-qubit gate `u(φ, ω, θ)`:
///
/// ```text
/// [ cos(θ/2) e^{-i(φ+ω)/2}   -sin(θ/2) e^{ i(φ-ω)/2} ]
/// [ sin(θ/2) e^{-i(φ-ω)/2}    cos(θ/2) e^{ i(φ+ω)/2} ]
/// ```
pub fn u_gate(phi: f64, omega: f64, theta: f64) -> Mat2 {
    let (s, c) = (0.5 * theta).sin_cos();
    let e = |x: f64| C64::new(0.0, x).exp();
    [
        [e(-0.5 * (phi + omega)) * c, -e(0.5 * (phi - omega)) * s],
        [e(-0.5 * (phi - omega)) * s, e(0.5 * (phi + omega)) * c],
    ]
}

/// `∂u/∂φ`, `∂u/∂ω`, `∂u/∂θ`.
pub fn u_gate_derivatives(phi: f64, omega: f64, theta: f64) -> [Mat2; 3] {
    let u = u_gate(phi, omega, theta);
    let h = C64::new(0.0, 0.5);
    let d_phi = [[-h * u[0][0], h * u[0][1]], [-h * u[1][0], h * u[1][1]]];
    let d_omega = [[-h * u[0][0], -h * u[0][1]], [h * u[1][0], h * u[1][1]]];
    let (s, c) = (0.5 * theta).sin_cos();
    let e = |x: f64| C64::new(0.0, x).exp();
    let d_theta = [
        [e(-0.5 * (phi + omega)) * (-0.5 * s), -e(0.5 * (phi - omega)) * (0.5 * c)],
        [e(-0.5 * (phi - omega)) * (0.5 * c), e(0.5 * (phi + omega)) * (-0.5 * s)],
    ];
    [d_phi, d_omega, d_theta]
}

fn embed_single(n: usize, q: usize, g: &Mat2) -> ComplexMatrix {
    let g = ComplexMatrix::from_vec(2, 2, vec![g[0][0], g[0][1], g[1][0], g[1][1]]).unwrap();
    (0..n)
        .map(|k| if k == q { g.clone() } else { ComplexMatrix::identity(2) })
        .reduce(|a, b| a.kron(&b))
        .unwrap()
}

fn dense_cnot(n: usize, control: usize, target: usize) -> ComplexMatrix {
    let dim = 1usize << n;
    let cbit = 1usize << (n - 1 - control);
    let tbit = 1usize << (n - 1 - target);
    let mut m = ComplexMatrix::zeros(dim, dim);
    for b in 0..dim {
        let out = if b & cbit != 0 { b ^ tbit } else { b };
        m[(out, b)] = ONE;
    }
    m
}

// ---------------------------------------------------------------------------
// Gates and circuits
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub enum GateOp {
    /// `u(φ, ω, θ)` on one qubit; slots hold (φ, ω, θ).
    Single { qubit: usize, slots: [usize; 3] },
    Cnot { control: usize, target: usize },
    /// `exp(iθ P)` for one Pauli string.
    Generator { pauli: PauliString, slot: usize },
    /// `exp(i Σ_j θ_j P_j)` over several Pauli strings at once.
    Composite {
        generators: Vec<PauliString>,
        slots: Vec<usize>,
    },
}

impl GateOp {
    pub fn kind(&self) -> GateKind {
        match self {
            GateOp::Single { .. } => GateKind::Single,
            GateOp::Cnot { .. } => GateKind::Cnot,
            GateOp::Generator { .. } => GateKind::Generator,
            GateOp::Composite { .. } => GateKind::Composite,
        }
    }

    pub fn slots(&self) -> &[usize] {
        match self {
            GateOp::Single { slots, .. } => slots,
            GateOp::Cnot { .. } => &[],
            GateOp::Generator { slot, .. } => core::slice::from_ref(slot),
            GateOp::Composite { slots, .. } => slots,
        }
    }

    /// Whether every parameter of the gate obeys a two-point shift rule.
    pub fn shift_compatible(&self) -> bool {
        !matches!(self, GateOp::Composite { generators, .. } if generators.len() > 1)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let check = |q: usize| {
            if q >= n {
                Err(Error::QubitOutOfRange {
                    index: q,
                    qubits: n,
                })
            } else {
                Ok(())
            }
        };
        match self {
            GateOp::Single { qubit, .. } => check(*qubit),
            GateOp::Cnot { control, target } => {
                check(*control)?;
                check(*target)?;
                if control == target {
                    return Err(Error::InvalidGate(alloc::format!(
                        "cnot needs distinct qubits, got {control} twice"
                    )));
                }
                Ok(())
            }
            GateOp::Generator { pauli, .. } => check_pauli(pauli, n),
            GateOp::Composite { generators, slots } => {
                if generators.len() != slots.len() || generators.is_empty() {
                    return Err(Error::InvalidGate(alloc::format!(
                        "composite gate has {} generators and {} slots",
                        generators.len(),
                        slots.len()
                    )));
                }
                generators.iter().try_for_each(|p| check_pauli(p, n))
            }
        }
    }

    fn check_slots(&self, len: usize) -> Result<()> {
        match self.slots().iter().find(|&&s| s >= len) {
            Some(&slot) => Err(Error::SlotOutOfRange { slot, len }),
            None => Ok(()),
        }
    }

    /// Exponent `Σ θ_j P_j` of a composite gate.
    fn exponent(generators: &[PauliString], slots: &[usize], params: &[f64]) -> ComplexMatrix {
        let dim = 1usize << generators[0].qubits();
        let mut a = ComplexMatrix::zeros(dim, dim);
        for (p, &s) in generators.iter().zip(slots) {
            p.add_scaled_to(&mut a, params[s]);
        }
        a
    }

    fn generator_unitary(pauli: &PauliString, theta: f64) -> ComplexMatrix {
        let (s, c) = theta.sin_cos();
        let dim = 1usize << pauli.qubits();
        let mut g = ComplexMatrix::identity(dim).scale(C64::new(c, 0.0));
        g.axpy(I * s, &pauli.matrix());
        g
    }

    /// Dense `2^n × 2^n` unitary of the gate, built by Kronecker embedding.
    pub fn unitary(&self, n: usize, params: &[f64]) -> Result<ComplexMatrix> {
        self.validate(n)?;
        self.check_slots(params.len())?;
        Ok(match self {
            GateOp::Single { qubit, slots } => embed_single(
                n,
                *qubit,
                &u_gate(params[slots[0]], params[slots[1]], params[slots[2]]),
            ),
            GateOp::Cnot { control, target } => dense_cnot(n, *control, *target),
            GateOp::Generator { pauli, slot } => Self::generator_unitary(pauli, params[*slot]),
            GateOp::Composite { generators, slots } => {
                numerics::unitary_exp(&Self::exponent(generators, slots, params))?
            }
        })
    }

    /// `m ← G m G†` without bounds checks beyond those done by the caller.
    pub(crate) fn conjugate_in_place(
        &self,
        m: &mut ComplexMatrix,
        n: usize,
        params: &[f64],
    ) -> Result<()> {
        match self {
            GateOp::Single { qubit, slots } => {
                let u = u_gate(params[slots[0]], params[slots[1]], params[slots[2]]);
                sandwich_single(m, n, *qubit, &u, &u);
            }
            GateOp::Cnot { control, target } => conjugate_cnot(m, n, *control, *target),
            GateOp::Generator { pauli, slot } => {
                let g = Self::generator_unitary(pauli, params[*slot]);
                *m = g.conjugate(m);
            }
            GateOp::Composite { generators, slots } => {
                let g = numerics::unitary_exp(&Self::exponent(generators, slots, params))?;
                *m = g.conjugate(m);
            }
        }
        Ok(())
    }

    /// `∂/∂θ_{slot k} (G ρ G†)` for each of the gate's slots, in slot order.
    pub(crate) fn conjugation_derivatives(
        &self,
        rho: &ComplexMatrix,
        n: usize,
        params: &[f64],
    ) -> Result<Vec<ComplexMatrix>> {
        let sym = |mut d: ComplexMatrix| {
            // dG ρ G† + G ρ dG† = X + X†.
            let dh = d.adjoint();
            d.axpy(ONE, &dh);
            d
        };
        Ok(match self {
            GateOp::Single { qubit, slots } => {
                let (a, b, c) = (params[slots[0]], params[slots[1]], params[slots[2]]);
                let u = u_gate(a, b, c);
                u_gate_derivatives(a, b, c)
                    .iter()
                    .map(|du| {
                        let mut x = rho.clone();
                        sandwich_single(&mut x, n, *qubit, du, &u);
                        sym(x)
                    })
                    .collect()
            }
            GateOp::Cnot { .. } => Vec::new(),
            GateOp::Generator { pauli, slot } => {
                let theta = params[*slot];
                let g = Self::generator_unitary(pauli, theta);
                // d/dθ exp(iθP) = iP exp(iθP).
                let dg = pauli.matrix().matmul(&g).scale(I);
                vec![sym(dg.matmul(rho).matmul(&g.adjoint()))]
            }
            GateOp::Composite { generators, slots } => {
                let a = Self::exponent(generators, slots, params);
                let eig = numerics::hermitian_eig(&a)?;
                let g = eig.apply_fn(|l| C64::new(0.0, l).exp());
                let rho_gh = rho.matmul(&g.adjoint());
                generators
                    .iter()
                    .map(|p| {
                        let dg = numerics::unitary_exp_directional_with(&eig, &p.matrix())?;
                        Ok(sym(dg.matmul(&rho_gh)))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        })
    }
}

fn check_pauli(p: &PauliString, n: usize) -> Result<()> {
    if p.qubits() != n {
        return Err(Error::InvalidGate(alloc::format!(
            "Pauli string {p} has {} letters on a {n}-qubit register",
            p.qubits()
        )));
    }
    if p.is_identity() {
        return Err(Error::InvalidGate(String::from(
            "identity is not a generator",
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateKind {
    Single,
    Cnot,
    Generator,
    Composite,
}

impl GateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GateKind::Single => "single",
            GateKind::Cnot => "cnot",
            GateKind::Generator => "generator",
            GateKind::Composite => "composite",
        }
    }
}

impl FromStr for GateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(GateKind::Single),
            "cnot" => Ok(GateKind::Cnot),
            "generator" => Ok(GateKind::Generator),
            "composite" => Ok(GateKind::Composite),
            other => Err(Error::InvalidGate(alloc::format!("unknown gate kind {other:?}"))),
        }
    }
}

/// An ordered gate list over `qubits` wires with `param_count` parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    qubits: usize,
    gates: Vec<GateOp>,
    param_count: usize,
}

impl Circuit {
    /// Validates qubit indices and that every slot is below `param_count`
    /// and used by at most one gate position.
    pub fn new(qubits: usize, gates: Vec<GateOp>, param_count: usize) -> Result<Self> {
        check_qubits(qubits)?;
        let mut seen = vec![false; param_count];
        for (k, g) in gates.iter().enumerate() {
            g.validate(qubits)
                .map_err(|e| Error::InvalidCircuit(alloc::format!("gate {k}: {e}")))?;
            for &s in g.slots() {
                if s >= param_count {
                    return Err(Error::SlotOutOfRange {
                        slot: s,
                        len: param_count,
                    });
                }
                if core::mem::replace(&mut seen[s], true) {
                    return Err(Error::InvalidCircuit(alloc::format!(
                        "parameter slot {s} is shared"
                    )));
                }
            }
        }
        Ok(Self {
            qubits,
            gates,
            param_count,
        })
    }

    pub fn empty(qubits: usize) -> Result<Self> {
        Self::new(qubits, Vec::new(), 0)
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn gates(&self) -> &[GateOp] {
        &self.gates
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub fn dim(&self) -> usize {
        1 << self.qubits
    }

    pub(crate) fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count {
            return Err(Error::ParamLength {
                expected: self.param_count,
                found: params.len(),
            });
        }
        Ok(())
    }

    /// Applies gates `range` to `m` in order.
    pub(crate) fn conjugate_range(
        &self,
        m: &mut ComplexMatrix,
        range: core::ops::Range<usize>,
        params: &[f64],
    ) -> Result<()> {
        for g in &self.gates[range] {
            g.conjugate_in_place(m, self.qubits, params)?;
        }
        Ok(())
    }

    /// Dense unitary of the whole circuit.
    pub fn unitary(&self, params: &[f64]) -> Result<ComplexMatrix> {
        self.check_params(params)?;
        let mut u = ComplexMatrix::identity(self.dim());
        for g in &self.gates {
            u = g.unitary(self.qubits, params)?.matmul(&u);
        }
        Ok(u)
    }
}

/// `G ρ G†` for one gate; `params` is the full circuit parameter vector.
pub fn apply_gate(state: &DensityMatrix, gate: &GateOp, params: &[f64]) -> Result<DensityMatrix> {
    gate.validate(state.qubits)?;
    gate.check_slots(params.len())?;
    let mut m = state.matrix.clone();
    gate.conjugate_in_place(&mut m, state.qubits, params)?;
    Ok(DensityMatrix::from_trusted(state.qubits, m))
}

/// `U(θ) ρ U(θ)†`.
pub fn run_circuit(circuit: &Circuit, params: &[f64], input: &DensityMatrix) -> Result<DensityMatrix> {
    circuit.check_params(params)?;
    check_register(circuit, input)?;
    let mut m = input.matrix.clone();
    circuit.conjugate_range(&mut m, 0..circuit.gates.len(), params)?;
    Ok(DensityMatrix::from_trusted(input.qubits, m))
}

pub(crate) fn check_register(circuit: &Circuit, input: &DensityMatrix) -> Result<()> {
    if input.qubits != circuit.qubits {
        return Err(Error::DimensionMismatch {
            expected: circuit.qubits,
            found: input.qubits,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Measurement
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub fn as_char(self) -> char {
        match self {
            Basis::X => 'X',
            Basis::Y => 'Y',
            Basis::Z => 'Z',
        }
    }

    /// Single-qubit rotation into the computational basis:
    /// X → H, Y → H·S†, Z → I.
    pub fn change(self) -> Mat2 {
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let r = |x: f64| C64::new(x, 0.0);
        match self {
            Basis::X => [[r(h), r(h)], [r(h), r(-h)]],
            Basis::Y => [[r(h), C64::new(0.0, -h)], [r(h), C64::new(0.0, h)]],
            Basis::Z => [[ONE, ZERO], [ZERO, ONE]],
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// Weighted set of global measurement bases.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementProtocol {
    bases: Vec<Basis>,
    weights: Vec<f64>,
}

impl MeasurementProtocol {
    /// Uniform weights.
    pub fn new(bases: &[Basis]) -> Result<Self> {
        let w = 1.0 / bases.len().max(1) as f64;
        Self::with_weights(bases, &vec![w; bases.len()])
    }

    /// Weights must be positive; they are renormalized to sum to one.
    pub fn with_weights(bases: &[Basis], weights: &[f64]) -> Result<Self> {
        if bases.is_empty() {
            return Err(Error::InvalidProtocol(String::from("no bases")));
        }
        if bases.len() != weights.len() {
            return Err(Error::InvalidProtocol(alloc::format!(
                "{} bases but {} weights",
                bases.len(),
                weights.len()
            )));
        }
        for (k, b) in bases.iter().enumerate() {
            if bases[..k].contains(b) {
                return Err(Error::InvalidProtocol(alloc::format!("duplicate basis {b}")));
            }
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidProtocol(alloc::format!(
                "weights must be positive, got {w}"
            )));
        }
        let total: f64 = weights.iter().sum();
        Ok(Self {
            bases: bases.to_vec(),
            weights: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn bases(&self) -> &[Basis] {
        &self.bases
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    /// Compact label such as `XYZ`.
    pub fn label(&self) -> String {
        self.bases.iter().map(|b| b.as_char()).collect()
    }
}

impl FromStr for MeasurementProtocol {
    type Err = Error;

    /// Parses a basis word such as `XZ` (uniform weights).
    fn from_str(s: &str) -> Result<Self> {
        let bases = s
            .chars()
            .filter(|c| !matches!(c, ',' | ' ' | '{' | '}'))
            .map(|c| match c.to_ascii_uppercase() {
                'X' => Ok(Basis::X),
                'Y' => Ok(Basis::Y),
                'Z' => Ok(Basis::Z),
                other => Err(Error::InvalidProtocol(alloc::format!(
                    "unknown basis {other:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(&bases)
    }
}

/// Real diagonal of `B m B†` with `B` the basis change applied to every qubit.
/// Linear in `m`, so it also maps state derivatives to probability derivatives.
pub(crate) fn basis_diagonal(m: &ComplexMatrix, n: usize, basis: Basis) -> Vec<f64> {
    if basis == Basis::Z {
        return m.diagonal().iter().map(|z| z.re).collect();
    }
    let b = basis.change();
    let mut x = m.clone();
    for q in 0..n {
        sandwich_single(&mut x, n, q, &b, &b);
    }
    x.diagonal().iter().map(|z| z.re).collect()
}

/// Outcome distribution of `state` measured in `basis` on every qubit.
pub fn outcome_probabilities(state: &DensityMatrix, basis: Basis) -> Vec<f64> {
    basis_diagonal(&state.matrix, state.qubits, basis)
        .into_iter()
        .map(|p| p.max(0.0))
        .collect()
}

/// Joint distribution over (basis, outcome): block `b` holds
/// `w_b · P(y | basis b)`.
pub fn model_distribution(
    circuit: &Circuit,
    params: &[f64],
    input: &DensityMatrix,
    protocol: &MeasurementProtocol,
) -> Result<Vec<f64>> {
    let out = run_circuit(circuit, params, input)?;
    Ok(distribution_of(&out, protocol))
}

pub(crate) fn distribution_of(state: &DensityMatrix, protocol: &MeasurementProtocol) -> Vec<f64> {
    let mut v = Vec::with_capacity(protocol.len() * state.dim());
    for (&b, &w) in protocol.bases.iter().zip(&protocol.weights) {
        v.extend(outcome_probabilities(state, b).into_iter().map(|p| w * p));
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{single_matrix, Pauli};
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m2(g: &Mat2) -> ComplexMatrix {
        ComplexMatrix::from_vec(2, 2, vec![g[0][0], g[0][1], g[1][0], g[1][1]]).unwrap()
    }

    fn rz(a: f64) -> ComplexMatrix {
        ComplexMatrix::from_vec(
            2,
            2,
            vec![C64::new(0.0, -a / 2.0).exp(), ZERO, ZERO, C64::new(0.0, a / 2.0).exp()],
        )
        .unwrap()
    }

    fn ry(a: f64) -> ComplexMatrix {
        let (s, c) = (a / 2.0).sin_cos();
        ComplexMatrix::from_vec(2, 2, vec![C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)])
            .unwrap()
    }

    fn random_state(n: usize, rng: &mut impl Rng) -> DensityMatrix {
        let d = 1 << n;
        let g = ComplexMatrix::from_fn(d, d, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let r = g.matmul(&g.adjoint());
        let tr = r.trace().re;
        let mut r = r.scale(C64::new(1.0 / tr, 0.0));
        r.symmetrize();
        DensityMatrix::new(n, r).unwrap()
    }

    #[test]
    fn u_gate_is_rz_ry_rz() {
        let grid = [-2.9, -1.0, 0.0, 0.4, 1.7, PI, 5.5];
        for &phi in &grid {
            for &omega in &grid {
                for &theta in &grid {
                    let u = m2(&u_gate(phi, omega, theta));
                    let prod = rz(omega).matmul(&ry(theta)).matmul(&rz(phi));
                    assert!(u.max_abs_diff(&prod) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn u_gate_derivatives_match_finite_differences() {
        let (a, b, c) = (0.3, -1.2, 2.1);
        let h = 1e-6;
        let d = u_gate_derivatives(a, b, c);
        let fd = |k: usize| {
            let mut p = [a, b, c];
            p[k] += h;
            let plus = m2(&u_gate(p[0], p[1], p[2]));
            p[k] -= 2.0 * h;
            let minus = m2(&u_gate(p[0], p[1], p[2]));
            plus.sub(&minus).scale(C64::new(0.5 / h, 0.0))
        };
        for k in 0..3 {
            assert!(m2(&d[k]).max_abs_diff(&fd(k)) < 1e-8);
        }
    }

    #[test]
    fn single_gate_identity_and_flip() {
        let g = GateOp::Single {
            qubit: 0,
            slots: [0, 1, 2],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_state(2, &mut rng);
        let out = apply_gate(&s, &g, &[0.0, 0.0, 0.0]).unwrap();
        assert!(out.matrix().max_abs_diff(s.matrix()) < 1e-15);

        let zero = DensityMatrix::basis_state(1, 0).unwrap();
        let out = apply_gate(&zero, &g, &[0.0, 0.0, PI]).unwrap();
        let one = DensityMatrix::basis_state(1, 1).unwrap();
        assert!(out.matrix().max_abs_diff(one.matrix()) < 1e-15);
    }

    #[test]
    fn cnot_truth_table() {
        let g = GateOp::Cnot {
            control: 0,
            target: 1,
        };
        let s = DensityMatrix::basis_state(2, 0b10).unwrap();
        let out = apply_gate(&s, &g, &[]).unwrap();
        assert_eq!(out.matrix(), DensityMatrix::basis_state(2, 0b11).unwrap().matrix());
        let s = DensityMatrix::basis_state(2, 0b01).unwrap();
        let out = apply_gate(&s, &g, &[]).unwrap();
        assert_eq!(out.matrix(), s.matrix());
    }

    #[test]
    fn local_kernels_match_dense_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..=4 {
            let s = random_state(n, &mut rng);
            let params: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
            let mut gates = Vec::new();
            for q in 0..n {
                gates.push(GateOp::Single {
                    qubit: q,
                    slots: [0, 1, 2],
                });
            }
            for c in 0..n {
                for t in 0..n {
                    if c != t {
                        gates.push(GateOp::Cnot {
                            control: c,
                            target: t,
                        });
                    }
                }
            }
            let pauli = PauliString::from_code(n, rng.random_range(1..(1 << (2 * n))));
            gates.push(GateOp::Generator { pauli, slot: 3 });
            for g in &gates {
                let fast = apply_gate(&s, g, &params).unwrap();
                let u = g.unitary(n, &params).unwrap();
                let dense = u.conjugate(s.matrix());
                assert!(fast.matrix().max_abs_diff(&dense) < 1e-13, "{g:?}");
            }
        }
    }

    #[test]
    fn generator_gate_is_pauli_exponential() {
        let p: PauliString = "XZ".parse().unwrap();
        let g = GateOp::Generator { pauli: p.clone(), slot: 0 };
        let theta = 0.37;
        let u = g.unitary(2, &[theta]).unwrap();
        let expected = numerics::unitary_exp(&p.matrix().scale(C64::new(theta, 0.0))).unwrap();
        assert!(u.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn circuit_validation() {
        let single = |q, s: [usize; 3]| GateOp::Single { qubit: q, slots: s };
        assert!(Circuit::new(2, vec![single(0, [0, 1, 2])], 3).is_ok());
        assert!(matches!(
            Circuit::new(2, vec![single(0, [0, 1, 3])], 3),
            Err(Error::SlotOutOfRange { .. })
        ));
        assert!(Circuit::new(2, vec![single(0, [0, 1, 2]), single(1, [2, 3, 4])], 5).is_err());
        assert!(Circuit::new(2, vec![single(2, [0, 1, 2])], 3).is_err());
        assert!(Circuit::new(2, vec![GateOp::Cnot { control: 1, target: 1 }], 0).is_err());
        let ident = PauliString::new(vec![Pauli::I, Pauli::I]);
        assert!(Circuit::new(2, vec![GateOp::Generator { pauli: ident, slot: 0 }], 1).is_err());
    }

    #[test]
    fn run_circuit_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_state(2, &mut rng);
        let empty = Circuit::empty(2).unwrap();
        assert_eq!(run_circuit(&empty, &[], &s).unwrap(), s);

        let c = Circuit::new(2, vec![GateOp::Cnot { control: 0, target: 1 }], 0).unwrap();
        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        assert!(run_circuit(&c, &[], &mixed).unwrap().matrix().max_abs_diff(mixed.matrix()) < 1e-15);

        assert!(matches!(
            run_circuit(&c, &[1.0], &mixed),
            Err(Error::ParamLength { .. })
        ));
    }

    #[test]
    fn outcome_probability_examples() {
        let zero = DensityMatrix::basis_state(1, 0).unwrap();
        let z = outcome_probabilities(&zero, Basis::Z);
        assert_eq!(z, vec![1.0, 0.0]);
        let x = outcome_probabilities(&zero, Basis::X);
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);

        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        for b in [Basis::X, Basis::Y, Basis::Z] {
            for p in outcome_probabilities(&mixed, b) {
                assert!((p - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn basis_changes_diagonalize_paulis() {
        // B P B† = Z for the matching Pauli, so its +1 eigenstate maps to |0⟩.
        for (basis, p) in [(Basis::X, Pauli::X), (Basis::Y, Pauli::Y), (Basis::Z, Pauli::Z)] {
            let b = m2(&basis.change());
            let rotated = b.matmul(&single_matrix(p)).matmul(&b.adjoint());
            assert!(rotated.max_abs_diff(&single_matrix(Pauli::Z)) < 1e-15, "{basis}");
        }
    }

    #[test]
    fn outcome_index_is_big_endian() {
        let s = DensityMatrix::basis_state(3, 0b100).unwrap();
        let p = outcome_probabilities(&s, Basis::Z);
        assert_eq!(p[4], 1.0);
        let g = GateOp::Single { qubit: 2, slots: [0, 1, 2] };
        let zero = DensityMatrix::basis_state(3, 0).unwrap();
        let out = apply_gate(&zero, &g, &[0.0, 0.0, PI]).unwrap();
        assert!((outcome_probabilities(&out, Basis::Z)[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn model_distribution_examples() {
        let zero = DensityMatrix::basis_state(1, 0).unwrap();
        let z: MeasurementProtocol = "Z".parse().unwrap();
        let empty = Circuit::empty(1).unwrap();
        assert_eq!(model_distribution(&empty, &[], &zero, &z).unwrap(), vec![1.0, 0.0]);

        let xyz: MeasurementProtocol = "XYZ".parse().unwrap();
        let mixed = DensityMatrix::maximally_mixed(1).unwrap();
        let d = model_distribution(&empty, &[], &mixed, &xyz).unwrap();
        assert_eq!(d.len(), 6);
        assert!(d.iter().all(|p| (p - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn protocol_validation() {
        assert!(MeasurementProtocol::new(&[]).is_err());
        assert!(MeasurementProtocol::new(&[Basis::X, Basis::X]).is_err());
        assert!(MeasurementProtocol::with_weights(&[Basis::X, Basis::Z], &[1.0, 0.0]).is_err());
        let p = MeasurementProtocol::with_weights(&[Basis::X, Basis::Z], &[1.0, 3.0]).unwrap();
        assert_eq!(p.weights(), &[0.25, 0.75]);
        assert!("XQ".parse::<MeasurementProtocol>().is_err());
        assert_eq!("x,y".parse::<MeasurementProtocol>().unwrap().label(), "XY");
    }

    #[test]
    fn density_matrix_validation() {
        let bad = ComplexMatrix::from_real_diagonal(&[1.5, -0.5]);
        assert!(DensityMatrix::new(1, bad).is_err());
        let bad = ComplexMatrix::from_real_diagonal(&[0.5, 0.4]);
        assert!(DensityMatrix::new(1, bad).is_err());
        assert!(DensityMatrix::new(2, ComplexMatrix::identity(2)).is_err());
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let plus = DensityMatrix::pure(1, &[C64::new(h, 0.0), C64::new(h, 0.0)]).unwrap();
        assert!((plus.matrix()[(0, 1)].re - 0.5).abs() < 1e-15);
    }
}
