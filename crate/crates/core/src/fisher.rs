//! Classical Fisher information of a circuit over a finite dataset and a
//! measurement protocol, and the effective rank derived from it.
//!
//! The model distribution for input `x` is the joint distribution over
//! (basis, outcome) produced by [`crate::quantum::model_distribution`]. The
//! Fisher matrix is the exact expectation
//!
//! ```text
//! F_ij = (1/|D|) Σ_x Σ_y ∂_i P(y|θ,x) ∂_j P(y|θ,x) / P(y|θ,x)
//! ```
//!
//! with outcomes below [`PROBABILITY_FLOOR`] left out.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{self, ComplexMatrix, C64, DEFAULT_RANK_TOL};
use crate::pauli::lie_dimension;
use crate::quantum::{self, Circuit, DensityMatrix, GateOp, MeasurementProtocol};

/// Outcomes with probability at or below this are excluded from the sum.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Rank threshold used with finite-difference gradients.
pub const FD_RANK_TOL: f64 = 1e-6;

pub const DEFAULT_DRAWS: usize = 3;

/// How `∂P/∂θ` is obtained.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradientMethod {
    /// Two-point parameter-shift rule. Rejects composite exponentials.
    Shift,
    /// Analytic derivative of each gate propagated through the rest of the
    /// circuit; composite exponentials use the Daleckii–Krein derivative.
    Exact,
    /// Central differences with the given step.
    FiniteDifference { step: f64 },
}

impl GradientMethod {
    pub fn fd() -> Self {
        GradientMethod::FiniteDifference {
            step: DEFAULT_FD_STEP,
        }
    }

    /// Rank threshold matched to the accuracy of the method.
    pub fn default_rank_tol(self) -> f64 {
        match self {
            GradientMethod::FiniteDifference { .. } => FD_RANK_TOL,
            _ => DEFAULT_RANK_TOL,
        }
    }
}

/// Row-major `outcomes × params` matrix of `∂P(y)/∂θ_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityJacobian {
    outcomes: usize,
    params: usize,
    data: Vec<f64>,
}

impl ProbabilityJacobian {
    fn zeros(outcomes: usize, params: usize) -> Self {
        Self {
            outcomes,
            params,
            data: vec![0.0; outcomes * params],
        }
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn params(&self) -> usize {
        self.params
    }

    #[inline]
    pub fn get(&self, y: usize, j: usize) -> f64 {
        self.data[y * self.params + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.outcomes).map(|y| self.get(y, j)).collect()
    }

    fn set_column(&mut self, j: usize, col: &[f64]) {
        for (y, &v) in col.iter().enumerate() {
            self.data[y * self.params + j] = v;
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Weighted (basis, outcome) probabilities of a state or of a state derivative.
fn joint_diagonal(m: &ComplexMatrix, n: usize, protocol: &MeasurementProtocol) -> Vec<f64> {
    let mut v = Vec::with_capacity(protocol.len() << n);
    for (&b, &w) in protocol.bases().iter().zip(protocol.weights()) {
        v.extend(quantum::basis_diagonal(m, n, b).into_iter().map(|p| w * p));
    }
    v
}

/// States before each gate, plus the output state.
fn forward_states(circuit: &Circuit, params: &[f64], input: &ComplexMatrix) -> Result<Vec<ComplexMatrix>> {
    let n = circuit.qubits();
    let mut states = Vec::with_capacity(circuit.gates().len() + 1);
    let mut m = input.clone();
    for g in circuit.gates() {
        states.push(m.clone());
        g.conjugate_in_place(&mut m, n, params)?;
    }
    states.push(m);
    Ok(states)
}

/// Shift and coefficient of the two-point rule for the gate's parameters.
///
/// `u(φ, ω, θ)` factors into `Rz(ω) Ry(θ) Rz(φ)` with `R(a) = exp(-i a σ/2)`,
/// so every slot obeys `∂f = [f(a + π/2) - f(a - π/2)] / 2`. A Pauli
/// exponential `exp(iθP)` rotates at twice the rate: `∂f = f(θ + π/4) - f(θ - π/4)`.
fn shift_rule(gate: &GateOp, index: usize) -> Result<(f64, f64)> {
    match gate {
        GateOp::Single { .. } => Ok((FRAC_PI_2, 0.5)),
        GateOp::Generator { .. } => Ok((FRAC_PI_4, 1.0)),
        GateOp::Composite { generators, .. } if generators.len() == 1 => Ok((FRAC_PI_4, 1.0)),
        _ => Err(Error::NotShiftCompatible { gate: index }),
    }
}

/// Probabilities and their Jacobian for one input state.
fn input_jacobian(
    circuit: &Circuit,
    params: &[f64],
    input: &ComplexMatrix,
    protocol: &MeasurementProtocol,
    method: GradientMethod,
) -> Result<(Vec<f64>, ProbabilityJacobian)> {
    let n = circuit.qubits();
    let p = circuit.param_count();
    let ngates = circuit.gates().len();
    let outcomes = protocol.len() << n;
    let mut jac = ProbabilityJacobian::zeros(outcomes, p);

    if let GradientMethod::FiniteDifference { step } = method {
        if !(step > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "finite-difference step must be positive, got {step}"
            )));
        }
        let eval = |theta: &[f64]| -> Result<Vec<f64>> {
            let mut m = input.clone();
            circuit.conjugate_range(&mut m, 0..ngates, theta)?;
            Ok(joint_diagonal(&m, n, protocol))
        };
        let probs = eval(params)?;
        let mut theta = params.to_vec();
        for j in 0..p {
            theta[j] = params[j] + step;
            let plus = eval(&theta)?;
            theta[j] = params[j] - step;
            let minus = eval(&theta)?;
            theta[j] = params[j];
            let col: Vec<f64> = plus
                .iter()
                .zip(&minus)
                .map(|(a, b)| (a - b) / (2.0 * step))
                .collect();
            jac.set_column(j, &col);
        }
        return Ok((probs, jac));
    }

    if method == GradientMethod::Shift {
        for (k, g) in circuit.gates().iter().enumerate() {
            if !g.slots().is_empty() {
                shift_rule(g, k)?;
            }
        }
    }

    let states = forward_states(circuit, params, input)?;
    let probs = joint_diagonal(&states[ngates], n, protocol);

    for (k, gate) in circuit.gates().iter().enumerate() {
        let slots = gate.slots();
        if slots.is_empty() {
            continue;
        }
        match method {
            GradientMethod::Shift => {
                let (shift, coef) = shift_rule(gate, k)?;
                let mut theta = params.to_vec();
                for &s in slots {
                    let run = |delta: f64, theta: &mut [f64]| -> Result<Vec<f64>> {
                        theta[s] = params[s] + delta;
                        let mut m = states[k].clone();
                        gate.conjugate_in_place(&mut m, n, theta)?;
                        circuit.conjugate_range(&mut m, k + 1..ngates, theta)?;
                        theta[s] = params[s];
                        Ok(joint_diagonal(&m, n, protocol))
                    };
                    let plus = run(shift, &mut theta)?;
                    let minus = run(-shift, &mut theta)?;
                    let col: Vec<f64> = plus
                        .iter()
                        .zip(&minus)
                        .map(|(a, b)| coef * (a - b))
                        .collect();
                    jac.set_column(s, &col);
                }
            }
            GradientMethod::Exact => {
                let derivs = gate.conjugation_derivatives(&states[k], n, params)?;
                for (&s, mut d) in slots.iter().zip(derivs) {
                    circuit.conjugate_range(&mut d, k + 1..ngates, params)?;
                    jac.set_column(s, &joint_diagonal(&d, n, protocol));
                }
            }
            GradientMethod::FiniteDifference { .. } => unreachable!(),
        }
    }
    Ok((probs, jac))
}

/// `∂P(y|θ,x)/∂θ_j` for every (basis, outcome) row `y` and parameter `j`.
pub fn prob_gradients(
    circuit: &Circuit,
    params: &[f64],
    input: &DensityMatrix,
    protocol: &MeasurementProtocol,
    method: GradientMethod,
) -> Result<ProbabilityJacobian> {
    circuit.check_params(params)?;
    quantum::check_register(circuit, input)?;
    Ok(input_jacobian(circuit, params, input.matrix(), protocol, method)?.1)
}

/// Symmetric PSD Fisher matrix and its ascending spectrum.
#[derive(Clone, Debug)]
pub struct FisherMatrix {
    pub matrix: ComplexMatrix,
    pub eigenvalues: Vec<f64>,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn rank(&self, rel_tol: f64) -> Result<usize> {
        numerics::rank_from_eigenvalues(&self.eigenvalues, rel_tol)
    }
}

/// Fisher information averaged uniformly over `dataset`.
pub fn fisher_matrix(
    circuit: &Circuit,
    params: &[f64],
    dataset: &Dataset,
    protocol: &MeasurementProtocol,
    method: GradientMethod,
) -> Result<FisherMatrix> {
    circuit.check_params(params)?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if dataset.qubits() != circuit.qubits() {
        return Err(Error::DimensionMismatch {
            expected: circuit.qubits(),
            found: dataset.qubits(),
        });
    }
    let p = circuit.param_count();
    let mut f = vec![0.0f64; p * p];
    let mut grad = vec![0.0f64; p];
    for state in dataset.states() {
        let (probs, jac) = input_jacobian(circuit, params, state.matrix(), protocol, method)?;
        for (y, &py) in probs.iter().enumerate() {
            if py <= PROBABILITY_FLOOR {
                continue;
            }
            grad.copy_from_slice(&jac.data[y * p..(y + 1) * p]);
            let inv = 1.0 / py;
            for i in 0..p {
                let gi = grad[i] * inv;
                if gi == 0.0 {
                    continue;
                }
                let row = &mut f[i * p..(i + 1) * p];
                for (fij, &gj) in row[i..].iter_mut().zip(&grad[i..]) {
                    *fij += gi * gj;
                }
            }
        }
    }
    let scale = 1.0 / dataset.len() as f64;
    let matrix = ComplexMatrix::from_fn(p, p, |i, j| {
        let v = if i <= j { f[i * p + j] } else { f[j * p + i] };
        C64::new(v * scale, 0.0)
    });
    let eigenvalues = numerics::hermitian_eig(&matrix)?.eigenvalues;
    Ok(FisherMatrix {
        matrix,
        eigenvalues,
    })
}

/// Knobs for [`effective_rank`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankSettings {
    pub method: GradientMethod,
    pub draws: usize,
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for RankSettings {
    fn default() -> Self {
        Self {
            method: GradientMethod::Shift,
            draws: DEFAULT_DRAWS,
            rel_tol: DEFAULT_RANK_TOL,
            seed: 0,
        }
    }
}

impl RankSettings {
    /// Defaults with `method` and its matching rank threshold.
    pub fn with_method(method: GradientMethod) -> Self {
        Self {
            method,
            rel_tol: method.default_rank_tol(),
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankReport {
    /// Effective rank κ: the largest thresholded rank over the draws.
    pub kappa: usize,
    pub p: usize,
    /// `κ / p`, or 0 when `p = 0`.
    pub eta: f64,
    /// `4^n - 1`.
    pub d_n: usize,
    /// Rank at each draw, in draw order.
    pub draws: Vec<usize>,
    /// Fisher spectrum (ascending) of the first draw attaining κ.
    pub spectrum: Vec<f64>,
}

/// Effective rank of `circuit` with parameters drawn uniformly from `[0, 2π)`.
///
/// Draws stop early once a draw reaches `p`, which no later draw can exceed.
pub fn effective_rank(
    circuit: &Circuit,
    dataset: &Dataset,
    protocol: &MeasurementProtocol,
    settings: &RankSettings,
) -> Result<RankReport> {
    if settings.draws == 0 {
        return Err(Error::InvalidArgument("at least one parameter draw is required".into()));
    }
    let p = circuit.param_count();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut draws = Vec::with_capacity(settings.draws);
    let mut kappa = 0;
    let mut spectrum = Vec::new();
    for _ in 0..settings.draws {
        let params: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..TAU)).collect();
        let fim = fisher_matrix(circuit, &params, dataset, protocol, settings.method)?;
        let r = fim.rank(settings.rel_tol)?;
        if draws.is_empty() || r > kappa {
            kappa = r;
            spectrum = fim.eigenvalues;
        }
        draws.push(r);
        if kappa == p {
            break;
        }
    }
    Ok(RankReport {
        kappa,
        p,
        eta: if p == 0 { 0.0 } else { kappa as f64 / p as f64 },
        d_n: lie_dimension(circuit.qubits()),
        draws,
        spectrum,
    })
}

/// `η = κ / p`.
pub fn parameter_efficiency(report: &RankReport) -> Result<f64> {
    if report.p == 0 {
        return Err(Error::InvalidArgument(
            "parameter efficiency is undefined without parameters".into(),
        ));
    }
    Ok(report.kappa as f64 / report.p as f64)
}
