#![allow(dead_code)]

use effrank_core::ansatz::{decode_tokens, TokenSequence};
use effrank_core::numerics::{ComplexMatrix, C64};
use effrank_core::quantum::{Basis, Circuit, MeasurementProtocol};
use rand::Rng;

pub fn random_hermitian(n: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let g = ComplexMatrix::from_fn(n, n, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let mut h = g.add(&g.adjoint()).scale(C64::new(0.5, 0.0));
    h.symmetrize();
    h
}

pub fn random_token_circuit(n: usize, len: usize, rng: &mut impl Rng) -> Circuit {
    let tokens = (0..len).map(|_| rng.random_range(0..n * n)).collect();
    decode_tokens(&TokenSequence::new(n, tokens).unwrap()).unwrap()
}

pub fn random_protocol(rng: &mut impl Rng) -> MeasurementProtocol {
    loop {
        let bases: Vec<Basis> = [Basis::X, Basis::Y, Basis::Z]
            .into_iter()
            .filter(|_| rng.random_bool(0.5))
            .collect();
        if !bases.is_empty() {
            let weights: Vec<f64> = bases.iter().map(|_| rng.random_range(0.2..1.0)).collect();
            return MeasurementProtocol::with_weights(&bases, &weights).unwrap();
        }
    }
}

pub fn random_params(p: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..p)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect()
}
