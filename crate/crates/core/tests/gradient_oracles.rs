//! Independent finite-difference checks of every analytic derivative path.

mod common;

use common::*;
use effrank_core::ansatz::{generator_product_circuit, universal_circuit};
use effrank_core::data::make_dataset;
use effrank_core::fisher::{prob_gradients, GradientMethod};
use effrank_core::numerics::{unitary_exp, unitary_exp_directional, ComplexMatrix, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fd_directional(a: &ComplexMatrix, e: &ComplexMatrix, h: f64) -> ComplexMatrix {
    let plus = unitary_exp(&a.add(&e.scale(C64::new(h, 0.0)))).unwrap();
    let minus = unitary_exp(&a.sub(&e.scale(C64::new(h, 0.0)))).unwrap();
    plus.sub(&minus).scale(C64::new(0.5 / h, 0.0))
}

#[test]
fn directional_derivative_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let dim = [2, 4, 8][trial % 3];
        let a = random_hermitian(dim, &mut rng).scale(C64::new(2.0, 0.0));
        let e = random_hermitian(dim, &mut rng);
        let exact = unitary_exp_directional(&a, &e).unwrap();
        let fd = fd_directional(&a, &e, 1e-5);
        worst = worst.max(exact.max_abs_diff(&fd));
    }
    assert!(worst < 1e-6, "worst deviation {worst:e}");
}

#[test]
fn directional_derivative_4x4_within_1e7() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let a = random_hermitian(4, &mut rng);
        let e = random_hermitian(4, &mut rng);
        let d = unitary_exp_directional(&a, &e)
            .unwrap()
            .max_abs_diff(&fd_directional(&a, &e, 1e-5));
        assert!(d < 1e-7, "{d:e}");
    }
}

#[test]
fn directional_derivative_at_degenerate_spectrum() {
    // A with a repeated eigenvalue exercises the coincident-eigenvalue branch.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u = unitary_exp(&random_hermitian(4, &mut rng)).unwrap();
    let a = u.conjugate(&ComplexMatrix::from_real_diagonal(&[0.5, 0.5, -1.0, 2.0]));
    let mut a = a;
    a.symmetrize();
    let e = random_hermitian(4, &mut rng);
    let d = unitary_exp_directional(&a, &e)
        .unwrap()
        .max_abs_diff(&fd_directional(&a, &e, 1e-5));
    assert!(d < 1e-7, "{d:e}");
}

#[test]
fn shift_matches_finite_differences_on_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let n = 1 + trial % 3;
        let len = rng.random_range(1..=8);
        let circuit = random_token_circuit(n, len, &mut rng);
        let params = random_params(circuit.param_count(), &mut rng);
        let state = make_dataset(n, 1, trial as u64).unwrap().states()[0].clone();
        let protocol = random_protocol(&mut rng);
        let shift = prob_gradients(&circuit, &params, &state, &protocol, GradientMethod::Shift).unwrap();
        let fd = prob_gradients(
            &circuit,
            &params,
            &state,
            &protocol,
            GradientMethod::FiniteDifference { step: 1e-5 },
        )
        .unwrap();
        let exact = prob_gradients(&circuit, &params, &state, &protocol, GradientMethod::Exact).unwrap();
        worst = worst.max(shift.max_abs_diff(&fd));
        assert!(shift.max_abs_diff(&exact) < 1e-12);
    }
    assert!(worst < 1e-6, "worst deviation {worst:e}");
}

#[test]
fn generator_gates_shift_matches_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 1..=2 {
        let circuit = generator_product_circuit(n).unwrap();
        let params = random_params(circuit.param_count(), &mut rng);
        let state = make_dataset(n, 1, 3).unwrap().states()[0].clone();
        let protocol = random_protocol(&mut rng);
        let shift = prob_gradients(&circuit, &params, &state, &protocol, GradientMethod::Shift).unwrap();
        let exact = prob_gradients(&circuit, &params, &state, &protocol, GradientMethod::Exact).unwrap();
        let fd = prob_gradients(&circuit, &params, &state, &protocol, GradientMethod::fd()).unwrap();
        assert!(shift.max_abs_diff(&exact) < 1e-12);
        assert!(shift.max_abs_diff(&fd) < 1e-6);
    }
}

#[test]
fn universal_exact_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for n in 1..=3 {
        let circuit = universal_circuit(n).unwrap();
        let params: Vec<f64> = (0..circuit.param_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let state = make_dataset(n, 1, 9).unwrap().states()[0].clone();
        let protocol = random_protocol(&mut rng);
        let exact = prob_gradients(&circuit, &params, &state, &protocol, GradientMethod::Exact).unwrap();
        let fd = prob_gradients(&circuit, &params, &state, &protocol, GradientMethod::fd()).unwrap();
        let d = exact.max_abs_diff(&fd);
        assert!(d < 1e-7, "n={n}: {d:e}");
    }
}
