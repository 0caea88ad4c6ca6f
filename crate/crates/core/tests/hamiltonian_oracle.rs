mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use qabound::ising::{apply_hamiltonian, build_diagonal, IsingProblem, IsingTerm, StateVector};
use qabound::spectrum::{diagonalize, diagonalize_scaled, EigenMethod};

fn problem_strategy(max_n: usize) -> impl Strategy<Value = IsingProblem> {
    (1..=max_n).prop_flat_map(|n| {
        let masks = 1usize..(1 << n);
        prop::collection::vec((masks, -2.0f64..2.0), 1..8).prop_map(move |raw| {
            let mut terms: Vec<IsingTerm> = Vec::new();
            for (mask, j) in raw {
                let sites: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                if !terms.iter().any(|t| t.sites == sites) {
                    terms.push(IsingTerm { sites, j });
                }
            }
            IsingProblem::new(n, terms).unwrap()
        })
    })
}

fn state_strategy(dim: usize) -> impl Strategy<Value = StateVector> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim)
        .prop_map(|v| StateVector::new(v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn apply_matches_dense_matrix(
        (problem, psi) in problem_strategy(5).prop_flat_map(|p| { let d = 1 << p.n_spins(); (Just(p), state_strategy(d)) }),
        gamma in 0.0f64..3.0,
    ) {
        let diag = build_diagonal(&problem).unwrap();
        let out = apply_hamiltonian(&diag, gamma, &psi).unwrap();
        let h = common::hamiltonian(&problem, 1.0, gamma);
        let re: Vec<f64> = psi.amplitudes().iter().map(|a| a.re).collect();
        let im: Vec<f64> = psi.amplitudes().iter().map(|a| a.im).collect();
        let (hre, him) = (common::matvec(&h, &re), common::matvec(&h, &im));
        for k in 0..re.len() {
            prop_assert!((out.amplitudes()[k].re - hre[k]).abs() < 1e-12);
            prop_assert!((out.amplitudes()[k].im - him[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_is_linear_and_hermitian(
        (problem, a, b) in problem_strategy(4).prop_flat_map(|p| { let d = 1 << p.n_spins(); (Just(p), state_strategy(d), state_strategy(d)) }),
        gamma in 0.0f64..3.0,
        s in -2.0f64..2.0,
    ) {
        let diag = build_diagonal(&problem).unwrap();
        let combo = a.add(&b.scaled(Complex64::new(s, 0.5)));
        let lhs = apply_hamiltonian(&diag, gamma, &combo).unwrap();
        let ha = apply_hamiltonian(&diag, gamma, &a).unwrap();
        let hb = apply_hamiltonian(&diag, gamma, &b).unwrap();
        let rhs = ha.add(&hb.scaled(Complex64::new(s, 0.5)));
        for (x, y) in lhs.amplitudes().iter().zip(rhs.amplitudes()) {
            prop_assert!((x - y).norm() < 1e-11);
        }
        prop_assert!((a.inner(&hb) - ha.inner(&b)).norm() < 1e-11);
    }

    #[test]
    fn even_couplings_are_flip_symmetric(problem in problem_strategy(5)) {
        let even: Vec<IsingTerm> = problem.terms().iter().filter(|t| t.sites.len() % 2 == 0).cloned().collect();
        prop_assume!(!even.is_empty());
        let p = IsingProblem::new(problem.n_spins(), even).unwrap();
        let all = (1usize << p.n_spins()) - 1;
        for z in 0..=all {
            prop_assert_eq!(p.energy(z), p.energy(z ^ all));
        }
    }

    #[test]
    fn low_spectrum_matches_jacobi(problem in problem_strategy(5), gamma in 0.05f64..3.0) {
        let diag = build_diagonal(&problem).unwrap();
        let (values, _) = common::jacobi_eigen(&common::hamiltonian(&problem, 1.0, gamma));
        let spec = diagonalize(&diag, gamma, 2).unwrap();
        prop_assert!((spec.eps0() - values[0]).abs() < 1e-9);
        prop_assert!((spec.eps1() - values[1]).abs() < 1e-9);
    }
}

#[test]
fn lanczos_agrees_with_dense_reference() {
    let problem = common::lcg_problem(11, 6, 2);
    let diag = build_diagonal(&problem).unwrap();
    let (values, _) = common::jacobi_eigen(&common::hamiltonian(&problem, 0.7, 0.4));
    let spec = diagonalize_scaled(&diag, 0.7, 0.4, 2, EigenMethod::Lanczos).unwrap();
    assert!((spec.eps0() - values[0]).abs() < 1e-9);
    assert!((spec.eps1() - values[1]).abs() < 1e-9);
}

#[test]
fn ground_vector_matches_reference_up_to_sign() {
    let problem = common::lcg_problem(3, 4, 3);
    let diag = build_diagonal(&problem).unwrap();
    let (_, vecs) = common::jacobi_eigen(&common::hamiltonian(&problem, 1.0, 0.8));
    let spec = diagonalize(&diag, 0.8, 2).unwrap();
    let overlap: f64 = spec
        .ground_state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(k, a)| a.re * vecs[k][0])
        .sum();
    assert!((overlap.abs() - 1.0).abs() < 1e-9);
}
