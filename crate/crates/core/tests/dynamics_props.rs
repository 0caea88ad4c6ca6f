mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use qabound::dynamics::{evolve, evolve_from, ChebyshevPropagator, IntegratorConfig, StepControl};
use qabound::ising::{build_diagonal, StateVector};
use qabound::schedule::{GFunction, Schedule};

#[test]
fn chebyshev_step_matches_dense_exponential() {
    let problem = common::lcg_problem(5, 3, 2);
    let diag = build_diagonal(&problem).unwrap();
    let (alpha, beta, t) = (0.8, 1.3, 7.5);
    let (vals, vecs) = common::jacobi_eigen(&common::hamiltonian(&problem, alpha, beta));
    let dim = vals.len();
    let psi0: Vec<Complex64> = (0..dim).map(|k| Complex64::new(1.0 + k as f64, 0.5 - k as f64 * 0.1)).collect();
    let norm = psi0.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let psi0: Vec<Complex64> = psi0.iter().map(|a| a / norm).collect();

    let mut exact = vec![Complex64::new(0.0, 0.0); dim];
    for j in 0..dim {
        let coeff: Complex64 = (0..dim).map(|k| vecs[k][j] * psi0[k]).sum();
        let phase = Complex64::from_polar(1.0, -vals[j] * t);
        for k in 0..dim {
            exact[k] += vecs[k][j] * phase * coeff;
        }
    }
    let mut prop = ChebyshevPropagator::new(&diag);
    let mut psi = psi0.clone();
    for _ in 0..3 {
        prop.step(&mut psi, alpha, beta, t / 3.0);
    }
    for k in 0..dim {
        assert!((psi[k] - exact[k]).norm() < 1e-12, "component {k}");
    }
}

fn fast_schedule() -> Schedule {
    Schedule::new(0.5, 1.0, 2, GFunction::Constant { g0: 0.4 }).unwrap()
}

#[test]
fn midpoint_rule_is_second_order() {
    let problem = common::lcg_problem(9, 2, 2);
    let s = fast_schedule();
    let run = |dt: f64| {
        let mut c = IntegratorConfig::fixed(dt, 6.0);
        c.records = 2;
        evolve(&problem, &s, &c).unwrap().final_excitation
    };
    let reference = run(0.2 / 64.0);
    let e1 = (run(0.2) - reference).abs();
    let e2 = (run(0.1) - reference).abs();
    let e3 = (run(0.05) - reference).abs();
    let (r1, r2) = (e1 / e2, e2 / e3);
    assert!((3.0..5.5).contains(&r1) && (3.0..5.5).contains(&r2), "ratios {r1} {r2}");
}

fn adaptive(tol: f64, max_time: f64) -> IntegratorConfig {
    IntegratorConfig {
        step: StepControl::Adaptive { tol, dt_initial: 0.01, dt_max: 1.0 },
        ..IntegratorConfig::fixed(1.0, max_time)
    }
}

#[test]
fn adaptive_matches_fine_fixed_step() {
    let problem = common::lcg_problem(2, 3, 2);
    let s = fast_schedule_n(3);
    let fixed = evolve(&problem, &s, &IntegratorConfig::fixed(0.001, 8.0)).unwrap();
    let adapted = evolve(&problem, &s, &adaptive(1e-7, 8.0)).unwrap();
    assert!((fixed.final_excitation - adapted.final_excitation).abs() < 1e-5);
}

#[test]
fn adaptive_global_error_within_tolerance_budget() {
    let problem = common::lcg_problem(2, 3, 2);
    let s = Schedule::new(1e-2, 2.0, 3, GFunction::Constant { g0: 1.0 / 12.0 }).unwrap();
    let (tol, t_max) = (1e-6, 300.0);
    let reference = evolve(&problem, &s, &IntegratorConfig::fixed(0.01, t_max)).unwrap();
    let adapted = evolve(&problem, &s, &adaptive(tol, t_max)).unwrap();
    assert!((reference.final_excitation - adapted.final_excitation).abs() <= tol * t_max);
}

#[test]
fn sudden_quench_keeps_initial_state() {
    let problem = common::lcg_problem(4, 2, 2);
    let diag = build_diagonal(&problem).unwrap();
    let s = Schedule::new(1e30, 1.0, 2, GFunction::Constant { g0: 0.5 }).unwrap();
    let traj = evolve(&problem, &s, &IntegratorConfig::fixed(0.1, 1.0)).unwrap();
    // overlap of the Γ = 1 ground state with the Ising ground state, from the dense reference
    let (_, v0) = common::jacobi_eigen(&common::hamiltonian(&problem, 1.0, 1.0));
    let e = diag.energies();
    let z0 = (0..e.len()).min_by(|&a, &b| e[a].total_cmp(&e[b])).unwrap();
    let expected = v0[z0][0] * v0[z0][0];
    assert!((traj.final_overlap_sq - expected).abs() < 1e-2, "{} vs {expected}", traj.final_overlap_sq);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn norm_is_preserved(seed in 0u64..1000, n in 1usize..=4, delta in 0.01f64..1.0, g0 in 0.05f64..0.3) {
        let problem = common::lcg_problem(seed, n, n.min(3));
        let s = Schedule::new(delta, 2.0, n, GFunction::Constant { g0 }).unwrap();
        let traj = evolve(&problem, &s, &IntegratorConfig::fixed(0.1, 20.0 / delta.sqrt())).unwrap();
        prop_assert!(!traj.failed());
        prop_assert!(traj.max_norm_drift() <= 1e-8);
        prop_assert!(traj.excitation_norm.iter().all(|&e| (0.0..=1.0 + 1e-12).contains(&e)));
    }

    #[test]
    fn arbitrary_initial_state_norm(seed in 0u64..1000, phase in 0.0f64..std::f64::consts::TAU) {
        let problem = common::lcg_problem(seed, 3, 2);
        let diag = build_diagonal(&problem).unwrap();
        let s = fast_schedule_n(3);
        let amps: Vec<Complex64> = (0..8).map(|k| Complex64::from_polar(1.0 / 8f64.sqrt(), phase * k as f64)).collect();
        let traj = evolve_from(&diag, &s, &IntegratorConfig::fixed(0.05, 5.0), StateVector::new(amps)).unwrap();
        prop_assert!(traj.max_norm_drift() <= 1e-10);
    }
}

fn fast_schedule_n(n: usize) -> Schedule {
    Schedule::new(0.5, 1.0, n, GFunction::Constant { g0: 0.4 }).unwrap()
}
