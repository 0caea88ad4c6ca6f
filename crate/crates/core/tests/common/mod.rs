//! Independent dense reference: Kronecker-product Hamiltonians and a cyclic
//! Jacobi eigensolver, sharing no code with the library.
#![allow(dead_code)]

use qabound::ising::{IsingProblem, IsingTerm};

pub type Dense = Vec<Vec<f64>>;

const I2: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];
const X2: [[f64; 2]; 2] = [[0.0, 1.0], [1.0, 0.0]];
/// Bit value 0 ↦ +1.
const Z2: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, -1.0]];

fn kron(a: &Dense, b: &[[f64; 2]; 2]) -> Dense {
    let n = a.len();
    let mut out = vec![vec![0.0; 2 * n]; 2 * n];
    for i in 0..n {
        for j in 0..n {
            for p in 0..2 {
                for q in 0..2 {
                    out[2 * i + p][2 * j + q] = a[i][j] * b[p][q];
                }
            }
        }
    }
    out
}

/// ⊗ over spins, spin 0 being the least significant bit of the index.
pub fn site_operator(n: usize, ops: &[(usize, [[f64; 2]; 2])]) -> Dense {
    let mut m: Dense = vec![vec![1.0]];
    for site in (0..n).rev() {
        let op = ops.iter().find(|(s, _)| *s == site).map_or(I2, |(_, o)| *o);
        m = kron(&m, &op);
    }
    m
}

pub fn add_scaled(acc: &mut Dense, m: &Dense, s: f64) {
    for (r, row) in acc.iter_mut().zip(m) {
        for (a, b) in r.iter_mut().zip(row) {
            *a += s * b;
        }
    }
}

pub fn ising_matrix(problem: &IsingProblem) -> Dense {
    let n = problem.n_spins();
    let dim = 1 << n;
    let mut h = vec![vec![0.0; dim]; dim];
    for IsingTerm { sites, j } in problem.terms() {
        let ops: Vec<(usize, [[f64; 2]; 2])> = sites.iter().map(|&s| (s, Z2)).collect();
        add_scaled(&mut h, &site_operator(n, &ops), -j);
    }
    h
}

pub fn transverse_matrix(n: usize) -> Dense {
    let dim = 1 << n;
    let mut h = vec![vec![0.0; dim]; dim];
    for i in 0..n {
        add_scaled(&mut h, &site_operator(n, &[(i, X2)]), 1.0);
    }
    h
}

/// α·H_Ising − β·Σσ^x.
pub fn hamiltonian(problem: &IsingProblem, alpha: f64, beta: f64) -> Dense {
    let mut h = ising_matrix(problem);
    for row in h.iter_mut() {
        for v in row.iter_mut() {
            *v *= alpha;
        }
    }
    add_scaled(&mut h, &transverse_matrix(problem.n_spins()), -beta);
    h
}

pub fn matvec(m: &Dense, v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Eigenvalues (ascending) and eigenvectors (columns) by cyclic Jacobi.
pub fn jacobi_eigen(m: &Dense) -> (Vec<f64>, Dense) {
    let n = m.len();
    let mut a = m.clone();
    let mut v: Dense = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i][i].total_cmp(&a[j][j]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (values, vectors)
}

/// Largest |eigenvalue| of a symmetric matrix.
pub fn operator_norm(m: &Dense) -> f64 {
    jacobi_eigen(m).0.iter().fold(0.0, |acc: f64, e| acc.max(e.abs()))
}

/// Random k-local problem from a simple LCG, independent of the library's generator.
pub fn lcg_problem(seed: u64, n: usize, k_max: usize) -> IsingProblem {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let mut terms = Vec::new();
    for mask in 1usize..(1 << n) {
        let sites: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        if sites.len() <= k_max {
            let scale = if sites.len() == 1 { 0.5 } else { 1.0 };
            terms.push(IsingTerm { sites, j: scale * next() });
        }
    }
    IsingProblem::new(n, terms).unwrap()
}

/// Five-point central first and second derivatives of `f` at `t` with step `h`.
pub fn five_point<F: Fn(f64) -> f64>(f: F, t: f64, h: f64) -> (f64, f64) {
    let (fm2, fm1, f0, fp1, fp2) = (f(t - 2.0 * h), f(t - h), f(t), f(t + h), f(t + 2.0 * h));
    let d1 = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
    let d2 = (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h);
    (d1, d2)
}
