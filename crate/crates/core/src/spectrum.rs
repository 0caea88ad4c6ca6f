//! Instantaneous spectra of H = α·H_Ising − β·Σσ^x by exact diagonalization,
//! and empirical fits of the gap lower bound Δ ≥ A·Γ^N.
//!
//! H is real symmetric in the computational basis. Systems up to
//! [`MAX_DENSE_SPINS`] spins use a dense symmetric eigensolver; larger ones up
//! to [`MAX_ITERATIVE_SPINS`] use Lanczos with full reorthogonalization on
//! the matrix-free operator.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{build_diagonal, DiagonalIsing, IsingProblem, StateVector};
use crate::provenance::content_hash;
use crate::schedule::Drive;

pub const MAX_DENSE_SPINS: usize = 10;
pub const MAX_ITERATIVE_SPINS: usize = 14;
/// Absolute gap below which the ground state counts as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethod {
    /// Dense up to `MAX_DENSE_SPINS`, Lanczos above.
    Auto,
    Dense,
    Lanczos,
}

/// Lowest eigenpairs of H at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub gamma_value: f64,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Unit norm, largest-magnitude amplitude real and positive.
    pub ground_state: StateVector,
}

impl Spectrum {
    pub fn eps0(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn eps1(&self) -> f64 {
        self.eigenvalues[1]
    }

    pub fn gap(&self) -> f64 {
        (self.eigenvalues[1] - self.eigenvalues[0]).max(0.0)
    }

    pub fn at(self, t: f64) -> SpectrumSnapshot {
        SpectrumSnapshot {
            t,
            gamma_value: self.gamma_value,
            eps0: self.eps0(),
            eps1: self.eps1(),
            gap: self.gap(),
            ground_state: self.ground_state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSnapshot {
    pub t: f64,
    pub gamma_value: f64,
    pub eps0: f64,
    pub eps1: f64,
    pub gap: f64,
    #[serde(skip)]
    pub ground_state: StateVector,
}

/// Lowest `count` eigenvalues and the ground vector of H_Ising − Γ Σσ^x.
pub fn diagonalize(diag: &DiagonalIsing, gamma_value: f64, count: usize) -> Result<Spectrum> {
    diagonalize_scaled(diag, 1.0, gamma_value, count, EigenMethod::Auto)
}

/// Lowest `count` eigenpairs of α·H_Ising − β·Σσ^x; `gamma_value` in the
/// result is the effective field β/α.
pub fn diagonalize_scaled(
    diag: &DiagonalIsing,
    ising_scale: f64,
    field: f64,
    count: usize,
    method: EigenMethod,
) -> Result<Spectrum> {
    if count < 2 {
        return Err(Error::Validation("need at least two eigenvalues".into()));
    }
    if !(ising_scale.is_finite() && field.is_finite()) {
        return Err(Error::Validation("Hamiltonian coefficients must be finite".into()));
    }
    let n = diag.n_spins();
    let method = match method {
        EigenMethod::Auto if n <= MAX_DENSE_SPINS => EigenMethod::Dense,
        EigenMethod::Auto => EigenMethod::Lanczos,
        m => m,
    };
    if n > MAX_ITERATIVE_SPINS || (method == EigenMethod::Dense && n > MAX_DENSE_SPINS) {
        return Err(Error::SizeLimit {
            n_spins: n,
            limit: if method == EigenMethod::Dense { MAX_DENSE_SPINS } else { MAX_ITERATIVE_SPINS },
            what: "diagonalization",
        });
    }
    let count = count.min(diag.dim());
    if count < 2 {
        return Err(Error::Validation("Hilbert space too small for a gap".into()));
    }
    let (eigenvalues, mut ground) = match method {
        EigenMethod::Dense => dense_lowest(diag, ising_scale, field, count),
        _ => lanczos_lowest(diag, ising_scale, field, count)?,
    };
    fix_phase(&mut ground);
    let gap = eigenvalues[1] - eigenvalues[0];
    if gap < DEGENERACY_TOL {
        if field == 0.0 {
            return Err(Error::DegenerateIsing {
                states: degenerate_labels(diag),
            });
        }
        return Err(Error::NearDegenerate {
            gamma: field / ising_scale,
            gap,
        });
    }
    Ok(Spectrum {
        gamma_value: field / ising_scale,
        eigenvalues,
        ground_state: StateVector::from_real(&ground),
    })
}

fn dense_matrix(diag: &DiagonalIsing, ising_scale: f64, field: f64) -> DMatrix<f64> {
    let dim = diag.dim();
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for z in 0..dim {
        h[(z, z)] = ising_scale * diag.energies()[z];
        for i in 0..diag.n_spins() {
            h[(z, z ^ (1 << i))] -= field;
        }
    }
    h
}

fn dense_lowest(diag: &DiagonalIsing, ising_scale: f64, field: f64, count: usize) -> (Vec<f64>, Vec<f64>) {
    let eig = SymmetricEigen::new(dense_matrix(diag, ising_scale, field));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order[..count].iter().map(|&k| eig.eigenvalues[k]).collect();
    let ground = eig.eigenvectors.column(order[0]).iter().copied().collect();
    (values, ground)
}

fn apply_real(diag: &DiagonalIsing, ising_scale: f64, field: f64, x: &[f64], out: &mut [f64]) {
    for (z, o) in out.iter_mut().enumerate() {
        let mut flip = 0.0;
        for i in 0..diag.n_spins() {
            flip += x[z ^ (1 << i)];
        }
        *o = ising_scale * diag.energies()[z] * x[z] - field * flip;
    }
}

/// Lanczos with full reorthogonalization; stops when the lowest `count`
/// Ritz pairs have residuals below 1e-11 relative to the spectral radius.
fn lanczos_lowest(diag: &DiagonalIsing, ising_scale: f64, field: f64, count: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = diag.dim();
    let (lo, hi) = diag.spectral_bounds(ising_scale, field);
    let scale = lo.abs().max(hi.abs()).max(1.0);
    let max_iter = dim.min(600);

    // deterministic start vector with weight in every symmetry sector
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut v);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    loop {
        apply_real(diag, ising_scale, field, &v, &mut w);
        let a = dot(&v, &w);
        alpha.push(a);
        basis.push(v.clone());
        for _ in 0..2 {
            for b in &basis {
                let proj = dot(b, &w);
                axpy(-proj, b, &mut w);
            }
        }
        let b_next = dot(&w, &w).sqrt();
        let k = alpha.len();
        let exhausted = b_next < 1e-14 * scale;
        if k >= count && (k % 10 == 0 || k == max_iter || exhausted) {
            let (vals, vecs) = tridiagonal_eigen(&alpha, &beta);
            let converged = (0..count).all(|j| (b_next * vecs[(k - 1, j)]).abs() < 1e-11 * scale);
            if converged || k == max_iter || exhausted {
                if !converged && !exhausted {
                    return Err(Error::Eigensolver(format!(
                        "Lanczos did not converge in {k} iterations"
                    )));
                }
                let values = vals[..count].to_vec();
                let mut ground = vec![0.0; dim];
                for (j, b) in basis.iter().enumerate() {
                    axpy(vecs[(j, 0)], b, &mut ground);
                }
                normalize(&mut ground);
                return Ok((values, ground));
            }
        } else if exhausted && k < count {
            return Err(Error::Eigensolver("Krylov space exhausted before finding two eigenvalues".into()));
        }
        beta.push(b_next);
        v = w.iter().map(|x| x / b_next).collect();
    }
}

/// Ascending eigenvalues and eigenvectors (columns) of a symmetric tridiagonal.
fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let k = alpha.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alpha[i];
        if i + 1 < k {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let vecs = DMatrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

fn fix_phase(v: &mut [f64]) {
    let k = (0..v.len())
        .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
        .unwrap_or(0);
    if v[k] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn bit_label(z: usize, n: usize) -> String {
    (0..n).rev().map(|i| if (z >> i) & 1 == 1 { '1' } else { '0' }).collect()
}

fn degenerate_labels(diag: &DiagonalIsing) -> Vec<String> {
    diag.ground_states(DEGENERACY_TOL)
        .into_iter()
        .map(|z| bit_label(z, diag.n_spins()))
        .collect()
}

/// Refuses Ising problems whose zero-field ground state is degenerate.
pub fn ensure_nondegenerate(diag: &DiagonalIsing) -> Result<()> {
    let (e0, e1) = diag.lowest_two();
    if e1 - e0 < DEGENERACY_TOL {
        return Err(Error::DegenerateIsing {
            states: degenerate_labels(diag),
        });
    }
    Ok(())
}

/// Snapshots of the instantaneous spectrum along a time grid.
pub fn gap_profile<D: Drive + ?Sized>(problem: &IsingProblem, drive: &D, t_grid: &[f64]) -> Result<Vec<SpectrumSnapshot>> {
    let diag = build_diagonal(problem)?;
    gap_profile_diag(&diag, drive, t_grid)
}

pub fn gap_profile_diag<D: Drive + ?Sized>(diag: &DiagonalIsing, drive: &D, t_grid: &[f64]) -> Result<Vec<SpectrumSnapshot>> {
    ensure_nondegenerate(diag)?;
    if t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Validation("time grid must be nondecreasing".into()));
    }
    t_grid
        .par_iter()
        .map(|&t| {
            let (alpha, beta) = drive.coefficients(t);
            diagonalize_scaled(diag, alpha, beta, 2, EigenMethod::Auto).map(|s| s.at(t))
        })
        .collect()
}

/// Smallest Δ(Γ)/Γ^N over a grid of positive Γ values, with its location.
pub fn gap_constant(diag: &DiagonalIsing, gamma_grid: &[f64]) -> Result<(f64, f64)> {
    ensure_nondegenerate(diag)?;
    let n = diag.n_spins() as i32;
    let ratios: Vec<(f64, f64)> = gamma_grid
        .par_iter()
        .filter(|&&g| g > 0.0)
        .map(|&g| diagonalize(diag, g, 2).map(|s| (s.gap() / g.powi(n), g)))
        .collect::<Result<_>>()?;
    ratios
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .ok_or_else(|| Error::Validation("gamma grid has no positive entries".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceGapConstant {
    pub n_spins: usize,
    pub n_terms: usize,
    pub total_magnitude: f64,
    pub content_hash: String,
    pub a_empirical: f64,
    /// Γ at which Δ/Γ^N is smallest.
    pub argmin_gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeGapConstant {
    pub n_spins: usize,
    pub a_empirical: f64,
    /// log A_empirical − ½ log N − (log a − bN).
    pub residual: f64,
}

/// Least-squares fit of A(N) = a √N e^{−bN} to per-size gap constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapBoundFit {
    pub a_fit: f64,
    pub b_fit: f64,
    /// Slope before the b ≥ 0 constraint was applied.
    pub b_unconstrained: f64,
    /// a lowered so that a √N e^{−bN} ≤ A_empirical(N) for every fitted N.
    pub a_conservative: f64,
    pub sizes: Vec<SizeGapConstant>,
    pub instances: Vec<InstanceGapConstant>,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_points: usize,
}

impl GapBoundFit {
    /// a √N e^{−bN} with the fitted constants.
    pub fn a_of_n(&self, n_spins: usize) -> f64 {
        let n = n_spins as f64;
        self.a_fit * n.sqrt() * (-self.b_fit * n).exp()
    }
}

pub fn fit_gap_constants(ensemble: &[IsingProblem], gamma_grid: &[f64]) -> Result<GapBoundFit> {
    if ensemble.is_empty() {
        return Err(Error::Underdetermined("empty ensemble".into()));
    }
    let positive: Vec<f64> = gamma_grid.iter().copied().filter(|&g| g > 0.0).collect();
    if positive.len() < 2 {
        return Err(Error::Underdetermined("gamma grid needs at least two positive points".into()));
    }
    let mut instances = Vec::with_capacity(ensemble.len());
    for problem in ensemble {
        let diag = build_diagonal(problem)?;
        let (a_emp, argmin) = gap_constant(&diag, &positive)?;
        if !(a_emp > 0.0) {
            return Err(Error::Internal(format!("nonpositive empirical gap constant {a_emp}")));
        }
        instances.push(InstanceGapConstant {
            n_spins: problem.n_spins(),
            n_terms: problem.terms().len(),
            total_magnitude: problem.total_magnitude(),
            content_hash: content_hash(problem),
            a_empirical: a_emp,
            argmin_gamma: argmin,
        });
    }
    let mut sizes: Vec<usize> = instances.iter().map(|i| i.n_spins).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::Underdetermined(format!(
            "fit needs at least 3 distinct system sizes, got {}",
            sizes.len()
        )));
    }
    let per_size: Vec<(usize, f64)> = sizes
        .iter()
        .map(|&n| {
            let a = instances
                .iter()
                .filter(|i| i.n_spins == n)
                .map(|i| i.a_empirical)
                .fold(f64::INFINITY, f64::min);
            (n, a)
        })
        .collect();
    let xs: Vec<f64> = per_size.iter().map(|&(n, _)| n as f64).collect();
    let ys: Vec<f64> = per_size.iter().map(|&(n, a)| a.ln() - 0.5 * (n as f64).ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let b_unconstrained = -slope;
    let (log_a, b) = if b_unconstrained >= 0.0 {
        (my - slope * mx, b_unconstrained)
    } else {
        (my, 0.0)
    };
    let residuals: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| y - (log_a - b * x)).collect();
    let min_residual = residuals.iter().copied().fold(f64::INFINITY, f64::min);
    let sizes = per_size
        .iter()
        .zip(&residuals)
        .map(|(&(n, a), &r)| SizeGapConstant {
            n_spins: n,
            a_empirical: a,
            residual: r,
        })
        .collect();
    Ok(GapBoundFit {
        a_fit: log_a.exp(),
        b_fit: b,
        b_unconstrained,
        a_conservative: (log_a + min_residual.min(0.0)).exp(),
        sizes,
        instances,
        gamma_min: positive.iter().copied().fold(f64::INFINITY, f64::min),
        gamma_max: positive.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        gamma_points: positive.len(),
    })
}

/// Log-spaced grid of `points` values in [lo, hi].
pub fn log_spaced(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let n = points.max(2);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| {
            if k == n - 1 {
                hi
            } else {
                (a + (b - a) * k as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// |⟨a|b⟩| for real-phase-fixed ground states, useful for continuity checks.
pub fn overlap_abs(a: &StateVector, b: &StateVector) -> f64 {
    a.inner(b).norm()
}

/// Residual ‖Hψ − ε₀ψ‖ of a snapshot's ground pair.
pub fn ground_residual(diag: &DiagonalIsing, ising_scale: f64, field: f64, eps0: f64, ground: &StateVector) -> f64 {
    let mut out = vec![Complex64::new(0.0, 0.0); ground.dim()];
    diag.apply_into(ising_scale, field, ground.amplitudes(), &mut out);
    out.iter()
        .zip(ground.amplitudes())
        .map(|(h, g)| (h - g * eps0).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::IsingTerm;
    use crate::schedule::{GFunction, Schedule};
    use approx::assert_relative_eq;

    fn problem(n: usize, terms: &[(&[usize], f64)]) -> IsingProblem {
        IsingProblem::new(
            n,
            terms
                .iter()
                .map(|(s, j)| IsingTerm {
                    sites: s.to_vec(),
                    j: *j,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_spin_closed_form() {
        let d = build_diagonal(&problem(1, &[(&[0], 1.0)])).unwrap();
        let s = diagonalize(&d, 1.0, 2).unwrap();
        assert_relative_eq!(s.eps0(), -2f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(s.gap(), 2.828_427_124_746_190_3, epsilon = 1e-13);
        assert_relative_eq!(diagonalize(&d, 0.0, 2).unwrap().gap(), 2.0, epsilon = 1e-15);
        assert!(s.ground_state.amplitudes()[0].re > 0.0);
    }

    #[test]
    fn degenerate_ferromagnet_refused() {
        let d = build_diagonal(&problem(2, &[(&[0, 1], 1.0)])).unwrap();
        match diagonalize(&d, 0.0, 2) {
            Err(Error::DegenerateIsing { states }) => assert_eq!(states, vec!["00", "11"]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(diagonalize(&d, 0.3, 2).is_ok());
        let s = Schedule::new(0.1, 1.0, 2, GFunction::Constant { g0: 0.1 }).unwrap();
        assert!(matches!(
            gap_profile(&problem(2, &[(&[0, 1], 1.0)]), &s, &[0.0, 1.0]),
            Err(Error::DegenerateIsing { .. })
        ));
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let p = problem(
            7,
            &[
                (&[0], 0.3),
                (&[3], -0.2),
                (&[6], 0.11),
                (&[0, 1], 0.7),
                (&[1, 2], -0.4),
                (&[2, 5], 0.9),
                (&[4, 6], 0.5),
                (&[1, 3, 5], 0.25),
            ],
        );
        let d = build_diagonal(&p).unwrap();
        let dense = diagonalize_scaled(&d, 1.0, 0.6, 3, EigenMethod::Dense).unwrap();
        let lanczos = diagonalize_scaled(&d, 1.0, 0.6, 3, EigenMethod::Lanczos).unwrap();
        for (a, b) in dense.eigenvalues.iter().zip(&lanczos.eigenvalues) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
        assert_relative_eq!(overlap_abs(&dense.ground_state, &lanczos.ground_state), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn ground_pair_residual_small() {
        let p = problem(3, &[(&[0], 0.4), (&[0, 1], 1.0), (&[1, 2], -0.6)]);
        let d = build_diagonal(&p).unwrap();
        let s = diagonalize(&d, 0.8, 2).unwrap();
        assert!(ground_residual(&d, 1.0, 0.8, s.eps0(), &s.ground_state) < 1e-12);
        assert!(s.ground_state.is_normalized(1e-12));
    }

    #[test]
    fn fit_requires_three_sizes() {
        let p = problem(1, &[(&[0], 1.0)]);
        assert!(matches!(
            fit_gap_constants(&[p], &[0.5, 1.0]),
            Err(Error::Underdetermined(_))
        ));
    }

    #[test]
    fn single_spin_gap_constant_closed_form() {
        let d = build_diagonal(&problem(1, &[(&[0], 1.0)])).unwrap();
        let grid = log_spaced(0.01, 2.0, 50);
        let (a, argmin) = gap_constant(&d, &grid).unwrap();
        assert_relative_eq!(a, 2.0 * (1.0f64 + 4.0).sqrt() / 2.0, max_relative = 1e-12);
        assert_eq!(argmin, 2.0);
    }
}
