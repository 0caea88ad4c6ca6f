//! k-body Ising Hamiltonians on the 2^N computational basis.
//!
//! Basis state `z` is a bit mask: bit `i` set to 0 means spin `i` has
//! σ^z eigenvalue +1, bit set to 1 means −1. The all-zeros state is the
//! ground state of −Σ σ^z_i.
//!
//! The full time-dependent Hamiltonian is `H = α·H_Ising − β·Σ_i σ^x_i`
//! with `α = 1, β = Γ(t)` for the transverse-field form. It is never
//! stored as a matrix; σ^x_i acts as a flip of bit `i`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on N for storing the diagonal.
pub const MAX_DIAGONAL_SPINS: usize = 20;

/// One coupling `J_{i j …}` acting on the listed sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingTerm {
    pub sites: Vec<usize>,
    pub j: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawProblem {
    n_spins: usize,
    terms: Vec<IsingTerm>,
}

/// H_Ising = −Σ_terms J · Π_{i ∈ sites} σ^z_i over `n_spins` spins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProblem", into = "RawProblem")]
pub struct IsingProblem {
    n_spins: usize,
    terms: Vec<IsingTerm>,
    total_magnitude: f64,
}

impl TryFrom<RawProblem> for IsingProblem {
    type Error = Error;

    fn try_from(raw: RawProblem) -> Result<Self> {
        for (k, term) in raw.terms.iter().enumerate() {
            if term.sites.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Validation(format!(
                    "term {k}: site list {:?} is not strictly increasing",
                    term.sites
                )));
            }
        }
        Self::new(raw.n_spins, raw.terms)
    }
}

impl From<IsingProblem> for RawProblem {
    fn from(p: IsingProblem) -> Self {
        RawProblem {
            n_spins: p.n_spins,
            terms: p.terms,
        }
    }
}

impl IsingProblem {
    /// Builds a problem, sorting each support. Duplicate or out-of-range
    /// sites, empty supports and non-finite couplings are rejected.
    pub fn new(n_spins: usize, terms: Vec<IsingTerm>) -> Result<Self> {
        if n_spins == 0 {
            return Err(Error::Validation("n_spins must be positive".into()));
        }
        let mut sorted = Vec::with_capacity(terms.len());
        for (k, mut term) in terms.into_iter().enumerate() {
            if term.sites.is_empty() {
                return Err(Error::Validation(format!("term {k}: empty support")));
            }
            if !term.j.is_finite() {
                return Err(Error::Validation(format!("term {k}: coupling is not finite")));
            }
            term.sites.sort_unstable();
            if term.sites.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Validation(format!(
                    "term {k}: duplicate site index in {:?}",
                    term.sites
                )));
            }
            if let Some(&s) = term.sites.iter().find(|&&s| s >= n_spins) {
                return Err(Error::Validation(format!(
                    "term {k}: site {s} out of range for {n_spins} spins"
                )));
            }
            sorted.push(term);
        }
        let total_magnitude = sorted.iter().map(|t| t.j.abs()).sum();
        Ok(Self {
            n_spins,
            terms: sorted,
            total_magnitude,
        })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn terms(&self) -> &[IsingTerm] {
        &self.terms
    }

    /// Σ|J| over all terms.
    pub fn total_magnitude(&self) -> f64 {
        self.total_magnitude
    }

    /// ⟨z|H_Ising|z⟩ by direct product of spin signs.
    pub fn energy(&self, z: usize) -> f64 {
        -self
            .terms
            .iter()
            .map(|t| {
                let sign: f64 = t
                    .sites
                    .iter()
                    .map(|&i| if (z >> i) & 1 == 0 { 1.0 } else { -1.0 })
                    .product();
                t.j * sign
            })
            .sum::<f64>()
    }
}

/// Diagonal of H_Ising in the computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalIsing {
    n_spins: usize,
    energies: Vec<f64>,
}

impl DiagonalIsing {
    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn min_energy(&self) -> f64 {
        self.energies.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_energy(&self) -> f64 {
        self.energies.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Basis states whose energy lies within `tol` of the minimum.
    pub fn ground_states(&self, tol: f64) -> Vec<usize> {
        let e0 = self.min_energy();
        (0..self.dim())
            .filter(|&z| self.energies[z] - e0 <= tol)
            .collect()
    }

    /// Lowest and second-lowest diagonal energies (with multiplicity).
    pub fn lowest_two(&self) -> (f64, f64) {
        let mut e0 = f64::INFINITY;
        let mut e1 = f64::INFINITY;
        for &e in &self.energies {
            if e < e0 {
                e1 = e0;
                e0 = e;
            } else if e < e1 {
                e1 = e;
            }
        }
        (e0, e1)
    }

    /// Gershgorin interval containing the spectrum of `α·diag − β·Σσ^x`.
    pub fn spectral_bounds(&self, ising_scale: f64, field: f64) -> (f64, f64) {
        let spread = field.abs() * self.n_spins as f64;
        let (lo, hi) = if ising_scale >= 0.0 {
            (ising_scale * self.min_energy(), ising_scale * self.max_energy())
        } else {
            (ising_scale * self.max_energy(), ising_scale * self.min_energy())
        };
        (lo - spread, hi + spread)
    }

    /// `out = (α·diag − β·Σ_i σ^x_i) input`, matrix-free.
    pub(crate) fn apply_into(
        &self,
        ising_scale: f64,
        field: f64,
        input: &[Complex64],
        out: &mut [Complex64],
    ) {
        for (z, o) in out.iter_mut().enumerate() {
            let mut flip = Complex64::new(0.0, 0.0);
            for i in 0..self.n_spins {
                flip += input[z ^ (1 << i)];
            }
            *o = input[z] * (ising_scale * self.energies[z]) - flip * field;
        }
    }
}

/// Tabulates H_Ising on every basis state.
pub fn build_diagonal(problem: &IsingProblem) -> Result<DiagonalIsing> {
    let n = problem.n_spins();
    if n > MAX_DIAGONAL_SPINS {
        return Err(Error::SizeLimit {
            n_spins: n,
            limit: MAX_DIAGONAL_SPINS,
            what: "diagonal storage",
        });
    }
    let dim = 1usize << n;
    let mut energies = vec![0.0; dim];
    for term in problem.terms() {
        let mask = term.sites.iter().fold(0usize, |m, &i| m | (1 << i));
        for (z, e) in energies.iter_mut().enumerate() {
            let odd = (z & mask).count_ones() & 1 == 1;
            *e -= if odd { -term.j } else { term.j };
        }
    }
    Ok(DiagonalIsing {
        n_spins: n,
        energies,
    })
}

/// A vector of 2^N complex amplitudes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
}

/// Default tolerance on | ‖ψ‖ − 1 |.
pub const NORM_TOLERANCE: f64 = 1e-8;

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        Self { amplitudes }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn basis(n_spins: usize, z: usize) -> Self {
        let mut a = vec![Complex64::new(0.0, 0.0); 1 << n_spins];
        a[z] = Complex64::new(1.0, 0.0);
        Self::new(a)
    }

    /// Equal superposition, the ground state of −Σσ^x.
    pub fn uniform(n_spins: usize) -> Self {
        let dim = 1usize << n_spins;
        let amp = Complex64::new((dim as f64).powf(-0.5), 0.0);
        Self::new(vec![amp; dim])
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            for a in &mut self.amplitudes {
                *a /= n;
            }
        }
        self
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        Self::new(self.amplitudes.iter().map(|a| a * s).collect())
    }

    pub fn add(&self, other: &StateVector) -> Self {
        Self::new(
            self.amplitudes
                .iter()
                .zip(&other.amplitudes)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

/// H(t)ψ with H(t) = H_Ising − Γ Σ_i σ^x_i.
pub fn apply_hamiltonian(diag: &DiagonalIsing, gamma: f64, psi: &StateVector) -> Result<StateVector> {
    if psi.dim() != diag.dim() {
        return Err(Error::Dimension {
            expected: diag.dim(),
            actual: psi.dim(),
        });
    }
    if !gamma.is_finite() {
        return Err(Error::Validation("gamma must be finite".into()));
    }
    let mut out = vec![Complex64::new(0.0, 0.0); psi.dim()];
    diag.apply_into(1.0, gamma, psi.amplitudes(), &mut out);
    Ok(StateVector::new(out))
}

/// Operator norm of Σ_i σ^x_i, which is exactly N.
pub fn transverse_norm(n_spins: usize) -> f64 {
    n_spins as f64
}
