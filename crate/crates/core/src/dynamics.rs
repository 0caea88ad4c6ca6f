//! Time evolution i dψ/dt = H(t)ψ from the ground state of H(0).
//!
//! Each step applies exp(−i H(t + dt/2) dt), the midpoint rule, which is
//! globally second order. The step exponential is a Chebyshev expansion
//! evaluated matrix-free and truncated once the Bessel coefficients fall
//! below 1e-17, so every step is unitary to rounding.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{build_diagonal, DiagonalIsing, IsingProblem, StateVector, NORM_TOLERANCE};
use crate::provenance::pair_hash;
use crate::schedule::Drive;
use crate::spectrum::{diagonalize_scaled, ensure_nondegenerate, EigenMethod};

/// Step-doubling differences below this are treated as rounding noise.
const ROUNDING_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepControl {
    Fixed {
        dt: f64,
    },
    /// Step doubling; the local error per unit time is kept below `tol`.
    Adaptive {
        tol: f64,
        dt_initial: f64,
        dt_max: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub step: StepControl,
    pub max_time: f64,
    /// Number of record points, uniformly spaced on [0, max_time].
    pub records: usize,
    pub norm_tolerance: f64,
}

impl IntegratorConfig {
    pub fn fixed(dt: f64, max_time: f64) -> Self {
        Self {
            step: StepControl::Fixed { dt },
            max_time,
            records: 1000,
            norm_tolerance: NORM_TOLERANCE,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.max_time > 0.0 && self.max_time.is_finite()) {
            return Err(Error::Validation(format!("max_time must be positive, got {}", self.max_time)));
        }
        if self.records < 2 {
            return Err(Error::Validation("need at least two record points".into()));
        }
        match self.step {
            StepControl::Fixed { dt } if !(dt > 0.0) => Err(Error::Validation("dt must be positive".into())),
            StepControl::Adaptive { tol, dt_initial, dt_max }
                if !(tol > 0.0 && dt_initial > 0.0 && dt_max >= dt_initial) =>
            {
                Err(Error::Validation("adaptive step control needs tol, dt_initial > 0 and dt_max ≥ dt_initial".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Time series of the evolved state measured against the instantaneous
/// ground state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// β(t)/α(t), the effective transverse field.
    pub gamma: Vec<f64>,
    pub gap: Vec<f64>,
    pub ground_overlap_sq: Vec<f64>,
    pub excitation_norm: Vec<f64>,
    pub norm_drift: Vec<f64>,
    pub final_excitation: f64,
    pub final_overlap_sq: f64,
    /// First record time where the norm drift exceeded tolerance.
    pub norm_failure_at: Option<f64>,
    pub steps: usize,
    pub provenance: String,
}

impl TrajectoryRecord {
    pub fn failed(&self) -> bool {
        self.norm_failure_at.is_some()
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.norm_drift.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,gamma,overlap_sq,excitation_norm,norm_drift\n");
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e}\n",
                self.times[k], self.gamma[k], self.ground_overlap_sq[k], self.excitation_norm[k], self.norm_drift[k]
            ));
        }
        out
    }
}

/// ‖ψ − ⟨ground|ψ⟩·ground‖, formed directly so that small excitations do
/// not cancel against 1.
pub fn excitation_norm(psi: &StateVector, ground: &StateVector) -> f64 {
    let a = ground.inner(psi);
    psi.amplitudes()
        .iter()
        .zip(ground.amplitudes())
        .map(|(p, g)| (p - a * g).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Ground state of H(0); refuses degenerate final Ising problems.
pub fn initial_state<D: Drive + ?Sized>(problem: &IsingProblem, drive: &D) -> Result<StateVector> {
    let diag = build_diagonal(problem)?;
    initial_state_diag(&diag, drive)
}

pub fn initial_state_diag<D: Drive + ?Sized>(diag: &DiagonalIsing, drive: &D) -> Result<StateVector> {
    ensure_nondegenerate(diag)?;
    let (alpha, beta) = drive.coefficients(0.0);
    if !(beta > 0.0) {
        return Err(Error::Validation(format!("initial transverse field must be positive, got {beta}")));
    }
    Ok(diagonalize_scaled(diag, alpha, beta, 2, EigenMethod::Auto)?.ground_state)
}

/// J_k(x) for k = 0..=k_max by Miller's backward recurrence.
pub fn bessel_j_sequence(x: f64, k_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; k_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = (k_max.max(x.ceil() as usize) + 20 + (x.sqrt() * 10.0) as usize) | 1;
    let mut j_next = 0.0;
    let mut j_cur = 1e-300;
    let mut even_sum = 0.0;
    let mut j0 = 0.0;
    for k in (0..=start).rev() {
        if k <= k_max {
            out[k] = j_cur;
        }
        if k % 2 == 0 {
            if k == 0 {
                j0 = j_cur;
            } else {
                even_sum += j_cur;
            }
        }
        if k == 0 {
            break;
        }
        let j_prev = 2.0 * k as f64 / x * j_cur - j_next;
        j_next = j_cur;
        j_cur = j_prev;
        if j_cur.abs() > 1e250 {
            j_cur *= 1e-250;
            j_next *= 1e-250;
            even_sum *= 1e-250;
            out.iter_mut().for_each(|v| *v *= 1e-250);
        }
    }
    let norm = j0 + 2.0 * even_sum;
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

/// Reusable workspace for Chebyshev step exponentials.
pub struct ChebyshevPropagator<'a> {
    diag: &'a DiagonalIsing,
    phi_prev: Vec<Complex64>,
    phi_cur: Vec<Complex64>,
    scratch: Vec<Complex64>,
    acc: Vec<Complex64>,
}

impl<'a> ChebyshevPropagator<'a> {
    pub fn new(diag: &'a DiagonalIsing) -> Self {
        let dim = diag.dim();
        let z = Complex64::new(0.0, 0.0);
        Self {
            diag,
            phi_prev: vec![z; dim],
            phi_cur: vec![z; dim],
            scratch: vec![z; dim],
            acc: vec![z; dim],
        }
    }

    /// ψ ← exp(−i (α H_Ising − β Σσ^x) dt) ψ. Returns the number of terms.
    pub fn step(&mut self, psi: &mut [Complex64], alpha: f64, beta: f64, dt: f64) -> usize {
        let (lo, hi) = self.diag.spectral_bounds(alpha, beta);
        let center = 0.5 * (hi + lo);
        let radius = 0.5 * (hi - lo) * (1.0 + 1e-12) + 1e-12;
        let x = radius * dt;
        let k_max = (x + 10.0 * x.cbrt() + 30.0).ceil() as usize;
        let bessel = bessel_j_sequence(x, k_max);
        let terms = (0..k_max + 1)
            .rposition(|k| bessel[k].abs() > 1e-17 || (k as f64) < x)
            .map_or(1, |k| k + 1)
            .max(2);

        // H̃ = (H − center)/radius
        let apply_scaled = |diag: &DiagonalIsing, input: &[Complex64], out: &mut [Complex64]| {
            diag.apply_into(alpha, beta, input, out);
            for (o, i) in out.iter_mut().zip(input) {
                *o = (*o - i * center) / radius;
            }
        };

        // (−i)^k cycles through 1, −i, −1, i
        let phase = |k: usize| match k % 4 {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, -1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, 1.0),
        };

        self.phi_prev.copy_from_slice(psi);
        apply_scaled(self.diag, &self.phi_prev, &mut self.phi_cur);
        let c0 = bessel[0];
        let c1 = phase(1) * (2.0 * bessel[1]);
        for ((a, p0), p1) in self.acc.iter_mut().zip(&self.phi_prev).zip(&self.phi_cur) {
            *a = p0 * c0 + p1 * c1;
        }
        for k in 2..terms {
            apply_scaled(self.diag, &self.phi_cur, &mut self.scratch);
            let ck = phase(k) * (2.0 * bessel[k]);
            for ((next, prev), a) in self.scratch.iter_mut().zip(&self.phi_prev).zip(self.acc.iter_mut()) {
                *next = *next * 2.0 - prev;
                *a += *next * ck;
            }
            std::mem::swap(&mut self.phi_prev, &mut self.phi_cur);
            std::mem::swap(&mut self.phi_cur, &mut self.scratch);
        }
        let global = Complex64::from_polar(1.0, -center * dt);
        for (p, a) in psi.iter_mut().zip(&self.acc) {
            *p = a * global;
        }
        terms
    }
}

/// Integrates from the ground state of H(0) to `config.max_time`.
pub fn evolve<D: Drive + ?Sized>(problem: &IsingProblem, drive: &D, config: &IntegratorConfig) -> Result<TrajectoryRecord> {
    let diag = build_diagonal(problem)?;
    let psi0 = initial_state_diag(&diag, drive)?;
    let mut record = evolve_from(&diag, drive, config, psi0)?;
    record.provenance = pair_hash(problem, &drive.descriptor());
    Ok(record)
}

/// Integrates from an arbitrary initial state; `provenance` is left empty.
pub fn evolve_from<D: Drive + ?Sized>(
    diag: &DiagonalIsing,
    drive: &D,
    config: &IntegratorConfig,
    psi0: StateVector,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    if psi0.dim() != diag.dim() {
        return Err(Error::Dimension {
            expected: diag.dim(),
            actual: psi0.dim(),
        });
    }
    let mut psi = psi0.into_amplitudes();
    let mut prop = ChebyshevPropagator::new(diag);
    let n_rec = config.records;
    let record_times: Vec<f64> = (0..n_rec)
        .map(|j| if j == n_rec - 1 { config.max_time } else { config.max_time * j as f64 / (n_rec - 1) as f64 })
        .collect();

    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(n_rec),
        gamma: Vec::with_capacity(n_rec),
        gap: Vec::with_capacity(n_rec),
        ground_overlap_sq: Vec::with_capacity(n_rec),
        excitation_norm: Vec::with_capacity(n_rec),
        norm_drift: Vec::with_capacity(n_rec),
        final_excitation: f64::NAN,
        final_overlap_sq: f64::NAN,
        norm_failure_at: None,
        steps: 0,
        provenance: String::new(),
    };
    let mut dt_adaptive = match config.step {
        StepControl::Adaptive { dt_initial, .. } => dt_initial,
        StepControl::Fixed { dt } => dt,
    };
    let mut trial = vec![Complex64::new(0.0, 0.0); psi.len()];
    let mut half = trial.clone();

    for (j, &t_rec) in record_times.iter().enumerate() {
        if j > 0 {
            let t_start = record_times[j - 1];
            let span = t_rec - t_start;
            match config.step {
                StepControl::Fixed { dt } => {
                    let n = (span / dt).ceil().max(1.0) as usize;
                    let h = span / n as f64;
                    for s in 0..n {
                        let t_mid = t_start + (s as f64 + 0.5) * h;
                        let (a, b) = drive.coefficients(t_mid);
                        prop.step(&mut psi, a, b, h);
                        rec.steps += 1;
                    }
                }
                StepControl::Adaptive { tol, dt_max, .. } => {
                    let mut t = t_start;
                    while t < t_rec {
                        let h = dt_adaptive.min(t_rec - t).min(dt_max);
                        trial.copy_from_slice(&psi);
                        let (a, b) = drive.coefficients(t + 0.5 * h);
                        prop.step(&mut trial, a, b, h);
                        half.copy_from_slice(&psi);
                        let (a1, b1) = drive.coefficients(t + 0.25 * h);
                        prop.step(&mut half, a1, b1, 0.5 * h);
                        let (a2, b2) = drive.coefficients(t + 0.75 * h);
                        prop.step(&mut half, a2, b2, 0.5 * h);
                        rec.steps += 3;
                        let err = trial
                            .iter()
                            .zip(&half)
                            .map(|(x, y)| (x - y).norm_sqr())
                            .sum::<f64>()
                            .sqrt()
                            * 4.0
                            / 3.0;
                        // below the rounding level of a step the estimate carries no information
                        let allowed = (tol * h).max(ROUNDING_FLOOR);
                        if err <= allowed || h <= 1e-12 {
                            psi.copy_from_slice(&half);
                            t += h;
                        }
                        let factor = if err > 0.0 { 0.9 * (allowed / err).sqrt() } else { 2.0 };
                        dt_adaptive = (h * factor.clamp(0.2, 2.0)).min(dt_max);
                    }
                }
            }
        }
        let state = StateVector::new(psi.clone());
        if !state.is_finite() {
            return Err(Error::NonFinite { t: t_rec });
        }
        let (alpha, beta) = drive.coefficients(t_rec);
        let spec = diagonalize_scaled(diag, alpha, beta, 2, EigenMethod::Auto)?;
        let overlap_sq = spec.ground_state.inner(&state).norm_sqr();
        let drift = (state.norm() - 1.0).abs();
        if drift > config.norm_tolerance && rec.norm_failure_at.is_none() {
            rec.norm_failure_at = Some(t_rec);
        }
        rec.times.push(t_rec);
        rec.gamma.push(spec.gamma_value);
        rec.gap.push(spec.gap());
        rec.ground_overlap_sq.push(overlap_sq);
        rec.excitation_norm.push(excitation_norm(&state, &spec.ground_state));
        rec.norm_drift.push(drift);
    }
    rec.final_excitation = *rec.excitation_norm.last().expect("at least two records");
    rec.final_overlap_sq = *rec.ground_overlap_sq.last().expect("at least two records");
    Ok(rec)
}
