//! Term-by-term evaluation of the infinite-time adiabatic bound
//!
//! ```text
//!   P_exc ≤ ‖H′(0)‖/Δ(0)² + lim ‖H′(t)‖/Δ(t)²
//!         + ∫₀^∞ ( ‖H″‖/Δ² + 7‖H′‖²/Δ³ ) dt
//! ```
//!
//! with ‖H′‖ = N|Γ′| and ‖H″‖ = N|Γ″|. The integrals are split at T_max:
//! quadrature on [0, T_max], and on [T_max, ∞) the closed-form remainders
//! obtained from the certified constants (L, l, m, c′, c″) and a gap lower
//! bound Δ ≥ A·Γ^p.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::ising::{build_diagonal, DiagonalIsing, IsingProblem};
use crate::provenance::{content_hash, pair_hash};
use crate::quadrature::{integrate_breakpoints, QuadratureOptions, QuadratureResult};
use crate::schedule::{certify, compute_m, log_grid, CertifyOptions, ConditionCertificate, Drive, Schedule};
use crate::spectrum::{diagonalize, ensure_nondegenerate, gap_constant, gap_profile_diag, log_spaced, SpectrumSnapshot};

/// Weight of the squared first-derivative integrand.
pub const FIRST_DERIVATIVE_WEIGHT: f64 = 7.0;
/// Minimum number of log-spaced gap snapshots.
pub const MIN_PROFILE_POINTS: usize = 200;

/// (‖dH/dt‖, ‖d²H/dt²‖) = (N|Γ′(t)|, N|Γ″(t)|).
pub fn derivative_norms(schedule: &Schedule, t: f64) -> (f64, f64) {
    let n = schedule.n_spins() as f64;
    (n * schedule.gamma_prime(t).abs(), n * schedule.gamma_double_prime(t).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    /// Δ(t) from exact diagonalization.
    Measured,
    /// Δ(t) replaced by its lower bound A·Γ(t)^N.
    Bounded,
    /// Δ(t) ≡ value; for checking the quadrature and tails against closed forms.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub gap_mode: GapMode,
    pub quadrature: QuadratureOptions,
    pub profile_points: usize,
    pub tails: bool,
    pub certify: CertifyOptions,
    pub certify_grid_points: usize,
    /// Fitted (a, b) of A = a√N e^{−bN}; used for A in bounded mode when present.
    pub fit: Option<(f64, f64)>,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            gap_mode: GapMode::Measured,
            quadrature: QuadratureOptions::default(),
            profile_points: MIN_PROFILE_POINTS,
            tails: true,
            certify: CertifyOptions::default(),
            certify_grid_points: 10_000,
            fit: None,
        }
    }
}

/// Monotone cubic (Fritsch–Carlson) interpolation of Δ in log(1 + t).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapProfile {
    times: Vec<f64>,
    gammas: Vec<f64>,
    gaps: Vec<f64>,
    #[serde(skip)]
    xs: Vec<f64>,
    #[serde(skip)]
    slopes: Vec<f64>,
}

impl GapProfile {
    pub fn from_snapshots(snaps: &[SpectrumSnapshot]) -> Result<Self> {
        if snaps.len() < 2 {
            return Err(Error::Validation("gap profile needs at least two snapshots".into()));
        }
        let times: Vec<f64> = snaps.iter().map(|s| s.t).collect();
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("gap profile times must be strictly increasing".into()));
        }
        let gammas = snaps.iter().map(|s| s.gamma_value).collect();
        let gaps: Vec<f64> = snaps.iter().map(|s| s.gap).collect();
        let xs: Vec<f64> = times.iter().map(|t| t.ln_1p()).collect();
        let slopes = pchip_slopes(&xs, &gaps);
        Ok(Self {
            times,
            gammas,
            gaps,
            xs,
            slopes,
        })
    }

    /// Snapshots on a log1p grid of `points` times over [0, t_max], refined
    /// around the smallest gap by repeated bisection.
    pub fn build<D: Drive + ?Sized>(diag: &DiagonalIsing, drive: &D, t_max: f64, points: usize) -> Result<Self> {
        let grid = log_grid(t_max, points.max(MIN_PROFILE_POINTS));
        let mut snaps = gap_profile_diag(diag, drive, &grid)?;
        for _ in 0..12 {
            let k = argmin_gap(&snaps);
            let mut extra = Vec::new();
            if k > 0 {
                extra.push(log_mid(snaps[k - 1].t, snaps[k].t));
            }
            if k + 1 < snaps.len() {
                extra.push(log_mid(snaps[k].t, snaps[k + 1].t));
            }
            extra.retain(|t| snaps.iter().all(|s| s.t != *t));
            if extra.is_empty() {
                break;
            }
            snaps.extend(gap_profile_diag(diag, drive, &extra)?);
            snaps.sort_by(|a, b| a.t.total_cmp(&b.t));
        }
        Self::from_snapshots(&snaps)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    /// (t, Δ) at the smallest tabulated gap.
    pub fn minimum(&self) -> (f64, f64) {
        let k = (0..self.gaps.len()).min_by(|&a, &b| self.gaps[a].total_cmp(&self.gaps[b])).unwrap_or(0);
        (self.times[k], self.gaps[k])
    }

    pub fn gap_at(&self, t: f64) -> f64 {
        let x = t.max(0.0).ln_1p();
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.gaps[0];
        }
        if x >= self.xs[n - 1] {
            return self.gaps[n - 1];
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let s = (x - self.xs[i]) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s),
            s * (1.0 - s) * (1.0 - s),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        h00 * self.gaps[i] + h10 * h * self.slopes[i] + h01 * self.gaps[i + 1] + h11 * h * self.slopes[i + 1]
    }
}

fn argmin_gap(snaps: &[SpectrumSnapshot]) -> usize {
    (0..snaps.len()).min_by(|&a, &b| snaps[a].gap.total_cmp(&snaps[b].gap)).unwrap_or(0)
}

fn log_mid(a: f64, b: f64) -> f64 {
    (0.5 * (a.ln_1p() + b.ln_1p())).exp_m1()
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for k in 1..n - 1 {
        if d[k - 1] * d[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    m
}

/// Shared store of gap profiles keyed by content hash.
#[derive(Debug, Default)]
pub struct ProfileCache {
    inner: Mutex<HashMap<String, Arc<GapProfile>>>,
}

impl ProfileCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_build(
        &self,
        problem: &IsingProblem,
        schedule: &Schedule,
        t_max: f64,
        points: usize,
    ) -> Result<Arc<GapProfile>> {
        let key = format!("{}|{t_max:e}|{points}", pair_hash(problem, schedule));
        if let Some(p) = self.inner.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(p));
        }
        let diag = build_diagonal(problem)?;
        let profile = Arc::new(GapProfile::build(&diag, schedule, t_max, points)?);
        self.inner
            .lock()
            .expect("cache lock")
            .insert(key, Arc::clone(&profile));
        Ok(profile)
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Constants entering the analytic tails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub n_spins: usize,
    pub delta: f64,
    pub c: f64,
    #[serde(rename = "L")]
    pub l_sup: f64,
    pub g_inf: f64,
    pub l_const: f64,
    pub m: f64,
    pub c_prime: f64,
    pub c_double_prime: f64,
    /// A of the gap lower bound Δ ≥ A·Γ^p used by the tails (and bounded mode).
    pub gap_constant: f64,
    pub gap_power: f64,
    pub a_fit: Option<f64>,
    pub b_fit: Option<f64>,
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// ‖H′(0)‖/Δ(0)².
    pub term_initial: f64,
    /// The lim_{t→∞} term: 0 for certified schedules, else the value at T_max.
    pub term_limit: f64,
    /// ‖H′(T_max)‖/Δ(T_max)².
    pub term_limit_proxy: f64,
    /// Set when `term_limit` is only the T_max value.
    pub limit_caveat: bool,
    pub integral_second_deriv: f64,
    pub integral_first_deriv_sq: f64,
    pub tail_second_deriv: f64,
    pub tail_first_deriv_sq: f64,
    pub tails_included: bool,
    pub total: f64,
    /// Finite-time right-hand side at T_max (initial + proxy + integrals).
    pub finite_time_total: f64,
    pub gap_mode: GapMode,
    pub constants: BoundConstants,
    pub certified: bool,
    pub quadrature_second: QuadratureResult,
    pub quadrature_first: QuadratureResult,
    /// (t, Δ) at the smallest sampled gap, measured mode only.
    pub min_gap: Option<(f64, f64)>,
    pub provenance: String,
}

/// One point of the finite-time inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiniteTimeBound {
    pub t: f64,
    pub term_initial: f64,
    pub term_current: f64,
    pub integral_second_deriv: f64,
    pub integral_first_deriv_sq: f64,
    pub rhs: f64,
}

enum GapSource {
    Profile(Arc<GapProfile>),
    LowerBound { constant: f64 },
    Fixed(f64),
}

/// Holds everything needed to evaluate the bound integrands for one
/// (problem, schedule) pair.
pub struct BoundEvaluator {
    diag: DiagonalIsing,
    schedule: Schedule,
    source: GapSource,
    gap_mode: GapMode,
    quadrature: QuadratureOptions,
    provenance: String,
}

impl BoundEvaluator {
    pub fn new(problem: &IsingProblem, schedule: &Schedule, t_max: f64, options: &BoundOptions) -> Result<Self> {
        Self::with_cache(problem, schedule, t_max, options, None)
    }

    pub fn with_cache(
        problem: &IsingProblem,
        schedule: &Schedule,
        t_max: f64,
        options: &BoundOptions,
        cache: Option<&ProfileCache>,
    ) -> Result<Self> {
        if problem.n_spins() != schedule.n_spins() {
            return Err(Error::Validation(format!(
                "schedule is for {} spins, problem has {}",
                schedule.n_spins(),
                problem.n_spins()
            )));
        }
        if !(t_max > 0.0 && t_max.is_finite()) {
            return Err(Error::Validation(format!("t_max must be positive, got {t_max}")));
        }
        let diag = build_diagonal(problem)?;
        ensure_nondegenerate(&diag)?;
        let source = match options.gap_mode {
            GapMode::Measured => GapSource::Profile(match cache {
                Some(c) => c.get_or_build(problem, schedule, t_max, options.profile_points)?,
                None => Arc::new(GapProfile::build(&diag, schedule, t_max, options.profile_points)?),
            }),
            GapMode::Bounded => GapSource::LowerBound {
                constant: match options.fit {
                    Some((a, b)) => fitted_constant(a, b, schedule.n_spins()),
                    None => instance_gap_constant(&diag, schedule, t_max)?.0,
                },
            },
            GapMode::Fixed(v) => {
                if !(v > 0.0) {
                    return Err(Error::Validation("fixed gap must be positive".into()));
                }
                GapSource::Fixed(v)
            }
        };
        Ok(Self {
            diag,
            schedule: schedule.clone(),
            source,
            gap_mode: options.gap_mode,
            quadrature: options.quadrature,
            provenance: pair_hash(problem, &schedule.descriptor()),
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn profile(&self) -> Option<&GapProfile> {
        match &self.source {
            GapSource::Profile(p) => Some(p),
            _ => None,
        }
    }

    /// The gap used inside the integrands.
    pub fn gap(&self, t: f64) -> f64 {
        match &self.source {
            GapSource::Profile(p) => p.gap_at(t),
            GapSource::LowerBound { constant } => {
                constant * self.schedule.gamma(t).powi(self.schedule.n_spins() as i32)
            }
            GapSource::Fixed(v) => *v,
        }
    }

    /// Gap at `t` from a fresh diagonalization (measured mode) or the model.
    pub fn gap_exact(&self, t: f64) -> Result<f64> {
        match &self.source {
            GapSource::Profile(_) => Ok(diagonalize(&self.diag, self.schedule.gamma(t), 2)?.gap()),
            _ => Ok(self.gap(t)),
        }
    }

    /// ‖H″‖/Δ².
    pub fn integrand_second(&self, t: f64) -> f64 {
        let (_, d2) = derivative_norms(&self.schedule, t);
        let gap = self.gap(t);
        d2 / (gap * gap)
    }

    /// 7‖H′‖²/Δ³.
    pub fn integrand_first_sq(&self, t: f64) -> f64 {
        let (d1, _) = derivative_norms(&self.schedule, t);
        let gap = self.gap(t);
        FIRST_DERIVATIVE_WEIGHT * d1 * d1 / (gap * gap * gap)
    }

    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let n = self.quadrature.initial_panels.max(1);
        let (la, lb) = (a.ln_1p(), b.ln_1p());
        let mut pts: Vec<f64> = (0..=n).map(|k| (la + (lb - la) * k as f64 / n as f64).exp_m1()).collect();
        pts[0] = a;
        pts[n] = b;
        if let GapSource::Profile(p) = &self.source {
            let (t_min, _) = p.minimum();
            if t_min > a && t_min < b {
                pts.push(t_min);
                pts.sort_by(f64::total_cmp);
                pts.dedup();
            }
        }
        pts
    }

    /// (∫ ‖H″‖/Δ², ∫ 7‖H′‖²/Δ³) over [a, b].
    pub fn integrals(&self, a: f64, b: f64) -> (QuadratureResult, QuadratureResult) {
        let pts = self.breakpoints(a, b);
        let second = integrate_breakpoints(|t| self.integrand_second(t), &pts, &self.quadrature);
        let first = integrate_breakpoints(|t| self.integrand_first_sq(t), &pts, &self.quadrature);
        (second, first)
    }

    /// Right-hand side of the finite-time inequality at each checkpoint; the
    /// boundary terms use freshly diagonalized gaps.
    pub fn finite_time_bounds(&self, checkpoints: &[f64]) -> Result<Vec<FiniteTimeBound>> {
        if checkpoints.windows(2).any(|w| w[1] < w[0]) || checkpoints.first().is_some_and(|&t| t < 0.0) {
            return Err(Error::Validation("checkpoints must be nonnegative and nondecreasing".into()));
        }
        let g0 = self.gap_exact(0.0)?;
        let term_initial = derivative_norms(&self.schedule, 0.0).0 / (g0 * g0);
        let mut acc2 = 0.0;
        let mut acc1 = 0.0;
        let mut prev = 0.0;
        let mut out = Vec::with_capacity(checkpoints.len());
        for &t in checkpoints {
            if t > prev {
                let (s, f) = self.integrals(prev, t);
                acc2 += s.value;
                acc1 += f.value;
                prev = t;
            }
            let gt = self.gap_exact(t)?;
            let term_current = derivative_norms(&self.schedule, t).0 / (gt * gt);
            out.push(FiniteTimeBound {
                t,
                term_initial,
                term_current,
                integral_second_deriv: acc2,
                integral_first_deriv_sq: acc1,
                rhs: term_initial + term_current + acc2 + acc1,
            });
        }
        Ok(out)
    }

    /// CSV of integrand samples on the profile grid (or a log grid).
    pub fn integrand_csv(&self, t_max: f64) -> String {
        let times: Vec<f64> = match &self.source {
            GapSource::Profile(p) => p.times().to_vec(),
            _ => log_grid(t_max, MIN_PROFILE_POINTS),
        };
        let mut out = String::from("t,gamma,gap,second_deriv_integrand,first_deriv_sq_integrand\n");
        for t in times {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e}\n",
                t,
                self.schedule.gamma(t),
                self.gap(t),
                self.integrand_second(t),
                self.integrand_first_sq(t)
            ));
        }
        out
    }
}

fn fitted_constant(a: f64, b: f64, n_spins: usize) -> f64 {
    let n = n_spins as f64;
    a * n.sqrt() * (-b * n).exp()
}

/// min Δ/Γ^N over Γ ∈ [10⁻³·Γ(T_max), Γ(0)] ∪ [Γ(T_max), Γ(0)], log-spaced.
///
/// Δ/Γ^N grows without bound as Γ → 0 for a nondegenerate Ising problem, so
/// extending the grid below Γ(T_max) covers the tail region.
pub fn instance_gap_constant(diag: &DiagonalIsing, schedule: &Schedule, t_max: f64) -> Result<(f64, f64)> {
    let g_start = schedule.gamma(0.0);
    let g_end = schedule.gamma(t_max);
    let (lo, hi) = (g_start.min(g_end), g_start.max(g_end));
    let mut grid = log_spaced(lo * 1e-3, hi, 400);
    grid.extend(log_spaced(lo, hi, 200));
    gap_constant(diag, &grid)
}

/// ∫_T^∞ δ² u^e dt with u = δt + c, for e < −1.
fn power_tail(delta: f64, u_t: f64, exponent: f64) -> f64 {
    delta * u_t.powf(exponent + 1.0) / (-(exponent + 1.0))
}

/// Closed-form bounds on the two integrals over [t_max, ∞) given the gap
/// lower bound Δ ≥ A·Γ^p. Returns (second-derivative tail, first-derivative tail).
pub fn analytic_tails(constants: &BoundConstants) -> Result<(f64, f64)> {
    let BoundConstants {
        n_spins,
        delta,
        c,
        l_sup,
        g_inf,
        l_const,
        m,
        c_prime,
        c_double_prime,
        gap_constant: a,
        gap_power: p,
        t_max,
        ..
    } = *constants;
    let n = n_spins as f64;
    let q = (2.0 * n - 1.0) / (3.0 * n - 2.0);
    let u_t = delta * t_max + c;
    if u_t < 1.0 {
        return Err(Error::Validation(format!(
            "analytic tails need δ·T_max + c ≥ 1, got {u_t}"
        )));
    }
    // u ≥ 1 so u^{k g} is largest at g = L for k ≥ 0 and at g = g_inf for k < 0
    let worst = |k: f64| if k >= 0.0 { k * l_sup } else { k * g_inf };
    let bound_prime = l_sup + m * c_prime;

    let e_first = worst(3.0 * p - 2.0) - 2.0;
    if e_first >= -1.0 {
        return Err(Error::TailDivergence(format!(
            "(3N−2)L = {} ≥ 1",
            (3.0 * p - 2.0) * l_sup
        )));
    }
    let first = FIRST_DERIVATIVE_WEIGHT * n * n / a.powi(3) * bound_prime * bound_prime * power_tail(delta, u_t, e_first);

    let e_a = worst(2.0 * p - 1.0) - 2.0;
    let e_b = worst(2.0 * p - 1.0) - 1.0 - q;
    if e_a >= -1.0 || e_b >= -1.0 {
        return Err(Error::TailDivergence(format!(
            "(2N−1)L = {} is not below (2N−1)/(3N−2)",
            (2.0 * p - 1.0) * l_sup
        )));
    }
    let coeff_a = l_sup + 2.0 * c_prime / c.powf(l_const) + bound_prime * bound_prime;
    let second = n / (a * a) * (coeff_a * power_tail(delta, u_t, e_a) + c_double_prime * power_tail(delta, u_t, e_b));
    Ok((second, first))
}

/// Evaluates every term of the infinite-time bound.
pub fn evaluate_bound(problem: &IsingProblem, schedule: &Schedule, t_max: f64, options: &BoundOptions) -> Result<BoundReport> {
    evaluate_bound_cached(problem, schedule, t_max, options, None)
}

pub fn evaluate_bound_cached(
    problem: &IsingProblem,
    schedule: &Schedule,
    t_max: f64,
    options: &BoundOptions,
    cache: Option<&ProfileCache>,
) -> Result<BoundReport> {
    let cert = if schedule.delta() > 0.0 {
        Some(certify(
            schedule,
            t_max,
            options.certify_grid_points,
            &options.certify,
        )?)
    } else {
        None
    };
    let certified = cert.as_ref().is_some_and(|c| c.passed);
    if options.tails {
        match &cert {
            None => return Err(Error::Uncertified("tails need δ > 0".into())),
            Some(c) if !c.strict_bound.passed => {
                return Err(Error::TailDivergence(format!(
                    "(3N−2)L = {} ≥ 1",
                    (3.0 * c.n_spins as f64 - 2.0) * c.l_sup
                )))
            }
            Some(c) if !c.passed => return Err(Error::Uncertified(c.reasons().join("; "))),
            _ => {}
        }
    }
    let eval = BoundEvaluator::with_cache(problem, schedule, t_max, options, cache)?;
    report_from(&eval, cert.as_ref(), certified, t_max, options)
}

fn report_from(
    eval: &BoundEvaluator,
    cert: Option<&ConditionCertificate>,
    certified: bool,
    t_max: f64,
    options: &BoundOptions,
) -> Result<BoundReport> {
    let schedule = eval.schedule();
    let g0 = eval.gap_exact(0.0)?;
    let gt = eval.gap_exact(t_max)?;
    let term_initial = derivative_norms(schedule, 0.0).0 / (g0 * g0);
    let term_limit_proxy = derivative_norms(schedule, t_max).0 / (gt * gt);
    let (term_limit, limit_caveat) = if certified { (0.0, false) } else { (term_limit_proxy, true) };
    let (quad_second, quad_first) = eval.integrals(0.0, t_max);

    let n = schedule.n_spins();
    let (gap_constant, gap_power) = match &eval.source {
        GapSource::Fixed(v) => (*v, 0.0),
        GapSource::LowerBound { constant } => (*constant, n as f64),
        GapSource::Profile(_) => (instance_gap_constant(&eval.diag, schedule, t_max)?.0, n as f64),
    };
    let grid_inf = log_grid(t_max, 2000)
        .into_iter()
        .map(|t| schedule.g_at(t).value)
        .fold(f64::INFINITY, f64::min);
    let constants = BoundConstants {
        n_spins: n,
        delta: schedule.delta(),
        c: schedule.c(),
        l_sup: cert.map_or(f64::NAN, |c| c.l_sup),
        g_inf: grid_inf,
        l_const: options.certify.l_const,
        m: compute_m(schedule.c(), options.certify.l_const),
        c_prime: cert.map_or(f64::NAN, |c| c.c_prime),
        c_double_prime: cert.map_or(f64::NAN, |c| c.c_double_prime),
        gap_constant,
        gap_power,
        a_fit: options.fit.map(|f| f.0),
        b_fit: options.fit.map(|f| f.1),
        t_max,
    };
    let (tail_second, tail_first) = if options.tails { analytic_tails(&constants)? } else { (0.0, 0.0) };
    let integrals = quad_second.value + quad_first.value;
    Ok(BoundReport {
        term_initial,
        term_limit,
        term_limit_proxy,
        limit_caveat,
        integral_second_deriv: quad_second.value,
        integral_first_deriv_sq: quad_first.value,
        tail_second_deriv: tail_second,
        tail_first_deriv_sq: tail_first,
        tails_included: options.tails,
        total: term_initial + term_limit + integrals + tail_second + tail_first,
        finite_time_total: term_initial + term_limit_proxy + integrals,
        gap_mode: eval.gap_mode,
        constants,
        certified,
        quadrature_second: quad_second,
        quadrature_first: quad_first,
        min_gap: eval.profile().map(GapProfile::minimum),
        provenance: eval.provenance.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    pub satisfied: bool,
    pub final_excitation: f64,
    pub total: f64,
    /// total / final_excitation (infinite when nothing was excited).
    pub slack_ratio: f64,
    /// Whether the finite-time right-hand side at T_max also holds.
    pub finite_time_satisfied: bool,
}

/// Excitations below this are indistinguishable from rounding in the evolved state.
pub const EXCITATION_RESOLUTION: f64 = 1e-12;

/// Checks the measured final excitation against the bound total.
pub fn compare(report: &BoundReport, trajectory: &TrajectoryRecord) -> Result<ComparisonVerdict> {
    if report.provenance != trajectory.provenance {
        return Err(Error::Provenance {
            report: report.provenance.clone(),
            trajectory: trajectory.provenance.clone(),
        });
    }
    let fe = trajectory.final_excitation;
    Ok(ComparisonVerdict {
        satisfied: fe <= report.total + EXCITATION_RESOLUTION,
        final_excitation: fe,
        total: report.total,
        slack_ratio: if fe > 0.0 { report.total / fe } else { f64::INFINITY },
        finite_time_satisfied: fe <= report.finite_time_total + EXCITATION_RESOLUTION,
    })
}

/// Hash of a bound report's inputs, for caching and manifests.
pub fn report_key(problem: &IsingProblem, schedule: &Schedule, t_max: f64, options: &BoundOptions) -> String {
    content_hash(&(problem, schedule, t_max, options))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ising::IsingTerm;
    use crate::schedule::GFunction;
    use approx::assert_relative_eq;

    fn single_spin() -> IsingProblem {
        IsingProblem::new(1, vec![IsingTerm { sites: vec![0], j: 1.0 }]).unwrap()
    }

    #[test]
    fn derivative_norm_example() {
        let s = Schedule::new(0.1, 1.0, 4, GFunction::Constant { g0: 0.1 }).unwrap();
        let (d1, d2) = derivative_norms(&s, 0.0);
        assert_relative_eq!(d1, 0.04, max_relative = 1e-14);
        assert!(d2 >= 0.0);
    }

    #[test]
    fn fixed_gap_closed_form() {
        let (n, g, delta, c) = (2usize, 0.125, 1e-3, 2.0);
        let s = Schedule::new(delta, c, n, GFunction::Constant { g0: g }).unwrap();
        let p = IsingProblem::new(2, vec![IsingTerm { sites: vec![0], j: 1.0 }, IsingTerm { sites: vec![0, 1], j: 0.5 }]).unwrap();
        let opts = BoundOptions {
            gap_mode: GapMode::Fixed(1.0),
            ..Default::default()
        };
        let r = evaluate_bound(&p, &s, 10.0 / delta, &opts).unwrap();
        let nn = n as f64;
        let exact = 7.0 * nn * nn * delta * g * g * c.powf(-2.0 * g - 1.0) / (2.0 * g + 1.0);
        assert_relative_eq!(r.integral_first_deriv_sq + r.tail_first_deriv_sq, exact, max_relative = 1e-6);
    }

    #[test]
    fn uncertified_tails_refused() {
        let s = Schedule::new(1e-3, 2.0, 1, GFunction::Constant { g0: 1.2 }).unwrap();
        assert!(matches!(
            evaluate_bound(&single_spin(), &s, 1e4, &BoundOptions::default()),
            Err(Error::TailDivergence(_))
        ));
        let no_tails = BoundOptions {
            tails: false,
            ..Default::default()
        };
        let r = evaluate_bound(&single_spin(), &s, 1e3, &no_tails).unwrap();
        assert!(r.limit_caveat);
        assert_eq!(r.term_limit, r.term_limit_proxy);
    }

    #[test]
    fn pchip_reproduces_samples_and_stays_monotone() {
        let snaps: Vec<SpectrumSnapshot> = (0..10)
            .map(|k| SpectrumSnapshot {
                t: (k * k) as f64,
                gamma_value: 1.0,
                eps0: 0.0,
                eps1: 0.0,
                gap: 1.0 + (k as f64).sqrt(),
                ground_state: Default::default(),
            })
            .collect();
        let p = GapProfile::from_snapshots(&snaps).unwrap();
        for s in &snaps {
            assert_relative_eq!(p.gap_at(s.t), s.gap, epsilon = 1e-12);
        }
        let mut last = 0.0;
        for k in 0..1000 {
            let g = p.gap_at(k as f64 * 0.081);
            assert!(g >= last - 1e-14);
            last = g;
        }
    }

    #[test]
    fn compare_checks_provenance() {
        let s = Schedule::new(1e-2, 2.0, 1, GFunction::Constant { g0: 0.25 }).unwrap();
        let r = evaluate_bound(&single_spin(), &s, 1e3, &BoundOptions::default()).unwrap();
        let traj = TrajectoryRecord {
            times: vec![],
            gamma: vec![],
            gap: vec![],
            ground_overlap_sq: vec![],
            excitation_norm: vec![],
            norm_drift: vec![],
            final_excitation: 0.0,
            final_overlap_sq: 1.0,
            norm_failure_at: None,
            steps: 0,
            provenance: "other".into(),
        };
        assert!(matches!(compare(&r, &traj), Err(Error::Provenance { .. })));
        let ok = TrajectoryRecord {
            provenance: r.provenance.clone(),
            ..traj
        };
        let v = compare(&r, &ok).unwrap();
        assert!(v.satisfied);
        assert!(v.slack_ratio.is_infinite());
    }
}
