//! Bounded-coefficient annealing H(t) = s(t)·H_Ising − (1 − s(t))·Σσ^x and
//! its rewriting in the time t̃ = ∫₀ᵗ s, where it becomes
//! H̃(t̃) = H_Ising − Γ(t̃)·Σσ^x with Γ = (1 − s)/s.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_breakpoints, QuadratureOptions};
use crate::schedule::{log_grid, Drive, Schedule};
use crate::spectrum::log_spaced;

/// s(t₀) used for the default start of tanh runs.
pub const DEFAULT_START_S: f64 = 0.1;

/// Piecewise-linear s(t) through (t_k, s_k), held at s_last beyond the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSamples", into = "RawSamples")]
pub struct TabulatedS {
    times: Vec<f64>,
    values: Vec<f64>,
    /// ∫₀^{t_k} s at each knot.
    cumulative: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSamples {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawSamples> for TabulatedS {
    type Error = Error;

    fn try_from(raw: RawSamples) -> Result<Self> {
        TabulatedS::new(raw.times, raw.values)
    }
}

impl From<TabulatedS> for RawSamples {
    fn from(tab: TabulatedS) -> Self {
        RawSamples {
            times: tab.times,
            values: tab.values,
        }
    }
}

impl TabulatedS {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::Validation(
                "tabulated s needs at least two (time, value) pairs of equal length".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::Validation("tabulated s must start at t = 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Validation("tabulated s times must be finite and strictly increasing".into()));
        }
        if values.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Validation("tabulated s values must lie in [0, 1]".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Validation("tabulated s must be nondecreasing".into()));
        }
        let mut cumulative = vec![0.0];
        for k in 1..times.len() {
            let area = 0.5 * (values[k] + values[k - 1]) * (times[k] - times[k - 1]);
            cumulative.push(cumulative[k - 1] + area);
        }
        Ok(Self {
            times,
            values,
            cumulative,
        })
    }

    fn segment(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x <= t).saturating_sub(1).min(self.times.len() - 2)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let last = self.times.len() - 1;
        if t >= self.times[last] {
            return self.values[last];
        }
        let k = self.segment(t);
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        self.values[k] + w * (self.values[k + 1] - self.values[k])
    }

    /// Exact integral of the interpolant.
    pub fn integral(&self, t: f64) -> f64 {
        let last = self.times.len() - 1;
        if t >= self.times[last] {
            return self.cumulative[last] + self.values[last] * (t - self.times[last]);
        }
        let k = self.segment(t);
        let s_t = self.eval(t);
        self.cumulative[k] + 0.5 * (self.values[k] + s_t) * (t - self.times[k])
    }
}

/// Monotone coefficient s(t) ∈ [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SFunction {
    /// s = tanh t.
    Tanh,
    /// s defined through Γ(t̃) = κ·t̃^{−g̃(t̃)}, with g̃ taken from the schedule's exponent.
    RationalFromSchedule {
        schedule: Schedule,
        #[serde(default = "unit")]
        proportionality: f64,
    },
    Tabulated(TabulatedS),
}

fn unit() -> f64 {
    1.0
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Validation(format!("time must be finite and nonnegative, got {t}")))
    }
}

/// log cosh t, stable for large t.
fn log_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl SFunction {
    pub fn rational(schedule: Schedule, proportionality: f64) -> Result<Self> {
        let f = SFunction::RationalFromSchedule {
            schedule,
            proportionality,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SFunction::Tanh | SFunction::Tabulated(_) => Ok(()),
            SFunction::RationalFromSchedule {
                schedule,
                proportionality,
            } => {
                if !(*proportionality > 0.0 && proportionality.is_finite()) {
                    return Err(Error::Validation("proportionality constant must be positive".into()));
                }
                // t(t̃) = t̃ + κ∫ u^{−g̃} is finite only for g̃ < 1 near the origin
                for u in log_grid(1e12, 2000) {
                    let g = schedule.g_at(u).value;
                    if !(0.0..1.0).contains(&g) {
                        return Err(Error::Validation(format!(
                            "exponent must stay in [0, 1) for the rational s, got {g} at t̃ = {u}"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// s(t).
    pub fn s(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.s_unchecked(t))
    }

    fn s_unchecked(&self, t: f64) -> f64 {
        match self {
            SFunction::Tanh => t.tanh(),
            SFunction::Tabulated(tab) => tab.eval(t),
            SFunction::RationalFromSchedule { .. } => {
                if t == 0.0 {
                    return 0.0;
                }
                let tt = self.rational_inverse(t);
                self.rational_s_of_ttilde(tt)
            }
        }
    }

    /// t̃(t) = ∫₀ᵗ s.
    pub fn t_tilde(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(match self {
            SFunction::Tanh => log_cosh(t),
            SFunction::Tabulated(tab) => tab.integral(t),
            SFunction::RationalFromSchedule { .. } => {
                if t == 0.0 {
                    0.0
                } else {
                    self.rational_inverse(t)
                }
            }
        })
    }

    /// Γ as a function of t̃; an error where s = 0.
    pub fn gamma_at_ttilde(&self, tt: f64) -> Result<f64> {
        check_time(tt)?;
        let s = match self {
            SFunction::Tanh => (-(-2.0 * tt).exp_m1()).sqrt(),
            SFunction::RationalFromSchedule {
                schedule,
                proportionality,
            } => {
                if tt == 0.0 {
                    0.0
                } else {
                    return Ok(proportionality * tt.powf(-schedule.g_at(tt).value));
                }
            }
            SFunction::Tabulated(tab) => tab.eval(tabulated_inverse(tab, tt)),
        };
        gamma_from_s(s, tt)
    }

    fn rational_s_of_ttilde(&self, tt: f64) -> f64 {
        match self {
            SFunction::RationalFromSchedule {
                schedule,
                proportionality,
            } => 1.0 / (1.0 + proportionality * tt.powf(-schedule.g_at(tt).value)),
            _ => unreachable!("rational only"),
        }
    }

    /// t(t̃) = t̃ + κ∫₀^{t̃} u^{−g̃(u)} du for the rational form.
    pub fn rational_time_of_ttilde(&self, tt: f64) -> Result<f64> {
        check_time(tt)?;
        let SFunction::RationalFromSchedule {
            schedule,
            proportionality,
        } = self
        else {
            return Err(Error::Validation("only defined for the rational s".into()));
        };
        if tt == 0.0 {
            return Ok(0.0);
        }
        // below ε the exponent is frozen at g̃(ε) and the power integrated exactly
        let eps = (tt * 1e-12).min(1e-12);
        let g_eps = schedule.g_at(eps).value;
        let head = eps.powf(1.0 - g_eps) / (1.0 - g_eps);
        let pts = log_spaced(eps, tt, 64);
        let opts = QuadratureOptions {
            initial_panels: 1,
            abs_tol: 1e-13,
            ..QuadratureOptions::default()
        };
        let body = integrate_breakpoints(|u| u.powf(-schedule.g_at(u).value), &pts, &opts);
        Ok(tt + proportionality * (head + body.value))
    }

    fn rational_inverse(&self, t: f64) -> f64 {
        // t(t̃) is increasing with t(t̃) ≥ t̃, so t̃ ∈ (0, t]
        let time = |tt: f64| self.rational_time_of_ttilde(tt).expect("nonnegative t̃");
        let (mut lo, mut hi) = (0.0, t);
        let mut x = 0.5 * t;
        for _ in 0..200 {
            let f = time(x) - t;
            if f.abs() <= 1e-14 * t.max(1.0) {
                break;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let slope = 1.0 / self.rational_s_of_ttilde(x);
            let newton = x - f / slope;
            x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        x
    }
}

fn tabulated_inverse(tab: &TabulatedS, tt: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    while tab.integral(hi) < tt {
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tab.integral(mid) < tt {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn gamma_from_s(s: f64, t: f64) -> Result<f64> {
    if s <= 0.0 {
        return Err(Error::AnnealingNotStarted { t });
    }
    Ok((1.0 - s) / s)
}

/// Γ = (1 − s(t))/s(t).
pub fn gamma_of_ttilde(s_fn: &SFunction, t: f64) -> Result<f64> {
    gamma_from_s(s_fn.s(t)?, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SValue {
    /// 1/(1 + κ·t̃^{−g̃}).
    pub s: f64,
    /// 1 − κ·t̃^{−g̃}.
    pub asymptotic: f64,
}

/// Solves Γ(t̃) = κ·t̃^{−g̃(t̃)} = (1 − s)/s for s.
pub fn s_from_schedule(schedule: &Schedule, t_tilde: f64, proportionality: f64) -> Result<SValue> {
    if !(t_tilde > 0.0 && t_tilde.is_finite()) {
        return Err(Error::Validation(format!("t̃ must be positive, got {t_tilde}")));
    }
    let power = proportionality * t_tilde.powf(-schedule.g_at(t_tilde).value);
    Ok(SValue {
        s: 1.0 / (1.0 + power),
        asymptotic: 1.0 - power,
    })
}

/// t₀ with tanh t₀ = s₀.
pub fn tanh_start_time(s0: f64) -> Result<f64> {
    if !(s0 > 0.0 && s0 < 1.0) {
        return Err(Error::Validation(format!("start value of s must lie in (0, 1), got {s0}")));
    }
    Ok(s0.atanh())
}

/// Tabulated (t, s, t̃) correspondence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReparamMap {
    pub times: Vec<f64>,
    pub s_values: Vec<f64>,
    pub t_tilde: Vec<f64>,
}

impl ReparamMap {
    /// Samples the map at `points` log1p-spaced times on [0, t_max].
    pub fn build(s_fn: &SFunction, t_max: f64, points: usize) -> Result<Self> {
        check_time(t_max)?;
        let times = log_grid(t_max, points);
        let mut s_values = Vec::with_capacity(times.len());
        let mut t_tilde = Vec::with_capacity(times.len());
        for &t in &times {
            s_values.push(s_fn.s(t)?);
            t_tilde.push(s_fn.t_tilde(t)?);
        }
        let map = Self {
            times,
            s_values,
            t_tilde,
        };
        map.check_monotone()?;
        Ok(map)
    }

    pub fn check_monotone(&self) -> Result<()> {
        if self.t_tilde.first().is_some_and(|&v| v != 0.0) {
            return Err(Error::Internal("t̃(0) must vanish".into()));
        }
        for k in 1..self.times.len() {
            if self.s_values[k] < self.s_values[k - 1] {
                return Err(Error::Validation(format!("s decreases near t = {}", self.times[k])));
            }
            let positive = self.s_values[k - 1] > 0.0 || self.s_values[k] > 0.0;
            let step = self.t_tilde[k] - self.t_tilde[k - 1];
            if step < 0.0 || (positive && step == 0.0) {
                return Err(Error::Internal(format!("t̃ not increasing near t = {}", self.times[k])));
            }
        }
        Ok(())
    }

    /// t for a given t̃ by linear interpolation of the sampled map.
    pub fn inverse(&self, tt: f64) -> Option<f64> {
        let n = self.t_tilde.len();
        if n == 0 || tt < self.t_tilde[0] || tt > self.t_tilde[n - 1] {
            return None;
        }
        let k = self.t_tilde.partition_point(|&x| x < tt);
        if k == 0 {
            return Some(self.times[0]);
        }
        let (a, b) = (self.t_tilde[k - 1], self.t_tilde[k]);
        let w = if b > a { (tt - a) / (b - a) } else { 0.0 };
        Some(self.times[k - 1] + w * (self.times[k] - self.times[k - 1]))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,s,t_tilde,gamma\n");
        for k in 0..self.times.len() {
            let s = self.s_values[k];
            let gamma = if s > 0.0 { format!("{:e}", (1.0 - s) / s) } else { "inf".into() };
            out.push_str(&format!("{:e},{:e},{:e},{}\n", self.times[k], s, self.t_tilde[k], gamma));
        }
        out
    }
}

/// H̃ = H_Ising − Γ(t̃₀ + τ)·Σσ^x in evolution time τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTildeDrive {
    s_fn: SFunction,
    start: f64,
}

impl TTildeDrive {
    /// `start` is t̃₀ and must have s > 0.
    pub fn new(s_fn: SFunction, start: f64) -> Result<Self> {
        let gamma = s_fn.gamma_at_ttilde(start)?;
        if !gamma.is_finite() {
            return Err(Error::AnnealingNotStarted { t: start });
        }
        Ok(Self { s_fn, start })
    }

    pub fn start(&self) -> f64 {
        self.start
    }
}

impl Drive for TTildeDrive {
    fn coefficients(&self, tau: f64) -> (f64, f64) {
        (1.0, self.s_fn.gamma_at_ttilde(self.start + tau.max(0.0)).expect("t̃ > 0"))
    }

    fn descriptor(&self) -> serde_json::Value {
        serde_json::json!({ "t_tilde_drive": self })
    }
}

/// H = s(t₀ + τ)·H_Ising − (1 − s(t₀ + τ))·Σσ^x in evolution time τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SFormDrive {
    s_fn: SFunction,
    start: f64,
}

impl SFormDrive {
    pub fn new(s_fn: SFunction, start: f64) -> Result<Self> {
        check_time(start)?;
        if s_fn.s(start)? <= 0.0 {
            return Err(Error::AnnealingNotStarted { t: start });
        }
        Ok(Self { s_fn, start })
    }
}

impl Drive for SFormDrive {
    fn coefficients(&self, tau: f64) -> (f64, f64) {
        let s = self.s_fn.s_unchecked(self.start + tau.max(0.0));
        (s, 1.0 - s)
    }

    fn descriptor(&self) -> serde_json::Value {
        serde_json::json!({ "s_form_drive": self })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::GFunction;
    use approx::assert_relative_eq;

    fn constant_schedule(g0: f64) -> Schedule {
        Schedule::new(1e-3, 2.0, 2, GFunction::Constant { g0 }).unwrap()
    }

    #[test]
    fn tanh_t_tilde_values() {
        assert_relative_eq!(SFunction::Tanh.t_tilde(2.0).unwrap(), 1.3250027473578644309, max_relative = 1e-14);
        assert_eq!(SFunction::Tanh.t_tilde(0.0).unwrap(), 0.0);
        let far = SFunction::Tanh.t_tilde(25.0).unwrap();
        assert!((far - 24.306852819440054691).abs() < 1e-12);
    }

    #[test]
    fn gamma_examples() {
        assert_relative_eq!(gamma_of_ttilde(&SFunction::Tanh, 1.0).unwrap(), 0.31303528549933130364, max_relative = 1e-14);
        assert!(matches!(gamma_of_ttilde(&SFunction::Tanh, 0.0), Err(Error::AnnealingNotStarted { .. })));
        let half = SFunction::Tabulated(TabulatedS::new(vec![0.0, 1.0], vec![0.5, 1.0]).unwrap());
        assert_eq!(gamma_of_ttilde(&half, 0.0).unwrap(), 1.0);
        assert_eq!(gamma_of_ttilde(&half, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn s_from_schedule_examples() {
        let s = constant_schedule(0.125);
        assert_eq!(s_from_schedule(&s, 1.0, 1.0).unwrap().s, 0.5);
        assert_relative_eq!(s_from_schedule(&s, 16.0, 1.0).unwrap().s, 0.58578643762690495120, max_relative = 1e-15);
        for tt in [1e3f64, 1e6, 1e9] {
            let v = s_from_schedule(&s, tt, 1.0).unwrap();
            assert!((v.s - v.asymptotic).abs() <= tt.powf(-0.25));
        }
        assert!(s_from_schedule(&s, 0.0, 1.0).is_err());
    }

    #[test]
    fn tanh_gamma_in_ttilde_matches_direct() {
        for t in [0.3, 1.0, 2.5, 7.0] {
            let tt = SFunction::Tanh.t_tilde(t).unwrap();
            assert_relative_eq!(
                SFunction::Tanh.gamma_at_ttilde(tt).unwrap(),
                gamma_of_ttilde(&SFunction::Tanh, t).unwrap(),
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn rational_constant_g_closed_form() {
        let g = 0.25;
        let f = SFunction::rational(constant_schedule(g), 1.0).unwrap();
        for tt in [0.01f64, 1.0, 30.0] {
            let exact = tt + tt.powf(1.0 - g) / (1.0 - g);
            assert_relative_eq!(f.rational_time_of_ttilde(tt).unwrap(), exact, max_relative = 1e-10);
            assert_relative_eq!(f.t_tilde(exact).unwrap(), tt, max_relative = 1e-10);
        }
    }

    #[test]
    fn map_is_monotone_and_invertible() {
        let map = ReparamMap::build(&SFunction::Tanh, 10.0, 500).unwrap();
        let t = map.inverse(3.0).unwrap();
        assert_relative_eq!(SFunction::Tanh.t_tilde(t).unwrap(), 3.0, max_relative = 1e-3);
        assert!(map.to_csv().lines().nth(1).unwrap().ends_with("inf"));
        assert!(TabulatedS::new(vec![0.0, 1.0], vec![0.6, 0.5]).is_err());
    }

    #[test]
    fn sfunction_json_round_trip() {
        let f = SFunction::rational(constant_schedule(0.2), 2.0).unwrap();
        let back: SFunction = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back, f);
        let tanh: SFunction = serde_json::from_str(r#"{"kind":"tanh"}"#).unwrap();
        assert_eq!(tanh, SFunction::Tanh);
    }
}
