//! Config-driven pipelines: certify → gap profile → evolve → bound → compare,
//! swept over δ, N and g0, with every artifact written under a per-point
//! directory and indexed by a manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bound::{
    compare, evaluate_bound_cached, EXCITATION_RESOLUTION, BoundEvaluator, BoundOptions, BoundReport, ComparisonVerdict, FiniteTimeBound,
    GapMode, ProfileCache,
};
use crate::dynamics::{evolve, IntegratorConfig, StepControl, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::ising::{build_diagonal, IsingProblem, IsingTerm, MAX_DIAGONAL_SPINS, NORM_TOLERANCE};
use crate::provenance::{content_hash, hex_digest};
use crate::quadrature::QuadratureOptions;
use crate::reparam::{ReparamMap, SFunction};
use crate::schedule::{
    certify, CertifyOptions, ConditionCertificate, GFunction, Schedule, TabulatedG, DEFAULT_C, DEFAULT_GRID_POINTS,
    DEFAULT_HORIZON_K, DEFAULT_L_CONST,
};
use crate::spectrum::{fit_gap_constants, log_spaced, GapBoundFit};

/// Smallest accepted Ising gap for generated problems.
pub const RANDOM_GAP_FLOOR: f64 = 1e-6;
pub const RANDOM_RETRIES: usize = 100;
/// Interior record points checked against the finite-time bound.
pub const DEFAULT_CHECKPOINTS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingDistribution {
    /// J uniform on [−coupling, coupling], fields uniform on [−field, field].
    Uniform { coupling: f64, field: f64 },
    Gaussian { coupling_std: f64, field_std: f64 },
}

impl Default for CouplingDistribution {
    fn default() -> Self {
        CouplingDistribution::Uniform {
            coupling: 1.0,
            field: 0.5,
        }
    }
}

impl CouplingDistribution {
    fn validate(&self) -> std::result::Result<(), String> {
        let (a, b) = match *self {
            CouplingDistribution::Uniform { coupling, field } => (coupling, field),
            CouplingDistribution::Gaussian {
                coupling_std,
                field_std,
            } => (coupling_std, field_std),
        };
        if a >= 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
            Ok(())
        } else {
            Err("coupling scale must be ≥ 0 and field scale > 0".into())
        }
    }
}

/// All index sets of size 1..=k_max, by size and then lexicographically.
fn interaction_sets(n: usize, k_max: usize) -> Vec<Vec<usize>> {
    fn extend(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            extend(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for k in 1..=k_max {
        extend(0, n, k, &mut Vec::new(), &mut out);
    }
    out
}

/// Draws a k-local instance with every field and coupling present, resampling
/// until the Ising ground level is separated by at least 1e-6.
pub fn generate_random_problem(
    seed: u64,
    n_spins: usize,
    k_max: usize,
    distribution: &CouplingDistribution,
) -> Result<IsingProblem> {
    if n_spins == 0 || n_spins > MAX_DIAGONAL_SPINS {
        return Err(Error::SizeLimit {
            n_spins,
            limit: MAX_DIAGONAL_SPINS,
            what: "random problem generation",
        });
    }
    if !(1..=n_spins).contains(&k_max) {
        return Err(Error::Validation(format!("k_max must lie in 1..={n_spins}, got {k_max}")));
    }
    distribution.validate().map_err(Error::Validation)?;
    let sets = interaction_sets(n_spins, k_max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_RETRIES {
        let terms: Vec<IsingTerm> = sets
            .iter()
            .map(|sites| {
                let field = sites.len() == 1;
                let j = match *distribution {
                    CouplingDistribution::Uniform { coupling, field: h } => {
                        let scale = if field { h } else { coupling };
                        if scale > 0.0 {
                            rng.gen_range(-scale..=scale)
                        } else {
                            0.0
                        }
                    }
                    CouplingDistribution::Gaussian {
                        coupling_std,
                        field_std,
                    } => {
                        let std = if field { field_std } else { coupling_std };
                        Normal::new(0.0, std).expect("finite std").sample(&mut rng)
                    }
                };
                IsingTerm {
                    sites: sites.clone(),
                    j,
                }
            })
            .collect();
        let problem = IsingProblem::new(n_spins, terms)?;
        let (e0, e1) = build_diagonal(&problem)?.lowest_two();
        if e1 - e0 >= RANDOM_GAP_FLOOR {
            return Ok(problem);
        }
    }
    Err(Error::RetriesExhausted {
        retries: RANDOM_RETRIES,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomProblemSpec {
    pub seed: u64,
    pub n_spins: usize,
    pub k_max: usize,
    #[serde(default)]
    pub distribution: CouplingDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemSource {
    Inline(IsingProblem),
    File(PathBuf),
    Random(RandomProblemSpec),
}

/// Exponent specification; `quarter_inverse_n` resolves to g ≡ 1/(4N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GSpec {
    Constant { g0: f64 },
    PowerDecay { g0: f64, g1: f64, l_exp: f64 },
    Tabulated(TabulatedG),
    QuarterInverseN,
}

impl GSpec {
    pub fn resolve(&self, n_spins: usize, g0_override: Option<f64>) -> GFunction {
        let g = match self {
            GSpec::Constant { g0 } => GFunction::Constant { g0: *g0 },
            GSpec::PowerDecay { g0, g1, l_exp } => GFunction::PowerDecay {
                g0: *g0,
                g1: *g1,
                l_exp: *l_exp,
            },
            GSpec::Tabulated(t) => GFunction::Tabulated(t.clone()),
            GSpec::QuarterInverseN => GFunction::quarter_inverse_n(n_spins),
        };
        match g0_override {
            Some(v) => g.with_g0(v),
            None => g,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub delta: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    pub g: GSpec,
}

fn default_c() -> f64 {
    DEFAULT_C
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TMaxPolicy {
    /// T_max = K/δ.
    HorizonK(f64),
    Fixed(f64),
}

impl Default for TMaxPolicy {
    fn default() -> Self {
        TMaxPolicy::HorizonK(DEFAULT_HORIZON_K)
    }
}

impl TMaxPolicy {
    pub fn resolve(&self, delta: f64) -> Result<f64> {
        let t = match *self {
            TMaxPolicy::HorizonK(k) => k / delta,
            TMaxPolicy::Fixed(t) => t,
        };
        if t > 0.0 && t.is_finite() {
            Ok(t)
        } else {
            Err(Error::Validation(format!("T_max must be finite and positive, got {t}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    #[serde(default = "default_step")]
    pub step: StepControl,
    #[serde(default = "default_records")]
    pub records: usize,
    #[serde(default = "default_norm_tolerance")]
    pub norm_tolerance: f64,
}

fn default_step() -> StepControl {
    StepControl::Fixed { dt: 0.1 }
}

fn default_records() -> usize {
    1000
}

fn default_norm_tolerance() -> f64 {
    NORM_TOLERANCE
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        Self {
            step: default_step(),
            records: default_records(),
            norm_tolerance: default_norm_tolerance(),
        }
    }
}

impl IntegratorSpec {
    pub fn config(&self, max_time: f64) -> IntegratorConfig {
        IntegratorConfig {
            step: self.step,
            max_time,
            records: self.records,
            norm_tolerance: self.norm_tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    #[serde(default = "yes")]
    pub tails: bool,
    #[serde(default = "default_profile_points")]
    pub profile_points: usize,
    #[serde(default = "default_l_const")]
    pub l_const: f64,
    #[serde(default)]
    pub c_prime: Option<f64>,
    #[serde(default)]
    pub c_double_prime: Option<f64>,
    #[serde(default = "default_grid_points")]
    pub certify_grid_points: usize,
    /// Fitted (a, b); sets A = a√N e^{−bN} in bounded mode.
    #[serde(default)]
    pub fit: Option<(f64, f64)>,
    #[serde(default = "default_checkpoints")]
    pub checkpoints: usize,
}

fn yes() -> bool {
    true
}

fn default_profile_points() -> usize {
    crate::bound::MIN_PROFILE_POINTS
}

fn default_l_const() -> f64 {
    DEFAULT_L_CONST
}

fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}

fn default_checkpoints() -> usize {
    DEFAULT_CHECKPOINTS
}

impl Default for BoundSpec {
    fn default() -> Self {
        Self {
            tails: true,
            profile_points: default_profile_points(),
            l_const: DEFAULT_L_CONST,
            c_prime: None,
            c_double_prime: None,
            certify_grid_points: DEFAULT_GRID_POINTS,
            fit: None,
            checkpoints: DEFAULT_CHECKPOINTS,
        }
    }
}

impl BoundSpec {
    pub fn certify_options(&self) -> CertifyOptions {
        CertifyOptions {
            l_const: self.l_const,
            c_prime: self.c_prime,
            c_double_prime: self.c_double_prime,
        }
    }

    pub fn options(&self, gap_mode: GapMode) -> BoundOptions {
        BoundOptions {
            gap_mode,
            quadrature: QuadratureOptions::default(),
            profile_points: self.profile_points,
            tails: self.tails,
            certify: self.certify_options(),
            certify_grid_points: self.certify_grid_points,
            fit: self.fit,
        }
    }
}

/// Sweep axes; an empty axis keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub n_spins: Vec<usize>,
    #[serde(default)]
    pub g0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSource,
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    #[serde(default = "default_gap_mode")]
    pub gap_mode: GapMode,
    #[serde(default)]
    pub t_max: TMaxPolicy,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub bound: BoundSpec,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads for sweep points; all cores when absent.
    #[serde(default)]
    pub jobs: Option<usize>,
}

fn default_gap_mode() -> GapMode {
    GapMode::Measured
}

fn config_error(pointer: &str, message: impl Into<String>) -> Error {
    Error::Config {
        pointer: pointer.into(),
        message: message.into(),
    }
}

/// Parses JSON, reporting failures with the JSON pointer of the bad value.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut pointer = String::new();
        for seg in e.path().iter() {
            use serde_path_to_error::Segment;
            match seg {
                Segment::Seq { index } => pointer.push_str(&format!("/{index}")),
                Segment::Map { key } => pointer.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
                Segment::Enum { variant } => pointer.push_str(&format!("/{variant}")),
                Segment::Unknown => pointer.push_str("/?"),
            }
        }
        config_error(&pointer, e.into_inner().to_string())
    })
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: Self = parse_json(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file; a relative problem file path is taken relative
    /// to the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config = Self::from_json_str(&fs::read_to_string(path)?)?;
        if let ProblemSource::File(p) = &mut config.problem {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if !(s.delta > 0.0 && s.delta.is_finite()) {
            return Err(config_error("/schedule/delta", "delta must be finite and positive"));
        }
        if !(s.c > 0.0 && s.c.is_finite()) {
            return Err(config_error("/schedule/c", "c must be finite and positive"));
        }
        for (i, d) in self.sweep.delta.iter().enumerate() {
            if !(*d > 0.0 && d.is_finite()) {
                return Err(config_error(&format!("/sweep/delta/{i}"), "delta must be finite and positive"));
            }
        }
        for (i, n) in self.sweep.n_spins.iter().enumerate() {
            if *n == 0 || *n > MAX_DIAGONAL_SPINS {
                return Err(config_error(
                    &format!("/sweep/n_spins/{i}"),
                    format!("n_spins must lie in 1..={MAX_DIAGONAL_SPINS}"),
                ));
            }
        }
        for (i, g) in self.sweep.g0.iter().enumerate() {
            if !g.is_finite() {
                return Err(config_error(&format!("/sweep/g0/{i}"), "g0 must be finite"));
            }
        }
        if !self.sweep.n_spins.is_empty() && !matches!(self.problem, ProblemSource::Random(_)) {
            return Err(config_error("/sweep/n_spins", "sweeping n_spins needs a random problem source"));
        }
        if let ProblemSource::Random(r) = &self.problem {
            if let Err(m) = r.distribution.validate() {
                return Err(config_error("/problem/random/distribution", m));
            }
            if r.n_spins == 0 || r.n_spins > MAX_DIAGONAL_SPINS {
                return Err(config_error("/problem/random/n_spins", format!("n_spins must lie in 1..={MAX_DIAGONAL_SPINS}")));
            }
            if r.k_max == 0 {
                return Err(config_error("/problem/random/k_max", "k_max must be at least 1"));
            }
        }
        match self.t_max {
            TMaxPolicy::HorizonK(k) if !(k > 0.0 && k.is_finite()) => {
                return Err(config_error("/t_max/horizon_k", "K must be finite and positive"))
            }
            TMaxPolicy::Fixed(t) if !(t > 0.0 && t.is_finite()) => {
                return Err(config_error("/t_max/fixed", "T_max must be finite and positive"))
            }
            _ => {}
        }
        if self.integrator.records < 2 {
            return Err(config_error("/integrator/records", "need at least two record points"));
        }
        if self.bound.checkpoints + 2 > self.integrator.records {
            return Err(config_error("/bound/checkpoints", "more checkpoints than interior record points"));
        }
        if self.jobs == Some(0) {
            return Err(config_error("/jobs", "jobs must be at least 1"));
        }
        let points = self.sweep_points();
        let mut seen = std::collections::HashSet::new();
        for p in &points {
            if !seen.insert(content_hash(p)) {
                return Err(config_error("/sweep", "duplicate sweep point"));
            }
        }
        Ok(())
    }

    /// Cartesian product of the sweep axes, δ outermost.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let deltas = if self.sweep.delta.is_empty() {
            vec![self.schedule.delta]
        } else {
            self.sweep.delta.clone()
        };
        let sizes: Vec<Option<usize>> = if self.sweep.n_spins.is_empty() {
            vec![None]
        } else {
            self.sweep.n_spins.iter().map(|&n| Some(n)).collect()
        };
        let g0s: Vec<Option<f64>> = if self.sweep.g0.is_empty() {
            vec![None]
        } else {
            self.sweep.g0.iter().map(|&g| Some(g)).collect()
        };
        let mut out = Vec::new();
        for &delta in &deltas {
            for &n_spins in &sizes {
                for &g0 in &g0s {
                    out.push(SweepPoint { delta, n_spins, g0 });
                }
            }
        }
        out
    }

    pub fn load_problem(&self, n_override: Option<usize>) -> Result<IsingProblem> {
        let problem = match &self.problem {
            ProblemSource::Inline(p) => p.clone(),
            ProblemSource::File(path) => parse_json(&fs::read_to_string(path)?)?,
            ProblemSource::Random(r) => {
                let n = n_override.unwrap_or(r.n_spins);
                return generate_random_problem(r.seed, n, r.k_max.min(n), &r.distribution);
            }
        };
        Ok(problem)
    }

    /// Problem, schedule and T_max for one sweep point.
    pub fn resolve(&self, point: &SweepPoint) -> Result<ResolvedPoint> {
        let problem = self.load_problem(point.n_spins)?;
        let n = problem.n_spins();
        let g = self.schedule.g.resolve(n, point.g0);
        let schedule = Schedule::new(point.delta, self.schedule.c, n, g)?;
        let t_max = self.t_max.resolve(point.delta)?;
        Ok(ResolvedPoint {
            problem,
            schedule,
            t_max,
        })
    }

    /// The point built from the base values alone.
    pub fn base_point(&self) -> SweepPoint {
        SweepPoint {
            delta: self.schedule.delta,
            n_spins: None,
            g0: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub n_spins: Option<usize>,
    pub g0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPoint {
    pub problem: IsingProblem,
    pub schedule: Schedule,
    pub t_max: f64,
}

/// Record-point indices of `count` interior checkpoints.
pub fn checkpoint_indices(records: usize, count: usize) -> Vec<usize> {
    let last = records.saturating_sub(1);
    let mut idx: Vec<usize> = (1..=count).map(|k| k * last / (count + 1)).filter(|&i| i > 0 && i < last).collect();
    idx.dedup();
    idx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointResult {
    pub t: f64,
    pub excitation_norm: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Checks the finite-time inequality at interior record points.
pub fn finite_time_checks(
    evaluator: &BoundEvaluator,
    trajectory: &TrajectoryRecord,
    count: usize,
) -> Result<Vec<CheckpointResult>> {
    let idx = checkpoint_indices(trajectory.times.len(), count);
    let times: Vec<f64> = idx.iter().map(|&i| trajectory.times[i]).collect();
    let rhs: Vec<FiniteTimeBound> = evaluator.finite_time_bounds(&times)?;
    Ok(idx
        .iter()
        .zip(rhs)
        .map(|(&i, b)| CheckpointResult {
            t: b.t,
            excitation_norm: trajectory.excitation_norm[i],
            rhs: b.rhs,
            holds: trajectory.excitation_norm[i] <= b.rhs + EXCITATION_RESOLUTION,
        })
        .collect())
}

pub fn checkpoints_csv(checks: &[CheckpointResult]) -> String {
    let mut out = String::from("t,excitation_norm,rhs,holds\n");
    for c in checks {
        out.push_str(&format!("{:e},{:e},{:e},{}\n", c.t, c.excitation_norm, c.rhs, c.holds));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { reason: String },
}

/// Deterministic per-point summary written as result.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub point: SweepPoint,
    pub n_spins: usize,
    pub t_max: f64,
    pub status: RunStatus,
    pub certified: Option<bool>,
    pub verdict: Option<ComparisonVerdict>,
    pub checkpoint_violations: Option<usize>,
    pub max_norm_drift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHashes {
    pub problem: Option<String>,
    pub schedule: Option<String>,
    pub point: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub directory: String,
    pub inputs: InputHashes,
    pub result: PointResult,
    pub files: Vec<FileEntry>,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    /// The config as run; feeding it back reproduces the verdicts.
    pub config: ExperimentConfig,
    /// Files at the output root other than the manifest itself.
    pub files: Vec<FileEntry>,
    pub runs: Vec<RunEntry>,
    pub failures: usize,
    pub elapsed_seconds: f64,
}

impl RunManifest {
    pub fn success(&self) -> bool {
        self.failures == 0
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

const LAYOUT_README: &str = "\
# Output layout

`manifest.json` lists every file below with its SHA-256, the config that
produced them, per-point verdicts and wall-clock timings.

Each sweep point has its own directory named by the first 12 hex digits of
the hash of its resolved inputs:

| file | contents |
|------|----------|
| `problem.json` | Ising problem (`n_spins`, `terms` with `sites`, `j`) |
| `schedule.json` | schedule (`delta`, `c`, `n_spins`, `g`) |
| `certificate.json` | schedule-condition certificate |
| `spectrum.csv` | `t,gamma,gap` gap profile used by the bound integrands |
| `trajectory.csv` | `t,gamma,overlap_sq,excitation_norm,norm_drift` |
| `bound.json` | all bound terms, constants and quadrature diagnostics |
| `integrands.csv` | `t,gamma,gap,second_deriv_integrand,first_deriv_sq_integrand` |
| `checkpoints.csv` | `t,excitation_norm,rhs,holds` finite-time checks |
| `result.json` | status and verdict of the point |

Files after a failing stage are absent; `result.json` is always written.
All numbers are printed in shortest round-trip form, so reruns with the
same config and build give byte-identical CSV and JSON files (the manifest
differs only in timings).
";

fn point_directory(config: &ExperimentConfig, point: &SweepPoint) -> String {
    let key = content_hash(&(
        point,
        &config.problem,
        &config.schedule,
        &config.integrator,
        config.gap_mode,
        config.t_max,
        &config.bound,
    ));
    key[..12].to_string()
}

struct PointWriter {
    dir: PathBuf,
    name: String,
    files: Vec<FileEntry>,
}

impl PointWriter {
    fn write(&mut self, file: &str, contents: &str) -> Result<()> {
        fs::write(self.dir.join(file), contents)?;
        self.files.push(FileEntry {
            path: format!("{}/{file}", self.name),
            sha256: hex_digest(contents.as_bytes()),
        });
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, file: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(file, &text)
    }
}

struct Stages {
    certificate: Option<ConditionCertificate>,
    report: Option<BoundReport>,
    trajectory: Option<TrajectoryRecord>,
    checks: Option<Vec<CheckpointResult>>,
    verdict: Option<ComparisonVerdict>,
}

fn run_stages(
    config: &ExperimentConfig,
    resolved: &ResolvedPoint,
    writer: &mut PointWriter,
    cache: &ProfileCache,
    stages: &mut Stages,
) -> Result<()> {
    let ResolvedPoint {
        problem,
        schedule,
        t_max,
    } = resolved;
    let cert = certify(schedule, *t_max, config.bound.certify_grid_points, &config.bound.certify_options())?;
    writer.write_json("certificate.json", &cert)?;
    let passed = cert.passed;
    let reasons = cert.reasons();
    stages.certificate = Some(cert);
    if config.bound.tails && !passed {
        return Err(Error::Uncertified(reasons.join("; ")));
    }

    let options = config.bound.options(config.gap_mode);
    let evaluator = BoundEvaluator::with_cache(problem, schedule, *t_max, &options, Some(cache))?;
    if let Some(profile) = evaluator.profile() {
        let mut csv = String::from("t,gamma,gap\n");
        for k in 0..profile.times().len() {
            csv.push_str(&format!("{:e},{:e},{:e}\n", profile.times()[k], profile.gammas()[k], profile.gaps()[k]));
        }
        writer.write("spectrum.csv", &csv)?;
    }

    let trajectory = evolve(problem, schedule, &config.integrator.config(*t_max))?;
    writer.write("trajectory.csv", &trajectory.to_csv())?;
    let failed_at = trajectory.norm_failure_at;
    stages.trajectory = Some(trajectory);
    if let Some(t) = failed_at {
        return Err(Error::Validation(format!(
            "norm drift exceeded {:e} at t = {t}",
            config.integrator.norm_tolerance
        )));
    }

    let report = evaluate_bound_cached(problem, schedule, *t_max, &options, Some(cache))?;
    writer.write_json("bound.json", &report)?;
    writer.write("integrands.csv", &evaluator.integrand_csv(*t_max))?;
    let trajectory = stages.trajectory.as_ref().expect("set above");
    let checks = finite_time_checks(&evaluator, trajectory, config.bound.checkpoints)?;
    writer.write("checkpoints.csv", &checkpoints_csv(&checks))?;
    stages.verdict = Some(compare(&report, trajectory)?);
    stages.report = Some(report);
    stages.checks = Some(checks);
    Ok(())
}

fn run_point(config: &ExperimentConfig, point: &SweepPoint, root: &Path, cache: &ProfileCache) -> Result<RunEntry> {
    let started = Instant::now();
    let name = point_directory(config, point);
    let dir = root.join(&name);
    fs::create_dir_all(&dir)?;
    let mut writer = PointWriter {
        dir,
        name: name.clone(),
        files: Vec::new(),
    };
    let mut stages = Stages {
        certificate: None,
        report: None,
        trajectory: None,
        checks: None,
        verdict: None,
    };
    let mut inputs = InputHashes {
        problem: None,
        schedule: None,
        point: content_hash(point),
    };
    let outcome = config.resolve(point).and_then(|resolved| {
        inputs.problem = Some(content_hash(&resolved.problem));
        inputs.schedule = Some(content_hash(&resolved.schedule));
        writer.write_json("problem.json", &resolved.problem)?;
        writer.write_json("schedule.json", &resolved.schedule)?;
        run_stages(config, &resolved, &mut writer, cache, &mut stages).map(|_| resolved)
    });
    let status = match &outcome {
        Ok(_) => RunStatus::Completed,
        Err(e) => RunStatus::Failed { reason: e.to_string() },
    };
    let (n_spins, t_max) = match &outcome {
        Ok(r) => (r.problem.n_spins(), r.t_max),
        Err(_) => (
            point.n_spins.unwrap_or(0),
            config.t_max.resolve(point.delta).unwrap_or(f64::NAN),
        ),
    };
    let result = PointResult {
        point: *point,
        n_spins,
        t_max,
        status,
        certified: stages.certificate.as_ref().map(|c| c.passed),
        verdict: stages.verdict,
        checkpoint_violations: stages.checks.as_ref().map(|c| c.iter().filter(|x| !x.holds).count()),
        max_norm_drift: stages.trajectory.as_ref().map(TrajectoryRecord::max_norm_drift),
    };
    writer.write_json("result.json", &result)?;
    Ok(RunEntry {
        directory: name,
        inputs,
        result,
        files: writer.files,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Runs every sweep point and writes the manifest. Point failures are
/// recorded in the manifest; only I/O and config problems return `Err`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest> {
    config.validate()?;
    let root = config
        .output_dir
        .clone()
        .ok_or_else(|| config_error("/output_dir", "no output directory given"))?;
    fs::create_dir_all(&root)?;
    let started = Instant::now();
    let points = config.sweep_points();
    let cache = ProfileCache::new();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = config.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().map_err(|e| Error::Internal(e.to_string()))?;
    let runs: Vec<RunEntry> = pool.install(|| {
        points
            .par_iter()
            .map(|p| run_point(config, p, &root, &cache))
            .collect::<Result<Vec<_>>>()
    })?;

    fs::write(root.join("README.md"), LAYOUT_README)?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: content_hash(config),
        config: config.clone(),
        files: vec![FileEntry {
            path: "README.md".into(),
            sha256: hex_digest(LAYOUT_README.as_bytes()),
        }],
        failures: runs
            .iter()
            .filter(|r| matches!(r.result.status, RunStatus::Failed { .. }))
            .count(),
        runs,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(root.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

/// Reads a manifest written by [`run_experiment`].
pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    parse_json(&fs::read_to_string(path)?)
}

/// Ensemble for the gap-constant fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitGapConfig {
    pub seed: u64,
    pub sizes: Vec<usize>,
    #[serde(default = "default_instances")]
    pub instances_per_size: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default)]
    pub distribution: CouplingDistribution,
    #[serde(default = "default_gamma_min")]
    pub gamma_min: f64,
    #[serde(default = "default_gamma_max")]
    pub gamma_max: f64,
    #[serde(default = "default_gamma_points")]
    pub gamma_points: usize,
}

fn default_instances() -> usize {
    5
}

fn default_k_max() -> usize {
    2
}

fn default_gamma_min() -> f64 {
    0.01
}

fn default_gamma_max() -> f64 {
    2.0
}

fn default_gamma_points() -> usize {
    60
}

impl FitGapConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let c: Self = parse_json(text)?;
        if c.sizes.is_empty() {
            return Err(config_error("/sizes", "at least one size is needed"));
        }
        if !(c.gamma_min > 0.0 && c.gamma_max > c.gamma_min) {
            return Err(config_error("/gamma_min", "need 0 < gamma_min < gamma_max"));
        }
        if c.gamma_points < 2 {
            return Err(config_error("/gamma_points", "need at least two Γ points"));
        }
        if c.instances_per_size == 0 {
            return Err(config_error("/instances_per_size", "need at least one instance per size"));
        }
        Ok(c)
    }

    /// Instances with seeds `seed + 1000·N + i`.
    pub fn ensemble(&self) -> Result<Vec<IsingProblem>> {
        let mut out = Vec::new();
        for &n in &self.sizes {
            for i in 0..self.instances_per_size {
                let seed = self.seed.wrapping_add(1000 * n as u64 + i as u64);
                out.push(generate_random_problem(seed, n, self.k_max.min(n), &self.distribution)?);
            }
        }
        Ok(out)
    }

    pub fn gamma_grid(&self) -> Vec<f64> {
        log_spaced(self.gamma_min, self.gamma_max, self.gamma_points)
    }

    pub fn run(&self) -> Result<GapBoundFit> {
        fit_gap_constants(&self.ensemble()?, &self.gamma_grid())
    }
}

/// Sampling request for the s(t) ↔ Γ(t̃) correspondence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReparamConfig {
    pub s_function: SFunction,
    pub t_max: f64,
    #[serde(default = "default_records")]
    pub points: usize,
}

impl ReparamConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let c: Self = parse_json(text)?;
        if !(c.t_max > 0.0 && c.t_max.is_finite()) {
            return Err(config_error("/t_max", "t_max must be finite and positive"));
        }
        if c.points < 2 {
            return Err(config_error("/points", "need at least two points"));
        }
        if let Err(e) = c.s_function.validate() {
            return Err(config_error("/s_function", e.to_string()));
        }
        Ok(c)
    }

    pub fn run(&self) -> Result<ReparamMap> {
        ReparamMap::build(&self.s_function, self.t_max, self.points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "problem": {"inline": {"n_spins": 1, "terms": [{"sites": [0], "j": 1.0}]}},
        "schedule": {"delta": 0.01, "g": {"kind": "constant", "g0": 0.125}},
        "integrator": {"step": {"fixed": {"dt": 0.2}}, "records": 200}
    }"#;

    #[test]
    fn random_problem_is_deterministic() {
        let d = CouplingDistribution::default();
        let a = generate_random_problem(42, 3, 2, &d).unwrap();
        assert_eq!(a, generate_random_problem(42, 3, 2, &d).unwrap());
        assert_eq!(a.terms().len(), 6);
        let single = generate_random_problem(7, 1, 1, &d).unwrap();
        assert_eq!(single.terms().len(), 1);
        assert_eq!(single.terms()[0].sites, vec![0]);
        let g = CouplingDistribution::Gaussian {
            coupling_std: 1.0,
            field_std: 0.3,
        };
        assert_eq!(generate_random_problem(5, 4, 3, &g).unwrap().terms().len(), 14);
    }

    #[test]
    fn degenerate_distribution_exhausts_retries() {
        let d = CouplingDistribution::Uniform {
            coupling: 0.0,
            field: 1e-9,
        };
        assert!(matches!(
            generate_random_problem(1, 3, 2, &d),
            Err(Error::RetriesExhausted { retries: 100 })
        ));
    }

    #[test]
    fn config_errors_carry_pointers() {
        let bad = BASE.replace("\"delta\": 0.01", "\"delta\": \"x\"");
        match ExperimentConfig::from_json_str(&bad) {
            Err(Error::Config { pointer, .. }) => assert_eq!(pointer, "/schedule/delta"),
            other => panic!("{other:?}"),
        }
        let neg = BASE.replace("\"delta\": 0.01", "\"delta\": -1");
        match ExperimentConfig::from_json_str(&neg) {
            Err(Error::Config { pointer, .. }) => assert_eq!(pointer, "/schedule/delta"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sweep_product_and_resolution() {
        let mut c = ExperimentConfig::from_json_str(BASE).unwrap();
        c.sweep.delta = vec![1e-2, 1e-3];
        c.sweep.g0 = vec![0.1, 0.2, 0.3];
        let points = c.sweep_points();
        assert_eq!(points.len(), 6);
        let r = c.resolve(&points[5]).unwrap();
        assert_eq!(r.schedule.delta(), 1e-3);
        assert_eq!(r.schedule.g_at(0.0).value, 0.3);
        assert_eq!(r.t_max, 1e4);
        c.sweep.n_spins = vec![2];
        assert!(matches!(c.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn checkpoints_are_interior() {
        let idx = checkpoint_indices(1000, 20);
        assert_eq!(idx.len(), 20);
        assert!(idx.iter().all(|&i| i > 0 && i < 999));
    }
}
