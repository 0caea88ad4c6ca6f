use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use qabound::bound::{evaluate_bound, BoundEvaluator, GapMode};
use qabound::dynamics::evolve;
use qabound::experiment::{
    load_manifest, run_experiment, ExperimentConfig, FitGapConfig, ProblemSource, ReparamConfig, RunStatus,
    TMaxPolicy, MANIFEST_FILE,
};
use qabound::schedule::certify;

#[derive(Parser)]
#[command(name = "qabound", version, about = "Transverse-field Ising annealing bound laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the schedule conditions for the config's base point.
    Certify(Common),
    /// Gap profile along the schedule (CSV).
    Spectrum(Common),
    /// Integrate the Schrödinger equation (CSV).
    Evolve(Common),
    /// Evaluate every bound term (JSON).
    Bound(Common),
    /// Full pipeline over all sweep points; accepts a config or a manifest.
    Run(Common),
    /// Fit A = a√N e^{−bN} on a random ensemble.
    FitGap(Common),
    /// Tabulate t, s, t̃ and Γ for an s-function (CSV).
    Reparam(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum GapModeArg {
    Measured,
    Bounded,
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (stdout when absent, except for `run`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the random-problem or ensemble seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    gap_mode: Option<GapModeArg>,
    /// T_max = K/δ.
    #[arg(long)]
    t_max_k: Option<f64>,
}

impl Common {
    fn experiment(&self) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(&self.config).with_context(|| format!("reading {}", self.config.display()))?;
        let value: serde_json::Value = serde_json::from_str(&text).context("config is not valid JSON")?;
        let mut config = if value.get("runs").is_some() && value.get("config").is_some() {
            load_manifest(&self.config)?.config
        } else {
            ExperimentConfig::load(&self.config)?
        };
        if let Some(seed) = self.seed {
            match &mut config.problem {
                ProblemSource::Random(r) => r.seed = seed,
                _ => bail!("--seed needs a random problem source"),
            }
        }
        if let Some(j) = self.jobs {
            config.jobs = Some(j);
        }
        if let Some(m) = self.gap_mode {
            config.gap_mode = match m {
                GapModeArg::Measured => GapMode::Measured,
                GapModeArg::Bounded => GapMode::Bounded,
            };
        }
        if let Some(k) = self.t_max_k {
            config.t_max = TMaxPolicy::HorizonK(k);
        }
        if let Some(out) = &self.out {
            config.output_dir = Some(out.clone());
        }
        config.validate()?;
        Ok(config)
    }

    fn emit(&self, file: &str, contents: &str) -> Result<()> {
        match &self.out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let path = dir.join(file);
                fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
                eprintln!("wrote {}", path.display());
            }
            None => print!("{contents}"),
        }
        Ok(())
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Certify(c) => {
            let config = c.experiment()?;
            let p = config.resolve(&config.base_point())?;
            let cert = certify(
                &p.schedule,
                p.t_max,
                config.bound.certify_grid_points,
                &config.bound.certify_options(),
            )?;
            c.emit("certificate.json", &pretty(&cert)?)?;
            for reason in cert.reasons() {
                eprintln!("failed: {reason}");
            }
            Ok(if cert.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Spectrum(c) => {
            let config = c.experiment()?;
            let p = config.resolve(&config.base_point())?;
            let mut options = config.bound.options(GapMode::Measured);
            options.tails = false;
            let eval = BoundEvaluator::new(&p.problem, &p.schedule, p.t_max, &options)?;
            let profile = eval.profile().expect("measured mode builds a profile");
            let mut csv = String::from("t,gamma,gap\n");
            for k in 0..profile.times().len() {
                csv.push_str(&format!("{:e},{:e},{:e}\n", profile.times()[k], profile.gammas()[k], profile.gaps()[k]));
            }
            let (t_min, gap_min) = profile.minimum();
            eprintln!("minimum gap {gap_min:e} at t = {t_min:e}");
            c.emit("spectrum.csv", &csv)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Evolve(c) => {
            let config = c.experiment()?;
            let p = config.resolve(&config.base_point())?;
            let traj = evolve(&p.problem, &p.schedule, &config.integrator.config(p.t_max))?;
            eprintln!(
                "final excitation {:e}, overlap² {:.10}, max norm drift {:e}",
                traj.final_excitation,
                traj.final_overlap_sq,
                traj.max_norm_drift()
            );
            c.emit("trajectory.csv", &traj.to_csv())?;
            Ok(if traj.failed() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::Bound(c) => {
            let config = c.experiment()?;
            let p = config.resolve(&config.base_point())?;
            let report = evaluate_bound(&p.problem, &p.schedule, p.t_max, &config.bound.options(config.gap_mode))?;
            eprintln!("total {:e}", report.total);
            c.emit("bound.json", &pretty(&report)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Run(c) => {
            let config = c.experiment()?;
            if config.output_dir.is_none() {
                bail!("`run` needs --out or output_dir in the config");
            }
            let manifest = run_experiment(&config)?;
            for r in &manifest.runs {
                match (&r.result.status, &r.result.verdict) {
                    (RunStatus::Completed, Some(v)) => eprintln!(
                        "{}  δ={:e} N={}  excitation {:e} ≤ {:e}: {}",
                        r.directory,
                        r.result.point.delta,
                        r.result.n_spins,
                        v.final_excitation,
                        v.total,
                        if v.satisfied { "satisfied" } else { "VIOLATED" }
                    ),
                    (RunStatus::Failed { reason }, _) => eprintln!("{}  failed: {reason}", r.directory),
                    _ => {}
                }
            }
            let root = config.output_dir.as_ref().expect("checked above");
            eprintln!("manifest {}", root.join(MANIFEST_FILE).display());
            Ok(if manifest.success() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::FitGap(c) => {
            let mut config = FitGapConfig::from_json_str(&read(&c.config)?)?;
            if let Some(seed) = c.seed {
                config.seed = seed;
            }
            let fit = config.run()?;
            eprintln!("a = {:e}, b = {:e}", fit.a_fit, fit.b_fit);
            c.emit("gap_fit.json", &pretty(&fit)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Reparam(c) => {
            let config = ReparamConfig::from_json_str(&read(&c.config)?)?;
            c.emit("reparam.csv", &config.run()?.to_csv())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
