mod common;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use qabound::experiment::{
    generate_random_problem, load_manifest, run_experiment, CouplingDistribution, ExperimentConfig, RunStatus,
    MANIFEST_FILE,
};
use qabound::provenance::hex_digest;
use qabound::Error;

const SINGLE: &str = r#"{
    "problem": {"inline": {"n_spins": 1, "terms": [{"sites": [0], "j": 1.0}]}},
    "schedule": {"delta": 0.001, "g": {"kind": "constant", "g0": 0.125}},
    "integrator": {"step": {"fixed": {"dt": 0.1}}, "records": 400}
}"#;

fn config(text: &str, out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::from_json_str(text).unwrap();
    c.output_dir = Some(out.to_path_buf());
    c
}

fn files_under(root: &Path) -> Vec<String> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            for f in fs::read_dir(&path).unwrap() {
                out.push(f.unwrap().path().strip_prefix(root).unwrap().to_string_lossy().into_owned());
            }
        } else {
            out.push(path.strip_prefix(root).unwrap().to_string_lossy().into_owned());
        }
    }
    out.sort();
    out
}

#[test]
fn single_spin_run_is_satisfied_and_manifest_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_experiment(&config(SINGLE, dir.path())).unwrap();
    assert!(manifest.success());
    assert_eq!(manifest.runs.len(), 1);
    let run = &manifest.runs[0];
    assert_eq!(run.result.status, RunStatus::Completed);
    assert!(run.result.verdict.as_ref().unwrap().satisfied);
    assert_eq!(run.result.checkpoint_violations, Some(0));

    let mut referenced: HashMap<String, usize> = HashMap::new();
    for f in manifest.files.iter().chain(manifest.runs.iter().flat_map(|r| r.files.iter())) {
        *referenced.entry(f.path.clone()).or_default() += 1;
        let bytes = fs::read(dir.path().join(&f.path)).unwrap();
        assert_eq!(hex_digest(&bytes), f.sha256, "{}", f.path);
    }
    for file in files_under(dir.path()) {
        if file == MANIFEST_FILE {
            continue;
        }
        assert_eq!(referenced.get(&file), Some(&1), "{file}");
    }
}

#[test]
fn reruns_are_byte_identical_and_manifest_reproduces_verdicts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let text = SINGLE.replace("\"delta\": 0.001", "\"delta\": 0.01");
    let first = run_experiment(&config(&text, a.path())).unwrap();
    let loaded = load_manifest(&a.path().join(MANIFEST_FILE)).unwrap();
    let mut again = loaded.config.clone();
    again.output_dir = Some(b.path().to_path_buf());
    let second = run_experiment(&again).unwrap();
    for file in files_under(a.path()) {
        if file == MANIFEST_FILE {
            continue;
        }
        assert_eq!(fs::read(a.path().join(&file)).unwrap(), fs::read(b.path().join(&file)).unwrap(), "{file}");
    }
    let verdicts = |m: &qabound::experiment::RunManifest| m.runs.iter().map(|r| r.result.clone()).collect::<Vec<_>>();
    assert_eq!(verdicts(&first), verdicts(&second));
}

#[test]
fn delta_sweep_excitation_decreases() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
        "problem": {"random": {"seed": 7, "n_spins": 2, "k_max": 2}},
        "schedule": {"delta": 0.01, "g": {"kind": "constant", "g0": 0.125}},
        "integrator": {"step": {"fixed": {"dt": 0.2}}, "records": 200},
        "sweep": {"delta": [0.01, 0.001, 0.0001]}
    }"#;
    let manifest = run_experiment(&config(text, dir.path())).unwrap();
    assert!(manifest.success());
    let fe: Vec<f64> = manifest.runs.iter().map(|r| r.result.verdict.as_ref().unwrap().final_excitation).collect();
    assert_eq!(fe.len(), 3);
    assert!(fe[1] <= fe[0] && fe[2] <= fe[1], "{fe:?}");
}

#[test]
fn strict_violation_with_tails_is_a_failed_run() {
    let dir = tempfile::tempdir().unwrap();
    let text = SINGLE.replace("\"g0\": 0.125", "\"g0\": 1.0");
    let manifest = run_experiment(&config(&text, dir.path())).unwrap();
    assert!(!manifest.success());
    match &manifest.runs[0].result.status {
        RunStatus::Failed { reason } => assert!(reason.contains("strict"), "{reason}"),
        other => panic!("{other:?}"),
    }
    assert_eq!(manifest.runs[0].result.certified, Some(false));
}

#[test]
fn problem_file_is_resolved_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.json"), r#"{"n_spins": 2, "terms": [{"sites": [0], "j": 0.4}, {"sites": [0, 1], "j": -1.0}]}"#).unwrap();
    let text = r#"{"problem": {"file": "p.json"}, "schedule": {"delta": 0.01, "g": {"kind": "quarter_inverse_n"}}}"#;
    fs::write(dir.path().join("c.json"), text).unwrap();
    let c = ExperimentConfig::load(&dir.path().join("c.json")).unwrap();
    let r = c.resolve(&c.base_point()).unwrap();
    assert_eq!(r.problem.n_spins(), 2);
    assert_eq!(r.schedule.g_at(0.0).value, 0.125);
}

#[test]
fn config_errors_point_at_the_offending_value() {
    let cases = [
        (SINGLE.replace("\"records\": 400", "\"records\": 400, \"bogus\": 1"), "/integrator"),
        (SINGLE.replace("\"g0\": 0.125", "\"g0\": \"x\""), "/schedule/g"),
        (SINGLE.replace("\"j\": 1.0", "\"j\": 1.0, \"sites\": [0]"), "/problem/inline/terms/0"),
    ];
    for (text, prefix) in cases {
        match ExperimentConfig::from_json_str(&text) {
            Err(Error::Config { pointer, .. }) => assert!(pointer.starts_with(prefix), "{pointer} vs {prefix}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }
}

#[test]
fn generated_instances_pass_the_dense_screen() {
    let d = CouplingDistribution::default();
    for seed in 0..100 {
        let p = generate_random_problem(seed, 4, 2, &d).unwrap();
        let h = common::ising_matrix(&p);
        let mut diag: Vec<f64> = (0..h.len()).map(|k| h[k][k]).collect();
        diag.sort_by(f64::total_cmp);
        assert!(diag[1] - diag[0] >= 1e-6, "seed {seed}");
        assert_eq!(p, generate_random_problem(seed, 4, 2, &d).unwrap());
    }
}
