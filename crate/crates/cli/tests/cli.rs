use nonlocal_ql_cli::{run_scenario, validate_config, CliError, Status};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

const SOLVE: &str = r#"
scenario = "solve"

[measure]
family = "fractional"
alpha = 1.0

[jump]
family = "identity"

[problem]
dim = 1
n = 41
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn issue_paths(err: CliError) -> Vec<String> {
    match err {
        CliError::Invalid(issues) => issues.into_iter().map(|i| i.path).collect(),
        other => panic!("expected validation error, got {other}"),
    }
}

#[test]
fn minimal_solve_config_validates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = validate_config(&write(dir.path(), "a.toml", SOLVE)).unwrap();
    assert_eq!(cfg.scenario.name(), "solve");
}

#[test]
fn alpha_out_of_range_names_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = SOLVE.replace("alpha = 1.0", "alpha = 2.5");
    let err = validate_config(&write(dir.path(), "a.toml", &text)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("measure.alpha") && msg.contains("(0,2)"), "{msg}");
}

#[test]
fn missing_jump_table_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = SOLVE.replace("[jump]\nfamily = \"identity\"\n", "");
    let err = validate_config(&write(dir.path(), "a.toml", &text)).unwrap_err();
    assert_eq!(issue_paths(err), vec!["jump".to_string()]);
}

#[test]
fn all_violations_reported_together() {
    let dir = tempfile::tempdir().unwrap();
    let text = SOLVE.replace("alpha = 1.0", "alpha = -1.0\ndelta = 2.0").replace("n = 41", "n = 3");
    let paths = issue_paths(validate_config(&write(dir.path(), "a.toml", &text)).unwrap_err());
    assert_eq!(paths, vec!["measure.alpha", "measure.delta", "problem.n"]);
}

#[test]
fn mc_check_with_zero_samples_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let text = SOLVE.replace("scenario = \"solve\"", "scenario = \"mc-check\"") + "\n[mc]\nn_samples = 0\n";
    let cfg = write(dir.path(), "a.toml", &text);
    let out = dir.path().join("out");
    let err = run_scenario(&cfg, Some(&out), None).unwrap_err();
    assert_eq!(issue_paths(err), vec!["mc.n_samples".to_string()]);
    assert!(!out.exists());
}

#[test]
fn unknown_key_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = SOLVE.replace("alpha = 1.0", "alpah = 1.0");
    assert!(matches!(
        validate_config(&write(dir.path(), "a.toml", &text)),
        Err(CliError::Parse { .. })
    ));
}

#[test]
fn zero_rhs_gives_zero_field() {
    let dir = tempfile::tempdir().unwrap();
    let text = SOLVE.replace("n = 41", "n = 41\nrhs = \"zero\"");
    let cfg = write(dir.path(), "a.toml", &text);
    let out = dir.path().join("out");
    let summary = run_scenario(&cfg, Some(&out), None).unwrap();
    assert_eq!(summary.status, Status::Success);
    let csv = fs::read_to_string(out.join("solution.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x1,value"));
    assert_eq!(lines.clone().count(), 41);
    assert!(lines.all(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap() == 0.0));
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("solution.csv") && manifest.contains("sha256"));
}

#[test]
fn runtime_failure_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let text = SOLVE.replace("n = 41", "n = 41\nrhs_file = \"missing.csv\"");
    let cfg = write(dir.path(), "a.toml", &text);
    let out = dir.path().join("out");
    assert!(matches!(run_scenario(&cfg, Some(&out), None), Err(CliError::Read { .. })));
    assert!(!out.exists());
    let leftovers = fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(leftovers, 1);
}

#[test]
fn rhs_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let first = run_scenario(&write(dir.path(), "a.toml", SOLVE), Some(&dir.path().join("a")), None).unwrap();
    fs::copy(first.output_dir.join("solution.csv"), dir.path().join("f.csv")).unwrap();
    let text = SOLVE.replace("n = 41", "n = 41\nrhs_file = \"f.csv\"");
    let second = run_scenario(&write(dir.path(), "b.toml", &text), Some(&dir.path().join("b")), None).unwrap();
    assert_eq!(second.status, Status::Success);
    let manifest = fs::read_to_string(second.output_dir.join("manifest.toml")).unwrap();
    assert!(manifest.contains("f.csv"));
}

#[test]
fn mc_check_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let text = SOLVE.replace("scenario = \"solve\"", "scenario = \"mc-check\"")
        + "\n[mc]\nn_samples = 400\nmargin = 1.0\npoints = [[0.0], [0.5]]\n";
    let cfg = write(dir.path(), "a.toml", &text);
    let a = run_scenario(&cfg, Some(&dir.path().join("a")), Some(11)).unwrap();
    let b = run_scenario(&cfg, Some(&dir.path().join("b")), Some(11)).unwrap();
    let c = run_scenario(&cfg, Some(&dir.path().join("c")), Some(12)).unwrap();
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    for f in ["mc.csv", "solution.csv"] {
        assert_eq!(read(&a.output_dir, f), read(&b.output_dir, f));
    }
    assert_ne!(read(&a.output_dir, "mc.csv"), read(&c.output_dir, "mc.csv"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_nonlocal-ql");
    let dir = tempfile::tempdir().unwrap();
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();

    assert_eq!(status(&["list-presets"]), Some(0));
    let good = write(dir.path(), "good.toml", SOLVE);
    assert_eq!(status(&["validate", good.to_str().unwrap()]), Some(0));
    let bad = write(dir.path(), "bad.toml", &SOLVE.replace("alpha = 1.0", "alpha = 2.5"));
    assert_eq!(status(&["validate", bad.to_str().unwrap()]), Some(1));

    // one iteration cannot converge: a soft failure
    let capped = write(dir.path(), "capped.toml", &SOLVE.replace("n = 41", "n = 41\nmax_iter = 1"));
    let out = dir.path().join("capped_out");
    assert_eq!(
        status(&["run", capped.to_str().unwrap(), "--output", out.to_str().unwrap()]),
        Some(2)
    );
    assert!(out.join("solution.csv").exists());
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("status = 2"));
}

#[test]
fn bundled_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            validate_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert_eq!(n, 6);
}
