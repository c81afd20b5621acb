use std::path::Path;
use std::process::{Command, Output};

use a2l_core::harness::{execute, verify, ExperimentConfig, GameSource, Mode, SuiteReport, VerifyOptions};

fn a2l(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_a2l")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn run_gradient_matches_the_library_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let gen = a2l(&["gen", "game", "--kind", "random_zs", "--n", "3", "--d", "4", "--seed", "9", "--out", "g.json"], dir.path());
    assert!(gen.status.success(), "{}", stderr(&gen));
    let run = a2l(&["run-gradient", "--game", "g.json", "--seeds", "0..3", "--rounds", "400", "--out", "o"], dir.path());
    assert!(run.status.success(), "{}", stderr(&run));

    let mut c = ExperimentConfig::new(Mode::Gradient);
    c.game = Some(GameSource::File(dir.path().join("g.json")));
    c.seeds = vec![0, 1, 2];
    c.rounds = 400;
    let (_, files) = execute(&c).unwrap();
    assert_eq!(files.len(), 3);
    for (name, body) in files {
        assert_eq!(std::fs::read_to_string(dir.path().join("o").join(name)).unwrap(), body);
    }
}

#[test]
fn config_file_and_seed_list_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"mode": "fisher", "market": {"random": {"agents": 2, "goods": 3}}, "rounds": 50, "out_dir": "f"}"#;
    std::fs::write(dir.path().join("c.json"), config).unwrap();
    let ok = a2l(&["run-fisher", "--config", "c.json", "--seeds", "4,7"], dir.path());
    assert!(ok.status.success(), "{}", stderr(&ok));
    assert!(dir.path().join("f/fisher_seed4.csv").is_file());
    assert!(dir.path().join("f/fisher_seed7.csv").is_file());

    let wrong = a2l(&["run-gradient", "--config", "c.json"], dir.path());
    assert_eq!(wrong.status.code(), Some(2));
    assert!(stderr(&wrong).contains("fisher config"));
}

#[test]
fn invalid_config_exits_with_the_issue_list_and_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = a2l(&["run-bandit", "--game", "nope.json", "--epochs", "0", "--out", "o"], dir.path());
    assert_eq!(run.status.code(), Some(2));
    let err = stderr(&run);
    assert!(err.contains("nope.json") && err.contains("epochs"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn verify_prints_the_library_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = a2l(&["verify", "contrast"], dir.path());
    assert!(out.status.success());
    let printed: SuiteReport = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(printed, verify("contrast", &VerifyOptions::default()).unwrap());

    let list = a2l(&["verify", "--list"], dir.path());
    assert!(stdout(&list).lines().any(|l| l == "gap_regret_identity"));

    let unknown = a2l(&["verify", "nonexistent"], dir.path());
    assert_eq!(unknown.status.code(), Some(2));
    assert!(stderr(&unknown).contains("average_equivalence"));
}

#[test]
fn fit_rate_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (1..=200).map(|t| format!("{t},{}\n", 3.0 / t as f64)).collect();
    std::fs::write(dir.path().join("g.csv"), format!("t,tgap_last\n{rows}")).unwrap();
    let out = a2l(&["fit-rate", "--csv", "g.csv", "--from", "10", "--to", "200"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let slope = report["mean_curve"]["slope"].as_f64().unwrap();
    assert!((slope + 1.0).abs() < 1e-6);
}

#[test]
fn bad_seed_ranges_are_rejected_by_the_parser() {
    let dir = tempfile::tempdir().unwrap();
    let out = a2l(&["run-gradient", "--seeds", "5..5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("empty seed range"));
}
