use std::path::Path;

use a2l_core::game::{GameKind, GraphSpec};
use a2l_core::harness::{
    config_hash, execute, fit_rate_csv, run, verify, ExperimentConfig, GameSource, GenerateSpec, HarnessError,
    MarketSource, Mode, RandomMarketSpec, RunSummary, SCHEMA_VERSION,
};

fn gradient_config(out: &Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(Mode::Gradient);
    c.game = Some(GameSource::Generate(GenerateSpec {
        kind: GameKind::RandomZeroSum,
        n: 3,
        d: 4,
        graph: GraphSpec::Complete,
        seed: None,
    }));
    c.out_dir = out.to_path_buf();
    c
}

fn read_summary(dir: &Path) -> RunSummary {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn gradient_run_writes_one_csv_per_seed_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = gradient_config(dir.path());
    c.seeds = (0..20).collect();
    c.rounds = 500;
    c.certified = true;
    let summary = run(&c).unwrap();
    for seed in 0..20 {
        assert!(dir.path().join(format!("gradient_seed{seed}.csv")).is_file());
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 21);
    let on_disk = read_summary(dir.path());
    assert_eq!(on_disk, summary);
    assert_eq!(summary.schema_version, SCHEMA_VERSION);
    assert_eq!(summary.prng, "ChaCha8Rng");
    assert_eq!(summary.config_hash, config_hash(&c));
    assert_eq!(summary.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), (0..20).collect::<Vec<_>>());
    let bound = &summary.checks["gap_bound"];
    assert_eq!((bound.runs, bound.failures), (20, 0));
    assert!(bound.min_slack >= 0.0);
    assert!(summary.all_checks_pass);
}

#[test]
fn rerun_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut c = gradient_config(a.path());
    c.seeds = vec![3, 1, 2];
    run(&c).unwrap();
    c.out_dir = b.path().to_path_buf();
    run(&c).unwrap();
    for seed in [1, 2, 3] {
        let name = format!("gradient_seed{seed}.csv");
        assert_eq!(std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap());
    }
}

#[test]
fn certified_mode_refuses_large_step_sizes_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut c = gradient_config(&out);
    c.eta = Some(0.5);
    c.certified = true;
    match run(&c) {
        Err(HarnessError::Config(issues)) => {
            assert!(issues.iter().any(|i| i.contains("eta_bound") && i.contains("1/(2(n-1))")), "{issues:?}");
        }
        other => panic!("expected a config error, got {other:?}"),
    }
    assert!(!out.exists());
    c.certified = false;
    assert!(run(&c).is_ok());
}

#[test]
fn validation_reports_every_problem_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut c = ExperimentConfig::new(Mode::Gradient);
    c.game = Some(GameSource::File(dir.path().join("missing.json")));
    c.market = Some(MarketSource::Random(RandomMarketSpec { agents: 2, goods: 2, seed: None }));
    c.seeds = vec![1, 1];
    c.eta = Some(-1.0);
    c.rounds = 0;
    c.out_dir = out.clone();
    let Err(HarnessError::Config(issues)) = run(&c) else { panic!("expected a config error") };
    assert_eq!(issues.len(), 5, "{issues:?}");
    assert!(!out.exists());
}

#[test]
fn unknown_config_fields_are_rejected() {
    let err = ExperimentConfig::from_json(r#"{"mode": "gradient", "roundz": 10}"#).unwrap_err();
    assert!(err.to_string().contains("roundz"));
}

#[test]
fn config_json_round_trips() {
    let c = gradient_config(Path::new("out"));
    let text = serde_json::to_string(&c).unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
}

#[test]
fn fitted_rate_of_a2l_omwu_is_at_least_linear() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = gradient_config(dir.path());
    c.rounds = 10_000;
    c.seeds = vec![0, 1, 2];
    run(&c).unwrap();
    let paths: Vec<_> = [0, 1, 2].iter().map(|s| dir.path().join(format!("gradient_seed{s}.csv"))).collect();
    let report = fit_rate_csv(&paths, "tgap_last", 100.0, 10_000.0).unwrap();
    assert!(report.mean_curve.slope <= -0.9, "{report:?}");
    assert_eq!(report.mean_curve.points, 9901);
}

#[test]
fn fit_rate_rejects_missing_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    std::fs::write(&path, "t,g\n1,1\n").unwrap();
    assert!(matches!(fit_rate_csv(&[path], "tgap_last", 1.0, 10.0), Err(HarnessError::Csv(_))));
}

#[test]
fn bandit_and_fisher_runs_pass_their_checks() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = ExperimentConfig::new(Mode::Bandit);
    b.game = Some(GameSource::Generate(GenerateSpec {
        kind: GameKind::RandomZeroSum,
        n: 2,
        d: 3,
        graph: GraphSpec::Complete,
        seed: Some(4),
    }));
    b.epochs = 6;
    b.certified = true;
    b.out_dir = dir.path().join("bandit");
    let summary = run(&b).unwrap();
    assert!(summary.all_checks_pass);
    assert!(summary.checks.contains_key("regret_with_error"));

    let mut f = ExperimentConfig::new(Mode::Fisher);
    f.market = Some(MarketSource::Random(RandomMarketSpec { agents: 3, goods: 2, seed: None }));
    f.rounds = 100;
    f.seeds = vec![0, 1];
    f.out_dir = dir.path().join("fisher");
    let summary = run(&f).unwrap();
    assert!(summary.all_checks_pass);
    assert!(summary.checks.contains_key("average_price_equivalence"));
}

#[test]
fn execute_matches_what_run_writes() {
    let dir = tempfile::tempdir().unwrap();
    let c = gradient_config(dir.path());
    let (summary, files) = execute(&c).unwrap();
    assert_eq!(run(&c).unwrap(), summary);
    for (name, body) in files {
        assert_eq!(std::fs::read_to_string(dir.path().join(name)).unwrap(), body);
    }
}

#[test]
fn unknown_suite_lists_the_registered_ones() {
    let err = verify("nonexistent", &Default::default()).unwrap_err();
    let HarnessError::UnknownSuite { available, .. } = &err else { panic!("{err}") };
    assert!(available.iter().any(|s| s == "average_equivalence"));
    assert!(err.to_string().contains("gap_regret_identity"));
}
