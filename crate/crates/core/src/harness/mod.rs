//! Experiment plumbing: JSON configs, seeded runs with CSV output and a JSON
//! summary, log-log rate fits, and the named verification suites.

mod config;
mod rate;
pub mod suites;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bandit::{
    recovery_error_audit, regret_with_error_audit, run_bandit_with_agents, BanditError, BanditTrajectory,
};
use crate::dynamics::{run_full_feedback, DynamicsError, PlayerSpec, Trajectory};
use crate::fisher::{run_a2l_prd, run_prd, FisherError, FisherMarket, MarketRun};
use crate::game::{GameError, PolymatrixGame};
use crate::rng::PRNG_NAME;

pub use config::{
    ExperimentConfig, FisherDynamics, GameSource, GenerateSpec, MarketSource, Mode, RandomMarketSpec,
    TheoryCondition,
};
pub use rate::{fit_rate, fit_rate_csv, CsvRateReport, RateFit};
pub use suites::{suite_names, verify, verify_all, SuiteCheck, SuiteReport, VerifyOptions};

pub const SCHEMA_VERSION: u32 = 1;

/// Slack below which an inequality check fails.
pub const CHECK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),
    #[error("unknown suite `{name}`; available: {}", .available.join(", "))]
    UnknownSuite { name: String, available: Vec<String> },
    #[error("rate fit needs at least 10 positive points in the window, got {0}")]
    TooFewPoints(usize),
    #[error("{0}")]
    Csv(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Fisher(#[from] FisherError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// An inequality checked on one run: `slack` is bound minus observed value,
/// minimized over the trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub slack: f64,
}

impl Check {
    pub fn new(name: &str, slack: f64, tol: f64) -> Self {
        Self { name: name.into(), pass: slack >= -tol, slack }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub csv: String,
    /// Gap of the last played profile (mixed averaged profile in bandit mode,
    /// max bang-per-buck violation in fisher mode).
    pub final_gap: f64,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub stats: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckAggregate {
    pub runs: usize,
    pub failures: usize,
    pub min_slack: f64,
    pub max_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub prng: String,
    pub config_hash: String,
    pub mode: Mode,
    pub theory_conditions: Vec<TheoryCondition>,
    pub runs: Vec<SeedSummary>,
    pub max_final_gap: f64,
    pub mean_final_gap: f64,
    pub checks: BTreeMap<String, CheckAggregate>,
    pub all_checks_pass: bool,
    pub config: ExperimentConfig,
}

/// sha256 of the config's canonical JSON serialization.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let text = serde_json::to_string(config).expect("configs serialize");
    hex::encode(Sha256::digest(text.as_bytes()))
}

enum Prepared {
    Gradient(Vec<(PolymatrixGame, Vec<PlayerSpec>)>),
    Bandit(Vec<(PolymatrixGame, Vec<crate::bandit::BanditAgentSpec>)>),
    Fisher(Vec<FisherMarket>),
}

enum Outcome {
    Gradient(Trajectory),
    Bandit(BanditTrajectory),
    Fisher { run: MarketRun, reference: Option<MarketRun> },
}

/// Validates the config, runs every seed (in parallel) and writes one CSV per
/// seed plus `summary.json` to the output directory. Nothing is written when
/// validation fails.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    let (summary, files) = execute(config)?;
    let out = &config.out_dir;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    for (name, body) in &files {
        let path = out.join(name);
        std::fs::write(&path, body).map_err(io_err(&path))?;
    }
    let path = out.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(summary)
}

/// [`run`] without touching the filesystem: the summary and the
/// `(file name, contents)` pairs it would write.
pub fn execute(config: &ExperimentConfig) -> Result<(RunSummary, Vec<(String, String)>), HarnessError> {
    config.validate()?;
    let prepared = prepare(config)?;
    let conditions = theory_conditions(config, &prepared)?;
    let outcomes: Vec<Outcome> = match &prepared {
        Prepared::Gradient(cells) => cells
            .par_iter()
            .zip(config.seeds.par_iter())
            .map(|((game, specs), &seed)| {
                run_full_feedback(game, specs, config.rounds, seed).map(Outcome::Gradient)
            })
            .collect::<Result<_, _>>()?,
        Prepared::Bandit(cells) => {
            let bc = config.bandit_config();
            cells
                .par_iter()
                .zip(config.seeds.par_iter())
                .map(|((game, agents), &seed)| run_bandit_with_agents(game, agents, &bc, seed).map(Outcome::Bandit))
                .collect::<Result<_, _>>()?
        }
        Prepared::Fisher(markets) => markets
            .par_iter()
            .map(|m| -> Result<Outcome, FisherError> {
                Ok(match config.fisher_dynamics {
                    FisherDynamics::Prd => Outcome::Fisher { run: run_prd(m, config.rounds)?, reference: None },
                    FisherDynamics::A2lPrd => Outcome::Fisher {
                        run: run_a2l_prd(m, config.rounds)?,
                        reference: Some(run_prd(m, config.rounds)?),
                    },
                })
            })
            .collect::<Result<_, _>>()?,
    };

    let mut runs = Vec::with_capacity(outcomes.len());
    let mut files = Vec::new();
    for (k, (outcome, &seed)) in outcomes.iter().zip(&config.seeds).enumerate() {
        let stem = format!("{}_seed{seed}", config.mode);
        let csv = format!("{stem}.csv");
        let summary = match (outcome, &prepared) {
            (Outcome::Gradient(t), Prepared::Gradient(cells)) => {
                files.push((csv.clone(), t.csv_string()));
                gradient_summary(config, &cells[k].0, t, seed, csv)
            }
            (Outcome::Bandit(t), _) => {
                files.push((csv.clone(), t.epoch_csv_string()));
                if t.rounds.is_some() {
                    let mut buf = Vec::new();
                    t.write_round_csv(&mut buf).expect("writing to a Vec cannot fail");
                    files.push((format!("{stem}_rounds.csv"), String::from_utf8(buf).expect("csv is utf-8")));
                }
                bandit_summary(t, seed, csv)?
            }
            (Outcome::Fisher { run, reference }, Prepared::Fisher(markets)) => {
                files.push((csv.clone(), run.csv_string()));
                fisher_summary(&markets[k], run, reference.as_ref(), seed, csv)
            }
            _ => unreachable!("outcomes follow the prepared mode"),
        };
        runs.push(summary);
    }

    let mut checks: BTreeMap<String, CheckAggregate> = BTreeMap::new();
    for c in runs.iter().flat_map(|r| &r.checks) {
        let agg = checks.entry(c.name.clone()).or_insert(CheckAggregate {
            runs: 0,
            failures: 0,
            min_slack: f64::INFINITY,
            max_slack: f64::NEG_INFINITY,
        });
        agg.runs += 1;
        agg.failures += usize::from(!c.pass);
        agg.min_slack = agg.min_slack.min(c.slack);
        agg.max_slack = agg.max_slack.max(c.slack);
    }
    let gaps: Vec<f64> = runs.iter().map(|r| r.final_gap).collect();
    let all_checks_pass = checks.values().all(|a| a.failures == 0);
    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        prng: PRNG_NAME.into(),
        config_hash: config_hash(config),
        mode: config.mode,
        theory_conditions: conditions,
        max_final_gap: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_final_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
        runs,
        checks,
        all_checks_pass,
        config: config.clone(),
    };
    Ok((summary, files))
}

/// Guarantee conditions over all seeds; a condition passes only if it holds
/// for every seed's game. Certified configs are refused on any failure.
fn theory_conditions(config: &ExperimentConfig, prepared: &Prepared) -> Result<Vec<TheoryCondition>, HarnessError> {
    let games: Vec<&PolymatrixGame> = match prepared {
        Prepared::Gradient(cells) => cells.iter().map(|c| &c.0).collect(),
        Prepared::Bandit(cells) => cells.iter().map(|c| &c.0).collect(),
        Prepared::Fisher(_) => Vec::new(),
    };
    let mut merged: Vec<TheoryCondition> = Vec::new();
    for g in games {
        for c in config.theory_conditions(g) {
            match merged.iter_mut().find(|m| m.name == c.name) {
                Some(m) if m.pass && !c.pass => *m = c,
                Some(_) => {}
                None => merged.push(c),
            }
        }
    }
    if config.certified {
        let failed: Vec<String> = merged
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("certified mode: {} fails ({})", c.name, c.detail))
            .collect();
        if !failed.is_empty() {
            return Err(HarnessError::Config(failed));
        }
    }
    Ok(merged)
}

fn collect_errors<T>(results: Vec<Result<T, String>>) -> Result<Vec<T>, HarnessError> {
    let mut ok = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        Ok(ok)
    } else {
        Err(HarnessError::Config(errors))
    }
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    Ok(match config.mode {
        Mode::Gradient => Prepared::Gradient(collect_errors(
            config
                .seeds
                .iter()
                .map(|&s| {
                    let g = config.game_for_seed(s)?;
                    let specs = config.player_specs(&g)?;
                    Ok((g, specs))
                })
                .collect(),
        )?),
        Mode::Bandit => Prepared::Bandit(collect_errors(
            config
                .seeds
                .iter()
                .map(|&s| {
                    let g = config.game_for_seed(s)?;
                    let agents = config.bandit_agents(&g)?;
                    Ok((g, agents))
                })
                .collect(),
        )?),
        Mode::Fisher => {
            Prepared::Fisher(collect_errors(config.seeds.iter().map(|&s| config.market_for_seed(s)).collect())?)
        }
    })
}

/// Σ_i ln d_i / (η t), the last-iterate gap bound for A2L-OMWU self-play.
pub fn gap_bound(game: &PolymatrixGame, eta: f64, t: usize) -> f64 {
    game.log_dim_sum() / (eta * t as f64)
}

/// (Σ_i ln d_i / η)(1 + ln t), the matching bound on each player's dynamic
/// regret.
pub fn dynamic_regret_bound(game: &PolymatrixGame, eta: f64, t: usize) -> f64 {
    game.log_dim_sum() / eta * (1.0 + (t as f64).ln())
}

/// Step size shared by every player, if all of them are uniform-weight
/// A2L-OMWU learners without a monitor.
fn certified_eta(config: &ExperimentConfig, game: &PolymatrixGame, specs: &[PlayerSpec]) -> Option<f64> {
    let mut eta = None;
    for s in specs {
        let PlayerSpec::Learner(l) = s else { return None };
        if l.algorithm != crate::dynamics::AlgorithmName::A2L_OMWU
            || l.weights != crate::a2l::WeightRule::Uniform
            || l.robust.is_some()
            || l.initial.is_some()
        {
            return None;
        }
        let e = l.eta.or(config.eta).unwrap_or_else(|| crate::dynamics::default_eta(game.num_players()));
        match eta {
            None => eta = Some(e),
            Some(prev) if prev != e => return None,
            _ => {}
        }
    }
    eta.filter(|&e| game.is_zero_sum() && e <= crate::dynamics::default_eta(game.num_players()))
}

fn gradient_summary(config: &ExperimentConfig, game: &PolymatrixGame, t: &Trajectory, seed: u64, csv: String) -> SeedSummary {
    let last = t.rounds.last().expect("at least one round");
    let mut checks = Vec::new();
    let mut stats = BTreeMap::new();
    stats.insert("final_tgap_avg".into(), last.tgap_inner_avg);
    let specs = &t.meta.players;
    if let Some(eta) = certified_eta(config, game, specs) {
        let gap = t
            .rounds
            .iter()
            .map(|r| gap_bound(game, eta, r.t) - r.tgap_played)
            .fold(f64::INFINITY, f64::min);
        checks.push(Check::new("gap_bound", gap, CHECK_TOLERANCE));
        let dreg = t
            .rounds
            .iter()
            .flat_map(|r| r.dynamic_regret.iter().map(|d| dynamic_regret_bound(game, eta, r.t) - d))
            .fold(f64::INFINITY, f64::min);
        checks.push(Check::new("dynamic_regret_bound", dreg, CHECK_TOLERANCE));
    }
    if game.is_zero_sum() && specs.iter().all(|s| matches!(s, PlayerSpec::Learner(_))) {
        let w = &last.inner_weight;
        if w.iter().all(|v| *v == w[0]) {
            let worst = t
                .rounds
                .iter()
                .map(|r| {
                    let avg_regret: f64 = r.inner_regret.iter().sum::<f64>() / r.inner_weight[0];
                    (r.tgap_inner_avg - avg_regret).abs()
                })
                .fold(0.0, f64::max);
            checks.push(Check::new("gap_regret_identity", 1e-10 - worst, 0.0));
        }
    }
    for (i, s) in last.switched.iter().enumerate() {
        if *s {
            let round = t.rounds.iter().find(|r| r.switched[i]).map_or(0, |r| r.t);
            stats.insert(format!("switch_round_p{}", i + 1), round as f64);
        }
    }
    SeedSummary { seed, csv, final_gap: last.tgap_played, checks, stats }
}

fn bandit_summary(t: &BanditTrajectory, seed: u64, csv: String) -> Result<SeedSummary, HarnessError> {
    let mut checks = Vec::new();
    let mut stats = BTreeMap::new();
    if t.meta.config.audit {
        let rec = recovery_error_audit(t)?;
        let reg = regret_with_error_audit(t)?;
        let first = rec.iter().map(|r| r.first_order_slack).fold(f64::INFINITY, f64::min);
        let second = rec.iter().map(|r| r.second_order_slack).fold(f64::INFINITY, f64::min);
        let regret = reg.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
        checks.push(Check::new("recovery_error", first, 1e-6));
        checks.push(Check::new("recovery_error_squared", second, 1e-6));
        if t.meta.certified {
            checks.push(Check::new("regret_with_error", regret, 1e-6));
        } else {
            stats.insert("regret_with_error_slack".into(), regret);
        }
        let audits: Vec<bool> = t
            .epochs
            .iter()
            .flat_map(|e| e.players.iter().filter_map(|p| p.audit.as_ref().map(|a| a.bound_violated)))
            .collect();
        let violations = audits.iter().filter(|v| **v).count();
        stats.insert("estimation_bound_violation_rate".into(), violations as f64 / audits.len().max(1) as f64);
    }
    for i in 0..t.num_players() {
        if let Some(e) = t.switch_epoch(i) {
            stats.insert(format!("switch_epoch_p{}", i + 1), e as f64);
        }
    }
    stats.insert("total_rounds".into(), t.meta.total_rounds as f64);
    Ok(SeedSummary { seed, csv, final_gap: t.final_gap(), checks, stats })
}

fn fisher_summary(
    market: &FisherMarket,
    run: &MarketRun,
    reference: Option<&MarketRun>,
    seed: u64,
    csv: String,
) -> SeedSummary {
    let total = market.total_budget();
    let conservation = run
        .steps
        .iter()
        .map(|s| (s.prices.iter().sum::<f64>() - total).abs())
        .fold(0.0, f64::max);
    let mut checks = vec![Check::new("price_conservation", 1e-9 - conservation, 0.0)];
    if let Some(r) = reference {
        let mut cum = vec![0.0; market.n_goods()];
        let mut worst: f64 = 0.0;
        for (a, p) in run.steps.iter().zip(&r.steps) {
            for (c, v) in cum.iter_mut().zip(&p.prices) {
                *c += v;
            }
            let t = p.t as f64;
            for (c, v) in cum.iter().zip(&a.prices) {
                worst = worst.max((c / t - v).abs());
            }
        }
        checks.push(Check::new("average_price_equivalence", 1e-10 - worst, 0.0));
    }
    let final_gap = run.steps.last().map_or(f64::NAN, |s| s.max_bpb_violation);
    SeedSummary { seed, csv, final_gap, checks, stats: BTreeMap::new() }
}
