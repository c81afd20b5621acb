//! Named verification suites. Each suite is a plain function returning its
//! checks; [`verify`] looks suites up by name and wraps the result.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dynamic_regret_bound, execute, gap_bound, ExperimentConfig, GameSource, GenerateSpec, HarnessError};
use super::{FisherDynamics, MarketSource, Mode, RandomMarketSpec};
use crate::a2l::WeightRule;
use crate::bandit::{
    default_bandit_eta, estimator_unbiasedness, iw_estimator_unbiasedness, recovery_error_audit,
    regret_with_error_audit, run_bandit, run_bandit_with_agents, BanditAgentSpec, BanditConfig, EpochSchedule,
};
use crate::dynamics::{default_eta, run_full_feedback, AlgorithmName, LearnerSpec, PlayerSpec, Trajectory};
use crate::fisher::{run_a2l_prd, run_prd, verify_ce, FisherMarket, SpendingProfile};
use crate::game::{
    generate_game, utility_variation_bound, GameKind, GraphSpec, Matrix, MixedStrategy, PolymatrixGame,
    StrategyProfile,
};
use crate::learners::{rvu_diagnostic, BaseAlgorithm};
use crate::rng::{stream_rng, PROBE_STREAM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Seeds per suite cell.
    pub seeds: u64,
    /// Repetitions for the estimation-bound frequency check.
    pub repetitions: u64,
    /// Resampled epochs for the unbiasedness checks.
    pub resamples: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seeds: 20, repetitions: 200, resamples: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCheck {
    pub name: String,
    pub pass: bool,
    pub observed: f64,
    pub limit: f64,
    pub detail: String,
}

impl SuiteCheck {
    pub fn at_most(name: impl Into<String>, observed: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass: observed <= limit, observed, limit, detail: detail.into() }
    }

    pub fn at_least(name: impl Into<String>, observed: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass: observed >= limit, observed, limit, detail: detail.into() }
    }

    pub fn above(name: impl Into<String>, observed: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass: observed > limit, observed, limit, detail: detail.into() }
    }

    pub fn below(name: impl Into<String>, observed: f64, limit: f64, detail: impl Into<String>) -> Self {
        Self { name: name.into(), pass: observed < limit, observed, limit, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub description: String,
    pub pass: bool,
    pub checks: Vec<SuiteCheck>,
}

type SuiteFn = fn(&VerifyOptions) -> Result<Vec<SuiteCheck>, HarnessError>;

const SUITES: &[(&str, &str, SuiteFn)] = &[
    ("average_equivalence", "A2L iterates equal the weighted average of the base learner's iterates", average_equivalence),
    ("gap_regret_identity", "gap of the average equals average total regret in zero-sum games", gap_regret_identity),
    ("gradient_rate", "A2L-OMWU last-iterate gap bound at every round and log-log slope", gradient_rate),
    ("dynamic_regret", "per-player dynamic regret bound of A2L-OMWU", dynamic_regret),
    ("rvu", "RVU regret bound of OMWU self-play", rvu),
    ("utility_lipschitz", "utility variation bounded by strategy variation", utility_lipschitz),
    ("contrast", "bare MWU keeps cycling on matching pennies while A2L-MWU converges", contrast),
    ("bandit_audit", "bandit recovery-error and regret-with-error audits, gap trend", bandit_audit),
    ("bandit_unbiased", "per-action mean estimator is unbiased", bandit_unbiased),
    ("estimation_error", "estimation-error bound violation frequency", estimation_error),
    ("monitor_gradient", "gradient regret monitor: silent in self-play, switches against an adversary", monitor_gradient),
    ("monitor_bandit", "importance-weighted monitor: silent in self-play, switches against an adversary", monitor_bandit),
    ("fisher", "A2L-PRD price equivalence, conservation and the hand-solved market", fisher),
    ("determinism", "identical configs give byte-identical CSVs", determinism),
];

pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|s| s.0).collect()
}

pub fn verify(name: &str, opts: &VerifyOptions) -> Result<SuiteReport, HarnessError> {
    let (suite, description, f) = SUITES
        .iter()
        .find(|s| s.0 == name)
        .ok_or_else(|| HarnessError::UnknownSuite {
            name: name.into(),
            available: suite_names().into_iter().map(String::from).collect(),
        })?;
    let checks = f(opts)?;
    Ok(SuiteReport {
        suite: (*suite).into(),
        description: (*description).into(),
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

pub fn verify_all(opts: &VerifyOptions) -> Result<Vec<SuiteReport>, HarnessError> {
    suite_names().into_iter().map(|s| verify(s, opts)).collect()
}

fn seeds(opts: &VerifyOptions) -> Vec<u64> {
    (0..opts.seeds).collect()
}

/// Matching pennies, rock-paper-scissors and a random three-player
/// zero-sum polymatrix game with five actions.
pub fn desk_games(seed: u64) -> Result<Vec<(&'static str, PolymatrixGame)>, HarnessError> {
    Ok(vec![
        ("matching_pennies", generate_game(GameKind::MatchingPennies, 2, 2, GraphSpec::Complete, seed)?),
        ("rps", generate_game(GameKind::RockPaperScissors, 2, 3, GraphSpec::Complete, seed)?),
        ("random_zs_3x5", generate_game(GameKind::RandomZeroSum, 3, 5, GraphSpec::Complete, seed)?),
    ])
}

/// Random zero-sum polymatrix games with 2 to 4 players and 2 to 10 actions.
pub fn rate_game(seed: u64) -> Result<PolymatrixGame, HarnessError> {
    let n = 2 + (seed % 3) as usize;
    let d = 2 + (seed * 3 % 9) as usize;
    Ok(generate_game(GameKind::RandomZeroSum, n, d, GraphSpec::Complete, seed)?)
}

/// Interior starting points with weights uniform in [0.5, 1.5].
pub fn random_start(game: &PolymatrixGame, seed: u64) -> Vec<MixedStrategy> {
    let mut rng = stream_rng(seed, PROBE_STREAM);
    game.action_counts()
        .iter()
        .map(|&d| {
            let w: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..1.5)).collect();
            let total: f64 = w.iter().sum();
            MixedStrategy::new(w.iter().map(|v| v / total).collect()).expect("normalized")
        })
        .collect()
}

fn self_play(
    game: &PolymatrixGame,
    algorithm: AlgorithmName,
    weights: WeightRule,
    start: Option<&[MixedStrategy]>,
    rounds: usize,
    seed: u64,
) -> Result<Trajectory, HarnessError> {
    let eta = default_eta(game.num_players());
    let specs: Vec<PlayerSpec> = (0..game.num_players())
        .map(|i| {
            let mut s = LearnerSpec::new(algorithm).with_eta(eta).with_weights(weights);
            if let Some(x) = start {
                s = s.with_initial(x[i].clone());
            }
            s.into()
        })
        .collect();
    Ok(run_full_feedback(game, &specs, rounds, seed)?)
}

struct EquivalenceCell {
    label: String,
    zero_sum: bool,
    /// max |x̄^t − weighted mean of reference iterates|.
    average_error: f64,
    /// max |TGap(x̄^t) − Σ_i Reg^w_i(t) / W_t| on the reduced run.
    identity_error: f64,
    /// Same identity on the bare reference run with uniform weights.
    reference_identity_error: f64,
}

const EQUIVALENCE_ROUNDS: usize = 1000;

fn equivalence_cells(opts: &VerifyOptions) -> Result<Vec<EquivalenceCell>, HarnessError> {
    let mut jobs = Vec::new();
    for base in [BaseAlgorithm::Mwu, BaseAlgorithm::Omwu] {
        for rule in [WeightRule::Uniform, WeightRule::Linear] {
            for g in 0..3 {
                for seed in seeds(opts) {
                    jobs.push((base, rule, g, seed));
                }
            }
        }
    }
    jobs.par_iter()
        .map(|&(base, rule, g, seed)| {
            let (name, game) = desk_games(seed)?.swap_remove(g);
            let start = random_start(&game, seed);
            let reduced = self_play(&game, AlgorithmName { base, reduced: true }, rule, Some(&start), EQUIVALENCE_ROUNDS, seed)?;
            let reference = self_play(&game, AlgorithmName { base, reduced: false }, rule, Some(&start), EQUIVALENCE_ROUNDS, seed)?;
            let mut sums: Vec<Vec<f64>> = game.action_counts().iter().map(|&d| vec![0.0; d]).collect();
            let mut total = 0.0;
            let mut average_error: f64 = 0.0;
            let mut identity_error: f64 = 0.0;
            let mut reference_identity_error: f64 = 0.0;
            for (r, q) in reduced.rounds.iter().zip(&reference.rounds) {
                let w = rule.weight(q.t);
                total += w;
                for (i, row) in sums.iter_mut().enumerate() {
                    for (a, (s, x)) in row.iter_mut().zip(q.profile[i].probs()).enumerate() {
                        *s += w * x;
                        average_error = average_error.max((r.profile[i].probs()[a] - *s / total).abs());
                    }
                }
                let avg_regret: f64 = r.inner_regret.iter().sum::<f64>() / r.inner_weight[0];
                identity_error = identity_error.max((r.tgap_played - avg_regret).abs());
                let ref_regret: f64 = q.regret.iter().sum::<f64>() / q.t as f64;
                reference_identity_error = reference_identity_error.max((q.tgap_inner_avg - ref_regret).abs());
            }
            Ok(EquivalenceCell {
                label: format!("{base}/{rule}/{name}/seed{seed}"),
                zero_sum: game.is_zero_sum(),
                average_error,
                identity_error,
                reference_identity_error,
            })
        })
        .collect()
}

fn worst<T>(items: &[T], key: impl Fn(&T) -> f64) -> (f64, Option<&T>) {
    items.iter().fold((f64::NEG_INFINITY, None), |(m, arg), it| {
        let v = key(it);
        if v > m {
            (v, Some(it))
        } else {
            (m, arg)
        }
    })
}

pub fn average_equivalence(opts: &VerifyOptions) -> Result<Vec<SuiteCheck>, HarnessError> {
    let cells = equivalence_cells(opts)?;
    let (err, at) = worst(&cells, |c| c.average_error);
    Ok(vec![SuiteCheck::at_most(
        "max_average_deviation",
        err,
        1e-12,
        format!("{} cells of {EQUIVALENCE_ROUNDS} rounds; worst {}", cells.len(), at.map_or("", |c| &c.label)),
    )])
}

pub fn gap_regret_identity(opts: &VerifyOptions) -> Result<Vec<SuiteCheck>, HarnessError> {
    let cells: Vec<EquivalenceCell> = equivalence_cells(opts)?.into_iter().filter(|c| c.zero_sum).collect();
    let (err, at) = worst(&cells, |c| c.identity_error);
    let (ref_err, ref_at) = worst(&cells, |c| c.reference_identity_error);
    Ok(vec![
        SuiteCheck::at_most(
            "reduced_identity_error",
            err,
            1e-10,
            format!("worst {}", at.map_or("", |c| &c.label)),
        ),
        SuiteCheck::at_most(
            "reference_identity_error",
            ref_err,
            1e-10,
            format!("worst {}", ref_at.map_or("", |c| &c.label)),
        ),
    ])
}

const RATE_ROUNDS: usize = 10_000;

fn rate_runs(opts: &VerifyOptions) -> Result<Vec<(PolymatrixGame, Trajectory)>, HarnessError> {
    seeds(opts)
        .par_iter()
        .map(|&seed| {
            let game = rate_game(seed)?;
            let t = self_play(&game, AlgorithmName::A2L_OMWU, WeightRule::Uniform, None, RATE_ROUNDS, seed)?;
            Ok((game, t))
        })
        .collect()
}

pub fn gradient_rate(opts: &VerifyOptions) -> Result<Vec<SuiteCheck>, HarnessError> {
    let runs = rate_runs(opts)?;
    let mut excess = f64::NEG_INFINITY;
    let mut mean = vec![0.0; RATE_ROUNDS];
    for (game, t) in &runs {
        let eta = default_eta(game.num_players());
        for r in &t.rounds {
            excess = excess.max(r.tgap_played - gap_bound(game, eta, r.t));
            mean[r.t - 1] += r.tgap_played / runs.len() as f64;
        }
    }
    let points: Vec<(f64, f64)> = mean.iter().enumerate().map(|(k, g)| ((k + 1) as f64, *g)).collect();
    let fit = super::fit_rate(&points, 100.0, RATE_ROUNDS as f64)?;
    let worst_seed = runs
        .iter()
        .filter_map(|(_, t)| {
            let p: Vec<(f64, f64)> = t.rounds.iter().map(|r| (r.t as f64, r.tgap_played)).collect();
            super::fit_rate(&p, 100.0, RATE_ROUNDS as f64).ok()
        })
        .map(|f| f.slope)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![
        SuiteCheck::at_most(
            "max_gap_minus_bound",
            excess,
            1e-9,
            format!("every round t <= {RATE_ROUNDS}, {} games", runs.len()),
        ),
        SuiteCheck::at_most(
            "mean_gap_slope",
            fit.slope,
            -0.9,
            format!("window [1e2, 1e4], stderr {:.3e}; flattest single-seed slope {worst_seed:.4}", fit.stderr),
        ),
    ])
}

pub fn dynamic_regret(opts: &VerifyOptions) -> Result<Vec<SuiteCheck>, HarnessError> {
    let runs = rate_runs(opts)?;
    let mut excess = f64::NEG_INFINITY;
    for (game, t) in &runs {
        let eta = default_eta(game.num_players());
        for r in &t.rounds {
            let bound = dynamic_regret_bound(game, eta, r.t);
            for d in &r.dynamic_regret {
                excess = excess.max(d - bound);
            }
        }
    }
    Ok(vec![SuiteCheck::at_most(
        "max_dynamic_regret_minus_bound",
        excess,
        1e-9,
        format!("every player and round, {} games", runs.len()),
    )])
}

fn prefix_grid(rounds: usize) -> impl Iterator<Item = usize> {
    (1..=rounds).filter(move |&t| t <= 20 || t % 10 == 0 || t == rounds)
}

pub fn rvu(opts: &VerifyOptions) -> Result<Vec<SuiteCheck>, HarnessError> {
    let mut games = Vec::new();
    for seed in seeds(opts) {
        for (name, g) in desk_games(seed)? {
            games.push((format!("{name}/seed{seed}"), g, seed));
        }
        games.push((format!("rate_game/seed{seed}"), rate_game(seed)?, seed));
    }
    let slacks = games
        .par_iter()
        .map(|(label, game, seed)| {
            let t = self_play(game, AlgorithmName::OMWU, WeightRule::Uniform, None, EQUIVALENCE_ROUNDS, *seed)?;
            let eta = default_eta(game.num_players());
            let mut min = f64::INFINITY;
            for i in 0..game.num_players() {
                let xs = t.played_strategies(i);
                let us = t.received_utilities(i);
                for k in prefix_grid(xs.len()) {
                    let rec = rvu_diagnostic(&xs[..k], &us[..k], eta)
                        .map_err(|e| HarnessError::Csv(format!("{label}: {e}")))?;
                    min = min.min(rec.slack);
                }
            }
            Ok((label.clone(), min))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let (slack, at) = slacks
        .iter()
        .fold((f64::INFINITY, ""), |(m, l), (label, s)| if *s < m { (*s, label.as_str()) } else { (m, l) });
    Ok(vec![SuiteCheck::at_least(
        "min_rvu_slack",
        slack,
        -1e-9,
        format!("{} trajectories, every player and prefix on a grid; worst {at}", slacks.len()),
    )])
}

fn random_profile(game: &PolymatrixGame, rng: &mut impl Rng) -> StrategyProfile {
    StrategyProfile::new(
        game.action_counts()
            .iter()
            .map(|&d| {
                if rng.random_bool(0.25) {
                    MixedStrategy::pure(d, rng.random_range(0..d))
                } else {
                    let w: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 1e-12).collect();
                    let total: f64 = w.iter().sum();
                    MixedStrategy::new(w.iter().map(|v| v / total).collect()).expect("normalized")
                }
            })
            .collect(),
    )
}

pub const LIPSCHITZ_PAIRS: usize = 1000;

pub fn utility_lipschitz(opts: &VerifyOptions) -> Result<Vec<SuiteCheck>, HarnessError> {
    let mut excess = f64::NEG_INFINITY;
    let mut games = 0;
    for seed in seeds(opts) {
        let mut all = desk_games(seed)?;
        all.push(("rate_game", rate_game(seed)?));
        let mut rng = stream_rng(seed, PROBE_STREAM);
        for (_, game) in &all {
            games += 1;
            for _ in 0..LIPSCHITZ_PAIRS {
                let x = random_profile(game, &mut rng);
                let y = random_profile(game, &mut rng);
                let (lhs, rhs) = utility_variation_bound(game, &x, &y)?;
                excess = excess.max(lhs - rhs);
            }
        }
    }
    Ok(vec![SuiteCheck::at_most(
        "max_lhs_minus_rhs",
        excess,
        1e-12,
        format!("{LIPSCHITZ_PAIRS} profile pairs on each of {games} games"),
    )])
}

/// Step size and common starting point of the contrast runs.
pub const CONTRAST_ETA: f64 = 0.1;
pub const CONTRAST_START: [f64; 2] = [0.52, 0.48];

/// (min bare-MWU gap, max A2L-MWU gap) over rounds 900..=1000 on matching
/// pennies.
pub fn contrast_gaps() -> Result<(f64, f64), HarnessError> {
    let game = generate_game(GameKind::MatchingPennies, 2, 2, GraphSpec::Complete, 0)?;
    let start = MixedStrategy::new(CONTRAST_START.to_vec())?;
    let run = |alg: AlgorithmName| -> Result<Trajectory, HarnessError> {
        let spec: PlayerSpec = LearnerSpec::new(alg).with_eta(CONTRAST_ETA).with_initial(start.clone()).into();
        Ok(run_full_feedback(&game, &[spec.clone(), spec], 1000, 0)?)
    };
    let window = |t: &Trajectory| -> Vec<f64> {
        t.rounds.iter().filter(|r| r.t >= 900).map(|r| r.tgap_played).collect()
    };
    let bare = window(&run(AlgorithmName::MWU)?).into_iter().fold(f64::INFINITY, f64::min);
    let reduced = window(&run(AlgorithmName::A2L_MWU)?).into_iter().fold(0.0, f64::max);
    Ok((bare, reduced))
}

pub fn contrast(_: &VerifyOptions) -> Result<Vec<SuiteCheck>, HarnessError> {
    let (bare, reduced) = contrast_gaps()?;
    let detail = format!("matching pennies, eta {CONTRAST_ETA}, both players start at {CONTRAST_START:?}, rounds 900-1000");
    Ok(vec![
        SuiteCheck::above("mwu_min_gap", bare, 0.05, detail.clone()),
        SuiteCheck::below("a2l_mwu_max_gap", reduced, 0.01, detail),
    ])
}

/// Two players, three actions, random zero-sum.
pub fn bandit_game(seed: u64) -> Result<PolymatrixGame, HarnessError> {
    Ok(generate_game(GameKind::RandomZeroSum, 2, 3, GraphSpec::Complete, seed)?)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn bandit_audit(opts: &VerifyOptions) -> Result<Vec<SuiteCheck>, HarnessError> {
    let rows = seeds(opts)
        .par_iter()
        .map(|&seed| -> Result<_, HarnessError> {
            let game = bandit_game(seed)?;
            let t = run_bandit(&game, EpochSchedule::Theory, default_bandit_eta(2), seed, 0.05)?;
            let rec = recovery_error_audit(&t)?;
            let reg = regret_with_error_audit(&t)?;
            let first = rec.iter().map(|r| r.first_order_slack).fold(f64::INFINITY, f64::min);
            let second = rec.iter().map(|r| r.second_order_slack).fold(f64::INFINITY, f64::min);
            let regret = reg.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
            Ok((first, second, regret, t.epochs[2].tgap_mixed_avg, t.epochs[t.epochs.len() - 1].tgap_mixed_avg))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let min = |f: fn(&(f64, f64, f64, f64, f64)) -> f64| rows.iter().map(f).fold(f64::INFINITY, f64::min);
    let detail = format!("n=2, d=3, 12 epochs, {} seeds", rows.len());
    let early = median(rows.iter().map(|r| r.3).collect());
    let late = median(rows.iter().map(|r| r.4).collect());
    Ok(vec![
        SuiteCheck::at_least("recovery_error_slack", min(|r| r.0), -1e-6, detail.clone()),
        SuiteCheck::at_least("recovery_error_squared_slack", min(|r| r.1), -1e-6, detail.clone()),
        SuiteCheck::at_least("regret_with_error_slack", min(|r| r.2), -1e-6, detail),
        SuiteCheck::at_most(
            "median_gap_epoch12_vs_epoch3",
            late,
            early,
            "median TGap of the mixed averaged profile at epoch 12 against epoch 3",
        ),
    ])
}

pub const UNBIASED_EPOCH_LENGTH: u64 = 16;

pub fn bandit_unbiased(opts: &VerifyOptions) -> Result<Vec<SuiteCheck>, HarnessError> {
    let game = bandit_game(0)?;
    let profile = StrategyProfile::new(random_start(&game, 0));
    let mut z: f64 = 0.0;
    for i in 0..game.num_players() {
        z = z.max(estimator_unbiasedness(&game, &profile, i, UNBIASED_EPOCH_LENGTH, opts.resamples, 7)?.max_abs_z);
    }
    Ok(vec![SuiteCheck::at_most(
        "max_abs_z",
        z,
        3.0,
        format!("{} resampled epochs of {UNBIASED_EPOCH_LENGTH} rounds, both players", opts.resamples),
    )])
}

pub fn estimation_error(opts: &VerifyOptions) -> Result<Vec<SuiteCheck>, HarnessError> {
    let delta = 0.05;
    let reps: Vec<u64> = (0..opts.repetitions).collect();
    let flags = reps
        .par_iter()
        .map(|&seed| -> Result<Vec<bool>, HarnessError> {
            let game = bandit_game(seed)?;
            let t = run_bandit(&game, EpochSchedule::Theory, default_bandit_eta(2), seed, delta)?;
            Ok(t.epochs
                .iter()
                .flat_map(|e| e.players.iter().map(|p| p.audit.as_ref().is_some_and(|a| a.bound_violated)))
                .collect())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cells = flags.first().map_or(0, Vec::len);
    let worst = (0..cells)
        .map(|c| flags.iter().filter(|f| f[c]).count() as f64 / flags.len() as f64)
        .fold(0.0, f64::max);
    Ok(vec![SuiteCheck::at_most(
        "max_cell_violation_frequency",
        worst,
        4.0 * delta,
        format!("{cells} (epoch, player) cells over {} repetitions, delta {delta}", flags.len()),
    )])
}

/// Regret-monitor constant used by the monitor suites in gradient mode.
pub const GRADIENT_MONITOR_C: f64 = 2.0;
/// Regret-monitor constant used by the monitor suites in bandit mode.
pub const BANDIT_MONITOR_C: f64 = 4.0;

/// Robust A2L-OMWU against an opponent alternating its two pure actions in
/// a game whose first action is weakly dominant for the learner. Returns
/// the learner's switch round.
pub fn gradient_adversary_switch(rounds: usize) -> Result<Option<usize>, HarnessError> {
    let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.9]])?;
    let game = PolymatrixGame::bimatrix(a.clone(), a, false)?;
    let learner: PlayerSpec = LearnerSpec::new(AlgorithmName::A2L_OMWU).with_robust(GRADIENT_MONITOR_C).into();
    let script = PlayerSpec::Scripted(vec![MixedStrategy::pure(2, 0), MixedStrategy::pure(2, 1)]);
    let t = run_full_feedback(&game, &[learner, script], rounds, 0)?;
    Ok(t.rounds.iter().find(|r| r.switched[0]).map(|r| r.t))
}

pub fn monitor_gradient(opts: &VerifyOptions) -> Result<Vec<SuiteCheck>, HarnessError> {
    let mut games = Vec::new();
    for seed in seeds(opts) {
        for (_, g) in desk_games(seed)? {
            games.push((g, seed));
        }
        games.push((rate_game(seed)?, seed));
    }
    let switches: usize = games
        .par_iter()
        .map(|(game, seed)| -> Result<usize, HarnessError> {
            let spec: PlayerSpec = LearnerSpec::new(AlgorithmName::A2L_OMWU).with_robust(GRADIENT_MONITOR_C).into();
            let t = run_full_feedback(game, &vec![spec; game.num_players()], EQUIVALENCE_ROUNDS, *seed)?;
            Ok(t.rounds.last().map_or(0, |r| r.switched.iter().filter(|s| **s).count()))
        })
        .sum::<Result<usize, _>>()?;
    let adversary = gradient_adversary_switch(EQUIVALENCE_ROUNDS)?;
    Ok(vec![
        SuiteCheck::at_most(
            "self_play_switches",
            switches as f64,
            0.0,
            format!("{} self-play runs of {EQUIVALENCE_ROUNDS} rounds, c = {GRADIENT_MONITOR_C}", games.len()),
        ),
        SuiteCheck::at_least(
            "adversary_switched",
            f64::from(u8::from(adversary.is_some())),
            1.0,
            format!("switch round {adversary:?}"),
        ),
    ])
}

/// Learner with five actions against a four-action opponent cycling its
/// pure actions epoch by epoch. Action k > 0 pays +1 exactly against
/// opponent action k − 1, so the learner's optimistic iterates chase
/// yesterday's winner while action 0 pays +1 always. Returns the learner's
/// switch epoch.
pub fn bandit_adversary_switch(epochs: usize) -> Result<Option<usize>, HarnessError> {
    let rows: Vec<Vec<f64>> = (0..5)
        .map(|k| (0..4).map(|j| if k == 0 || j + 1 == k { 1.0 } else { -1.0 }).collect())
        .collect();
    let a = Matrix::from_rows(&rows)?;
    let game = PolymatrixGame::bimatrix(a, Matrix::filled(5, 4, 0.0), false)?;
    let agents = vec![
        BanditAgentSpec::Learner { eta: None, monitor: Some(BANDIT_MONITOR_C) },
        BanditAgentSpec::Scripted((0..4).map(|j| MixedStrategy::pure(4, j)).collect()),
    ];
    let config = BanditConfig { epochs, audit: false, ..BanditConfig::default() };
    let t = run_bandit_with_agents(&game, &agents, &config, 0)?;
    Ok(t.switch_epoch(0))
}

pub fn monitor_bandit(opts: &VerifyOptions) -> Result<Vec<SuiteCheck>, HarnessError> {
    let config = BanditConfig { audit: false, ..BanditConfig::default() };
    let switches: usize = seeds(opts)
        .par_iter()
        .map(|&seed| -> Result<usize, HarnessError> {
            let game = bandit_game(seed)?;
            let agents = vec![BanditAgentSpec::Learner { eta: None, monitor: Some(BANDIT_MONITOR_C) }; 2];
            let t = run_bandit_with_agents(&game, &agents, &config, seed)?;
            Ok((0..2).filter(|&i| t.switch_epoch(i).is_some()).count())
        })
        .sum::<Result<usize, _>>()?;
    let adversary = bandit_adversary_switch(config.epochs)?;
    let game = bandit_game(0)?;
    let profile = StrategyProfile::new(random_start(&game, 0));
    let mut z: f64 = 0.0;
    for i in 0..game.num_players() {
        z = z.max(iw_estimator_unbiasedness(&game, &profile, i, UNBIASED_EPOCH_LENGTH, opts.resamples, 11)?.max_abs_z);
    }
    Ok(vec![
        SuiteCheck::at_most(
            "self_play_switches",
            switches as f64,
            0.0,
            format!("{} seeds x {} epochs, c = {BANDIT_MONITOR_C}", opts.seeds, config.epochs),
        ),
        SuiteCheck::at_least(
            "adversary_switched",
            f64::from(u8::from(adversary.is_some())),
            1.0,
            format!("switch epoch {adversary:?} of {}", config.epochs),
        ),
        SuiteCheck::at_most(
            "iw_max_abs_z",
            z,
            3.0,
            format!("{} resampled epochs of {UNBIASED_EPOCH_LENGTH} rounds", opts.resamples),
        ),
    ])
}

pub const FISHER_STEPS: usize = 500;

/// Random linear market with 2 to 5 agents and 2 to 5 goods.
pub fn fisher_market(seed: u64) -> Result<FisherMarket, HarnessError> {
    Ok(FisherMarket::random_linear(2 + (seed % 4) as usize, 2 + (seed / 4 % 4) as usize, seed)?)
}

/// (max |A2L-PRD price − running average of PRD prices|, max price
/// conservation error) over `steps` steps.
pub fn fisher_equivalence(market: &FisherMarket, steps: usize) -> Result<(f64, f64), HarnessError> {
    let a = run_a2l_prd(market, steps)?;
    let p = run_prd(market, steps)?;
    let total = market.total_budget();
    let mut cum = vec![0.0; market.n_goods()];
    let (mut eq, mut cons): (f64, f64) = (0.0, 0.0);
    for (sa, sp) in a.steps.iter().zip(&p.steps) {
        for (c, v) in cum.iter_mut().zip(&sp.prices) {
            *c += v;
        }
        for (c, v) in cum.iter().zip(&sa.prices) {
            eq = eq.max((c / sp.t as f64 - v).abs());
        }
        for s in [sa, sp] {
            cons = cons.max((s.prices.iter().sum::<f64>() - total).abs());
        }
    }
    Ok((eq, cons))
}

/// First PRD step (1-based) of the 2×2 market with valuations (1,0), (0,1)
/// at which the competitive-equilibrium check passes at `tol`.
pub fn hand_market_ce_step(max_steps: usize, tol: f64) -> Result<Option<usize>, HarnessError> {
    let market = FisherMarket::linear(vec![1.0, 1.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]])?;
    let mut spend = SpendingProfile::even(&market);
    for t in 1..=max_steps {
        let report = verify_ce(&market, &spend.prices(), &spend.allocations()?, tol)?;
        if report.all_pass() {
            return Ok(Some(t));
        }
        spend = crate::fisher::prd_step(&market, &spend)?;
    }
    Ok(None)
}

pub fn fisher(opts: &VerifyOptions) -> Result<Vec<SuiteCheck>, HarnessError> {
    let rows = seeds(opts)
        .par_iter()
        .map(|&seed| -> Result<(f64, f64, f64), HarnessError> {
            let m = fisher_market(seed)?;
            let (eq, cons) = fisher_equivalence(&m, FISHER_STEPS)?;
            let scaled = m.scaled_budgets(10.0)?;
            let (a, b) = (run_a2l_prd(&m, 50)?, run_a2l_prd(&scaled, 50)?);
            let mut homogeneity: f64 = 0.0;
            for (x, y) in a.spends.iter().zip(&b.spends) {
                for (p, q) in x.prices().iter().zip(y.prices()) {
                    homogeneity = homogeneity.max((10.0 * p - q).abs() / q);
                }
                for (r, s) in x.allocations()?.iter().zip(y.allocations()?) {
                    for (u, v) in r.iter().zip(s) {
                        homogeneity = homogeneity.max((u - v).abs());
                    }
                }
            }
            Ok((eq, cons, homogeneity))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let max = |f: fn(&(f64, f64, f64)) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let ce = hand_market_ce_step(50, 1e-6)?;
    let detail = format!("{} random linear markets, {FISHER_STEPS} steps", rows.len());
    Ok(vec![
        SuiteCheck::at_most("price_equivalence", max(|r| r.0), 1e-10, detail.clone()),
        SuiteCheck::at_most("price_conservation", max(|r| r.1), 1e-9, detail),
        SuiteCheck::at_most(
            "budget_homogeneity",
            max(|r| r.2),
            1e-9,
            "budgets x10: prices x10, allocations unchanged (50 steps)",
        ),
        SuiteCheck::at_most(
            "hand_market_ce_step",
            ce.map_or(f64::INFINITY, |s| s as f64),
            50.0,
            "first PRD step passing every equilibrium condition at 1e-6",
        ),
    ])
}

/// Small configs covering the three modes.
pub fn determinism_configs() -> Vec<ExperimentConfig> {
    let mut gradient = ExperimentConfig::new(Mode::Gradient);
    gradient.game = Some(GameSource::Generate(GenerateSpec {
        kind: GameKind::RandomZeroSum,
        n: 3,
        d: 4,
        graph: GraphSpec::Complete,
        seed: None,
    }));
    gradient.rounds = 300;
    gradient.seeds = vec![0, 1, 2];

    let mut bandit = ExperimentConfig::new(Mode::Bandit);
    bandit.game = Some(GameSource::Generate(GenerateSpec {
        kind: GameKind::RandomZeroSum,
        n: 2,
        d: 3,
        graph: GraphSpec::Complete,
        seed: None,
    }));
    bandit.epochs = 8;
    bandit.seeds = vec![0, 1];
    bandit.log_rounds = true;

    let mut fisher = ExperimentConfig::new(Mode::Fisher);
    fisher.market = Some(MarketSource::Random(RandomMarketSpec { agents: 3, goods: 4, seed: None }));
    fisher.fisher_dynamics = FisherDynamics::A2lPrd;
    fisher.rounds = 200;
    fisher.seeds = vec![0, 1];
    vec![gradient, bandit, fisher]
}

pub fn determinism(_: &VerifyOptions) -> Result<Vec<SuiteCheck>, HarnessError> {
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| HarnessError::Csv(e.to_string()))?;
    let mut checks = Vec::new();
    for config in determinism_configs() {
        let (_, first) = execute(&config)?;
        let (_, second) = execute(&config)?;
        let (_, serial) = single.install(|| execute(&config))?;
        let differing = first
            .iter()
            .zip(&second)
            .zip(&serial)
            .filter(|((a, b), c)| a != b || a != c)
            .count()
            + first.len().abs_diff(second.len());
        checks.push(SuiteCheck::at_most(
            format!("{}_differing_files", config.mode),
            differing as f64,
            0.0,
            format!("{} CSVs compared across two parallel runs and one single-threaded run", first.len()),
        ));
    }
    Ok(checks)
}
