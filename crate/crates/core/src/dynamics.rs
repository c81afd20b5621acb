//! Uncoupled self-play with full gradient feedback.
//!
//! Each round every player commits to a strategy, then each player receives
//! only its own utility vector u_i(·, x^t_{−i}). Players never see one
//! another's state: the loop hands each of them a single vector per round.
//!
//! Alongside the played sequence the loop records the offline quantities the
//! analysis needs: the inner (unplayed) iterates of wrapped learners and the
//! utilities they would have received, gaps, and regrets.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::a2l::{A2l, WeightRule};
use crate::game::{gaps_from_vectors, GameError, MixedStrategy, PolymatrixGame, StrategyProfile, UtilityVector};
use crate::learners::{AnytimeMwu, BaseAlgorithm, Learner, LearnerError, LearnerState, MultiplicativeWeights};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("player {player}: {source}")]
    Setup {
        player: usize,
        #[source]
        source: LearnerError,
    },
    #[error("round {round}, player {player}: {source}")]
    Round {
        round: usize,
        player: usize,
        #[source]
        source: LearnerError,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Algorithm name as written in configs: `mwu`, `omwu`, `a2l-mwu`, `a2l-omwu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AlgorithmName {
    pub base: BaseAlgorithm,
    pub reduced: bool,
}

impl AlgorithmName {
    pub const MWU: Self = Self { base: BaseAlgorithm::Mwu, reduced: false };
    pub const OMWU: Self = Self { base: BaseAlgorithm::Omwu, reduced: false };
    pub const A2L_MWU: Self = Self { base: BaseAlgorithm::Mwu, reduced: true };
    pub const A2L_OMWU: Self = Self { base: BaseAlgorithm::Omwu, reduced: true };
}

impl std::str::FromStr for AlgorithmName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (reduced, base) = match s.strip_prefix("a2l-") {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let base = match base {
            "mwu" => BaseAlgorithm::Mwu,
            "omwu" => BaseAlgorithm::Omwu,
            _ => {
                return Err(format!(
                    "unknown algorithm `{s}` (expected mwu, omwu, a2l-mwu or a2l-omwu)"
                ))
            }
        };
        Ok(Self { base, reduced })
    }
}

impl TryFrom<String> for AlgorithmName {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<AlgorithmName> for String {
    fn from(value: AlgorithmName) -> Self {
        value.to_string()
    }
}

impl std::fmt::Display for AlgorithmName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.reduced {
            f.write_str("a2l-")?;
        }
        write!(f, "{}", self.base)
    }
}

/// Step size that the gap bound for zero-sum polymatrix games allows:
/// η = 1/(2(n−1)). Single-player games get η = 1.
pub fn default_eta(n: usize) -> f64 {
    if n <= 1 {
        1.0
    } else {
        1.0 / (2.0 * (n - 1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub algorithm: AlgorithmName,
    /// Defaults to [`default_eta`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Averaging weights of the reduction; ignored by bare learners.
    #[serde(default)]
    pub weights: WeightRule,
    /// Threshold constant of the regret monitor; `None` disables it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robust: Option<f64>,
    /// Interior starting point; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<MixedStrategy>,
}

impl LearnerSpec {
    pub fn new(algorithm: AlgorithmName) -> Self {
        Self {
            algorithm,
            eta: None,
            weights: WeightRule::Uniform,
            robust: None,
            initial: None,
        }
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self
    }

    pub fn with_weights(mut self, weights: WeightRule) -> Self {
        self.weights = weights;
        self
    }

    pub fn with_robust(mut self, c: f64) -> Self {
        self.robust = Some(c);
        self
    }

    pub fn with_initial(mut self, x: MixedStrategy) -> Self {
        self.initial = Some(x);
        self
    }

    /// The fresh inner learner this spec describes, without wrapper or monitor.
    pub fn base_learner(&self, d: usize, n: usize) -> Result<MultiplicativeWeights, LearnerError> {
        let mut state = LearnerState::new(d, self.eta.unwrap_or_else(|| default_eta(n)))?;
        if let Some(x) = &self.initial {
            state = state.with_initial_strategy(x)?;
        }
        Ok(MultiplicativeWeights::from_state(self.algorithm.base, state))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerSpec {
    Learner(LearnerSpec),
    /// Plays `strategies[(t − 1) mod len]` in round t, ignoring feedback.
    Scripted(Vec<MixedStrategy>),
}

impl PlayerSpec {
    pub fn describe(&self) -> String {
        match self {
            Self::Learner(spec) => spec.algorithm.to_string(),
            Self::Scripted(_) => "scripted".into(),
        }
    }
}

impl From<LearnerSpec> for PlayerSpec {
    fn from(value: LearnerSpec) -> Self {
        Self::Learner(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MonitorDecision {
    Continue,
    Switch,
}

/// Tracks a player's own regret on the played sequence and flags it once it
/// exceeds c·K·(1 + ln t), K = Σ_i ln d_i / η. Honest self-play of the
/// reduction keeps even the dynamic regret below K·(1 + ln t).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMonitor {
    c: f64,
    scale: f64,
    cum: Vec<f64>,
    realized: f64,
    t: usize,
}

impl GradientMonitor {
    pub fn new(d: usize, scale: f64, c: f64) -> Self {
        Self {
            c,
            scale,
            cum: vec![0.0; d],
            realized: 0.0,
            t: 0,
        }
    }

    pub fn threshold(&self, t: usize) -> f64 {
        self.c * self.scale * (1.0 + (t.max(1) as f64).ln())
    }

    pub fn regret(&self) -> f64 {
        if self.t == 0 {
            return 0.0;
        }
        let best = self.cum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        best - self.realized
    }

    pub fn update(&mut self, x: &MixedStrategy, u: &UtilityVector) -> MonitorDecision {
        for (c, v) in self.cum.iter_mut().zip(u.values()) {
            *c += v;
        }
        self.realized += u.dot(x);
        self.t += 1;
        if self.regret() > self.threshold(self.t) {
            MonitorDecision::Switch
        } else {
            MonitorDecision::Continue
        }
    }
}

/// Replays a player's own prefix through a fresh [`GradientMonitor`] and
/// reports the decision after the last round.
pub fn robust_gradient_monitor(
    strategies: &[MixedStrategy],
    utilities: &[UtilityVector],
    scale: f64,
    c: f64,
) -> MonitorDecision {
    let Some(first) = strategies.first() else {
        return MonitorDecision::Continue;
    };
    let mut monitor = GradientMonitor::new(first.dim(), scale, c);
    let mut decision = MonitorDecision::Continue;
    for (x, u) in strategies.iter().zip(utilities) {
        decision = monitor.update(x, u);
    }
    decision
}

enum Core {
    Plain(MultiplicativeWeights),
    Reduced(A2l<MultiplicativeWeights>),
    Scripted(Vec<MixedStrategy>),
}

struct Player {
    core: Core,
    monitor: Option<GradientMonitor>,
    fallback: Option<AnytimeMwu>,
    switched: bool,
    rule: WeightRule,
    t: usize,
}

impl Player {
    fn new(spec: &PlayerSpec, d: usize, game: &PolymatrixGame) -> Result<Self, LearnerError> {
        let n = game.num_players();
        match spec {
            PlayerSpec::Scripted(seq) => {
                if seq.is_empty() {
                    return Err(LearnerError::EmptyTrajectory);
                }
                if let Some(x) = seq.iter().find(|x| x.dim() != d) {
                    return Err(LearnerError::DimensionMismatch { expected: d, actual: x.dim() });
                }
                Ok(Self {
                    core: Core::Scripted(seq.clone()),
                    monitor: None,
                    fallback: None,
                    switched: false,
                    rule: WeightRule::Uniform,
                    t: 0,
                })
            }
            PlayerSpec::Learner(spec) => {
                let base = spec.base_learner(d, n)?;
                let eta = base.state().eta();
                let (core, rule) = if spec.algorithm.reduced {
                    (Core::Reduced(A2l::new(base, spec.weights)), spec.weights)
                } else {
                    (Core::Plain(base), WeightRule::Uniform)
                };
                let monitor = spec
                    .robust
                    .map(|c| GradientMonitor::new(d, game.log_dim_sum() / eta, c));
                Ok(Self {
                    core,
                    monitor,
                    fallback: None,
                    switched: false,
                    rule,
                    t: 0,
                })
            }
        }
    }

    /// (played, inner) strategies for the coming round.
    fn next(&mut self) -> Result<(MixedStrategy, MixedStrategy), LearnerError> {
        if let Some(f) = self.fallback.as_mut() {
            let x = f.next_strategy()?;
            return Ok((x.clone(), x));
        }
        match &mut self.core {
            Core::Plain(l) => {
                let x = l.next_strategy()?;
                Ok((x.clone(), x))
            }
            Core::Reduced(l) => {
                let x = l.next_strategy()?;
                let inner = l.last_inner_strategy().expect("set by next_strategy").clone();
                Ok((x, inner))
            }
            Core::Scripted(seq) => {
                let x = seq[self.t % seq.len()].clone();
                Ok((x.clone(), x))
            }
        }
    }

    fn observe(&mut self, x: &MixedStrategy, u: &UtilityVector) -> Result<(), LearnerError> {
        self.t += 1;
        if let Some(f) = self.fallback.as_mut() {
            return f.observe(u);
        }
        match &mut self.core {
            Core::Plain(l) => l.observe(u)?,
            Core::Reduced(l) => l.observe(u)?,
            Core::Scripted(_) => {}
        }
        if let Some(m) = self.monitor.as_mut() {
            if m.update(x, u) == MonitorDecision::Switch {
                log::info!("regret monitor switched to the fallback learner after round {}", self.t);
                self.fallback = Some(AnytimeMwu::new(u.dim())?);
                self.switched = true;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    /// Played strategies x̄^t.
    pub profile: StrategyProfile,
    /// u_i(·, x̄^t_{−i}) as received by each player.
    pub utility_vectors: Vec<UtilityVector>,
    /// Inner iterates x^t; equal to `profile` for unwrapped players.
    pub inner_profile: StrategyProfile,
    /// u_i(·, x^t_{−i}) at the inner profile.
    pub inner_utilities: Vec<UtilityVector>,
    /// TGap of the played profile.
    pub tgap_played: f64,
    /// TGap of the running weighted average of inner iterates.
    pub tgap_inner_avg: f64,
    pub instant_regret: Vec<f64>,
    /// Reg_i(t) of the played sequence.
    pub regret: Vec<f64>,
    /// DReg_i(t) of the played sequence.
    pub dynamic_regret: Vec<f64>,
    /// max_a Σ_k α_k u^k[a] − Σ_k α_k ⟨u^k, x^k⟩ on inner iterates and utilities.
    pub inner_regret: Vec<f64>,
    /// Σ_{k≤t} α_k for each player's weight rule.
    pub inner_weight: Vec<f64>,
    pub switched: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub game: String,
    pub players: Vec<PlayerSpec>,
    pub rounds: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub rounds: Vec<RoundRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub regret: Vec<f64>,
    pub dynamic_regret: Vec<f64>,
}

pub fn describe_game(game: &PolymatrixGame) -> String {
    format!(
        "polymatrix n={} d={:?} edges={} zero_sum={}",
        game.num_players(),
        game.action_counts(),
        game.edges().len(),
        game.is_zero_sum()
    )
}

/// Runs `rounds` rounds of simultaneous play. The loop itself draws no
/// randomness; `seed` is recorded so the run can be reproduced from configs
/// that generate the game from it.
pub fn run_full_feedback(
    game: &PolymatrixGame,
    specs: &[PlayerSpec],
    rounds: usize,
    seed: u64,
) -> Result<Trajectory, DynamicsError> {
    let n = game.num_players();
    if specs.len() != n {
        return Err(DynamicsError::Invalid(format!(
            "{} player specs for a {n}-player game",
            specs.len()
        )));
    }
    if rounds == 0 {
        return Err(DynamicsError::Invalid("need at least one round".into()));
    }
    let dims = game.action_counts().to_vec();
    let mut players = specs
        .iter()
        .zip(&dims)
        .enumerate()
        .map(|(i, (s, &d))| Player::new(s, d, game).map_err(|source| DynamicsError::Setup { player: i, source }))
        .collect::<Result<Vec<_>, _>>()?;

    let mut cum_played: Vec<Vec<f64>> = dims.iter().map(|&d| vec![0.0; d]).collect();
    let mut realized = vec![0.0; n];
    let mut dreg = vec![0.0; n];
    let mut cum_inner: Vec<Vec<f64>> = dims.iter().map(|&d| vec![0.0; d]).collect();
    let mut realized_inner = vec![0.0; n];
    let mut weight = vec![0.0; n];
    let mut inner_avg: Vec<Vec<f64>> = dims.iter().map(|&d| vec![0.0; d]).collect();
    let mut records = Vec::with_capacity(rounds);

    for t in 1..=rounds {
        let mut played = Vec::with_capacity(n);
        let mut inner = Vec::with_capacity(n);
        for (i, p) in players.iter_mut().enumerate() {
            let (x, y) = p.next().map_err(|source| DynamicsError::Round { round: t, player: i, source })?;
            played.push(x);
            inner.push(y);
        }
        let profile = StrategyProfile::new(played);
        let inner_profile = StrategyProfile::new(inner);
        let us = game.utility_vectors_unchecked(&profile);
        let vs = game.utility_vectors_unchecked(&inner_profile);
        for (i, p) in players.iter_mut().enumerate() {
            p.observe(&profile[i], &us[i])
                .map_err(|source| DynamicsError::Round { round: t, player: i, source })?;
        }

        let gaps = gaps_from_vectors(&us, &profile);
        let mut regret = vec![0.0; n];
        let mut inner_regret = vec![0.0; n];
        for i in 0..n {
            let u = &us[i];
            for (c, v) in cum_played[i].iter_mut().zip(u.values()) {
                *c += v;
            }
            realized[i] += u.dot(&profile[i]);
            dreg[i] += gaps[i];
            regret[i] = max(&cum_played[i]) - realized[i];

            let alpha = players[i].rule.weight(t);
            weight[i] += alpha;
            let v = &vs[i];
            for (c, x) in cum_inner[i].iter_mut().zip(v.values()) {
                *c += alpha * x;
            }
            realized_inner[i] += alpha * v.dot(&inner_profile[i]);
            inner_regret[i] = max(&cum_inner[i]) - realized_inner[i];

            let step = alpha / weight[i];
            for (a, x) in inner_avg[i].iter_mut().zip(inner_profile[i].probs()) {
                *a += step * (x - *a);
            }
        }
        let avg_profile = StrategyProfile::new(
            inner_avg
                .iter()
                .map(|a| {
                    let total: f64 = a.iter().sum();
                    MixedStrategy::from_normalized(a.iter().map(|v| v / total).collect())
                })
                .collect(),
        );
        let avg_us = game.utility_vectors_unchecked(&avg_profile);
        let tgap_inner_avg = gaps_from_vectors(&avg_us, &avg_profile).iter().sum();

        records.push(RoundRecord {
            t,
            profile,
            utility_vectors: us,
            inner_profile,
            inner_utilities: vs,
            tgap_played: gaps.iter().sum(),
            tgap_inner_avg,
            instant_regret: gaps,
            regret,
            dynamic_regret: dreg.clone(),
            inner_regret,
            inner_weight: weight.clone(),
            switched: players.iter().map(|p| p.switched).collect(),
        });
    }

    Ok(Trajectory {
        meta: TrajectoryMeta {
            game: describe_game(game),
            players: specs.to_vec(),
            rounds,
            seed,
        },
        rounds: records,
    })
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub fn regret_report(trajectory: &Trajectory) -> RegretReport {
    let last = trajectory.rounds.last().expect("trajectories have at least one round");
    RegretReport {
        regret: last.regret.clone(),
        dynamic_regret: last.dynamic_regret.clone(),
    }
}

impl Trajectory {
    pub fn num_players(&self) -> usize {
        self.meta.players.len()
    }

    /// Columns `t, tgap_last, tgap_avg, reg_1..reg_n, dreg_1..dreg_n`, where
    /// `tgap_last` is the played profile's gap and `tgap_avg` the gap of the
    /// running average of inner iterates. Floats use Rust's shortest
    /// round-trip formatting.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.num_players();
        let mut header = vec!["t".to_string(), "tgap_last".into(), "tgap_avg".into()];
        header.extend((1..=n).map(|i| format!("reg_{i}")));
        header.extend((1..=n).map(|i| format!("dreg_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for r in &self.rounds {
            write!(out, "{},{},{}", r.t, r.tgap_played, r.tgap_inner_avg)?;
            for v in r.regret.iter().chain(&r.dynamic_regret) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn played_strategies(&self, i: usize) -> Vec<MixedStrategy> {
        self.rounds.iter().map(|r| r.profile[i].clone()).collect()
    }

    pub fn received_utilities(&self, i: usize) -> Vec<UtilityVector> {
        self.rounds.iter().map(|r| r.utility_vectors[i].clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{generate_game, GameKind, GraphSpec, Matrix};

    fn pennies() -> PolymatrixGame {
        generate_game(GameKind::MatchingPennies, 2, 2, GraphSpec::Complete, 0).unwrap()
    }

    #[test]
    fn algorithm_names_round_trip() {
        for s in ["mwu", "omwu", "a2l-mwu", "a2l-omwu"] {
            assert_eq!(s.parse::<AlgorithmName>().unwrap().to_string(), s);
        }
        assert!("a2l-sgd".parse::<AlgorithmName>().is_err());
    }

    #[test]
    fn a2l_omwu_on_pennies_meets_gap_bound() {
        let spec: PlayerSpec = LearnerSpec::new(AlgorithmName::A2L_OMWU).with_eta(0.5).into();
        let traj = run_full_feedback(&pennies(), &[spec.clone(), spec], 1000, 0).unwrap();
        let bound = 2.0 * 2f64.ln() / (0.5 * 1000.0);
        assert!(traj.rounds.last().unwrap().tgap_played <= bound + 1e-9);
    }

    #[test]
    fn single_player_stays_uniform() {
        let game = PolymatrixGame::new(vec![3], vec![], false).unwrap();
        let spec: PlayerSpec = LearnerSpec::new(AlgorithmName::OMWU).into();
        let traj = run_full_feedback(&game, &[spec], 20, 0).unwrap();
        for r in &traj.rounds {
            assert_eq!(r.utility_vectors[0].values(), &[0.0; 3]);
            assert_eq!(r.profile[0], MixedStrategy::uniform(3));
        }
    }

    #[test]
    fn best_responder_against_frozen_opponent_has_no_dynamic_regret() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let game = PolymatrixGame::bimatrix(a.clone(), a, false).unwrap();
        let specs = [
            PlayerSpec::Scripted(vec![MixedStrategy::pure(2, 0)]),
            PlayerSpec::Scripted(vec![MixedStrategy::pure(2, 0)]),
        ];
        let traj = run_full_feedback(&game, &specs, 10, 0).unwrap();
        let report = regret_report(&traj);
        assert_eq!(report.dynamic_regret, vec![0.0, 0.0]);
        assert_eq!(report.regret, vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_mismatched_specs() {
        let spec: PlayerSpec = LearnerSpec::new(AlgorithmName::OMWU).into();
        assert!(matches!(
            run_full_feedback(&pennies(), std::slice::from_ref(&spec), 5, 0),
            Err(DynamicsError::Invalid(_))
        ));
        let bad = PlayerSpec::Scripted(vec![MixedStrategy::uniform(3)]);
        assert!(matches!(
            run_full_feedback(&pennies(), &[spec, bad], 5, 0),
            Err(DynamicsError::Setup { player: 1, .. })
        ));
    }

    #[test]
    fn monitor_prefix_function() {
        assert_eq!(robust_gradient_monitor(&[], &[], 1.0, 2.0), MonitorDecision::Continue);
        let x = vec![MixedStrategy::pure(2, 1)];
        let u = vec![UtilityVector::new(vec![1.0, 0.0]).unwrap()];
        assert_eq!(robust_gradient_monitor(&x, &u, 1.0, 2.0), MonitorDecision::Continue);
        let xs = vec![MixedStrategy::pure(2, 1); 50];
        let us = vec![UtilityVector::new(vec![1.0, 0.0]).unwrap(); 50];
        assert_eq!(robust_gradient_monitor(&xs, &us, 1.0, 2.0), MonitorDecision::Switch);
    }

    #[test]
    fn csv_layout() {
        let spec: PlayerSpec = LearnerSpec::new(AlgorithmName::A2L_OMWU).into();
        let traj = run_full_feedback(&pennies(), &[spec.clone(), spec], 3, 0).unwrap();
        let csv = traj.csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,tgap_last,tgap_avg,reg_1,reg_2,dreg_1,dreg_2");
        assert_eq!(lines.count(), 3);
    }
}
