use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::agent::BanditLearner;
use super::audit::estimation_bound;
use super::{BanditError, EpochSchedule, IwMonitorReport, RewardScale};
use crate::dynamics::describe_game;
use crate::game::{MixedStrategy, PolymatrixGame, StrategyProfile, UtilityVector};
use crate::rng::{player_rng, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BanditAgentSpec {
    Learner {
        /// Defaults to 1/(6n).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta: Option<f64>,
        /// Threshold constant of the importance-weighted regret monitor.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        monitor: Option<f64>,
    },
    /// Plays `strategies[(t − 1) mod len]` throughout epoch t.
    Scripted(Vec<MixedStrategy>),
}

impl BanditAgentSpec {
    pub fn learner() -> Self {
        Self::Learner { eta: None, monitor: None }
    }
}

pub fn default_bandit_eta(n: usize) -> f64 {
    1.0 / (6.0 * n.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditConfig {
    #[serde(default)]
    pub schedule: EpochSchedule,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Record offline truth (inner utilities, estimation errors) per epoch.
    #[serde(default = "default_true")]
    pub audit: bool,
    /// Keep every round's actions and rewards.
    #[serde(default)]
    pub log_rounds: bool,
}

fn default_epochs() -> usize {
    12
}

fn default_delta() -> f64 {
    0.05
}

fn default_true() -> bool {
    true
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            schedule: EpochSchedule::Theory,
            epochs: default_epochs(),
            delta: default_delta(),
            audit: true,
            log_rounds: false,
        }
    }
}

/// Offline quantities of one player in one epoch, all in renormalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerEpochAudit {
    /// Inner iterate x^t (the played strategy for scripted players).
    pub inner: MixedStrategy,
    /// u^t = u_i(·, x^t_{−i}).
    pub inner_utility: UtilityVector,
    /// ū^t_ε = u_i(·, x̄^t_{−i,ε}), the quantity the estimator targets.
    pub mixed_utility: UtilityVector,
    /// ‖Δ^t‖∞ = ‖Û^t − ū^t_ε‖∞.
    pub estimation_error: f64,
    /// ‖δ^t‖∞ = ‖û^t − u^t‖∞.
    pub recovery_error: f64,
    pub estimation_bound: f64,
    pub bound_violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerEpoch {
    pub estimate: Option<UtilityVector>,
    pub counts: Option<Vec<u64>>,
    pub unsampled: Vec<usize>,
    pub recovered: Option<UtilityVector>,
    /// Importance-weighted epoch estimate Ũ^t.
    pub iw_estimate: Option<Vec<f64>>,
    pub monitor: Option<IwMonitorReport>,
    pub switched: bool,
    pub audit: Option<PlayerEpochAudit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub t: usize,
    pub b_t: u64,
    pub eps_t: f64,
    /// Global index of the epoch's first round (rounds are numbered from 1).
    pub first_round: u64,
    /// Strategies sampled from at the start of the epoch.
    pub played: StrategyProfile,
    /// TGap of `played` in payoff units; also the per-round gap of every
    /// round of this epoch.
    pub tgap_mixed_avg: f64,
    pub players: Vec<PlayerEpoch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: u64,
    pub epoch: usize,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditMeta {
    pub game: String,
    pub agents: Vec<BanditAgentSpec>,
    pub etas: Vec<Option<f64>>,
    pub config: BanditConfig,
    pub seed: u64,
    pub reward_scale: RewardScale,
    /// Schedule and step sizes satisfy the conditions of the convergence guarantee.
    pub certified: bool,
    pub total_rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditTrajectory {
    pub meta: BanditMeta,
    pub epochs: Vec<EpochRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<Vec<RoundLog>>,
}

enum Agent {
    Learner(Box<BanditLearner>),
    Scripted(Vec<MixedStrategy>, MixedStrategy),
}

impl Agent {
    fn strategy(&self) -> &MixedStrategy {
        match self {
            Self::Learner(l) => l.round_strategy(),
            Self::Scripted(_, x) => x,
        }
    }

    fn fixed_for_epoch(&self) -> bool {
        match self {
            Self::Learner(l) => !l.is_switched(),
            Self::Scripted(..) => true,
        }
    }
}

/// All players run the bandit learner with step size `eta`.
pub fn run_bandit(
    game: &PolymatrixGame,
    schedule: EpochSchedule,
    eta: f64,
    seed: u64,
    delta: f64,
) -> Result<BanditTrajectory, BanditError> {
    let agents = vec![BanditAgentSpec::Learner { eta: Some(eta), monitor: None }; game.num_players()];
    let config = BanditConfig { schedule, delta, ..BanditConfig::default() };
    run_bandit_with_agents(game, &agents, &config, seed)
}

fn sampler(x: &MixedStrategy) -> WeightedIndex<f64> {
    WeightedIndex::new(x.probs()).expect("mixed strategies have positive mass")
}

pub fn run_bandit_with_agents(
    game: &PolymatrixGame,
    specs: &[BanditAgentSpec],
    config: &BanditConfig,
    seed: u64,
) -> Result<BanditTrajectory, BanditError> {
    let n = game.num_players();
    if specs.len() != n {
        return Err(BanditError::Invalid(format!("{} agents for a {n}-player game", specs.len())));
    }
    if config.epochs == 0 {
        return Err(BanditError::Invalid("need at least one epoch".into()));
    }
    if !(config.delta > 0.0 && config.delta < 1.0) {
        return Err(BanditError::Invalid(format!("delta must lie in (0, 1), got {}", config.delta)));
    }
    config.schedule.validate()?;
    let dims = game.action_counts().to_vec();
    let d_max = game.dimension();
    let scale = RewardScale::for_players(n);
    let eta_limit = default_bandit_eta(n);

    let mut etas = Vec::with_capacity(n);
    let mut agents = Vec::with_capacity(n);
    for (i, (spec, &d)) in specs.iter().zip(&dims).enumerate() {
        match spec {
            BanditAgentSpec::Learner { eta, monitor } => {
                let eta = eta.unwrap_or(eta_limit);
                let mut l = BanditLearner::new(d, eta)?;
                if let Some(c) = monitor {
                    l = l.with_monitor(*c, config.delta);
                }
                etas.push(Some(eta));
                agents.push(Agent::Learner(Box::new(l)));
            }
            BanditAgentSpec::Scripted(seq) => {
                if seq.is_empty() || seq.iter().any(|x| x.dim() != d) {
                    return Err(BanditError::Invalid(format!(
                        "scripted agent {i} needs a non-empty list of {d}-action strategies"
                    )));
                }
                etas.push(None);
                agents.push(Agent::Scripted(seq.clone(), seq[0].clone()));
            }
        }
    }

    let certified = config.schedule.is_theory()
        && etas.iter().flatten().all(|&e| e <= eta_limit * (1.0 + 1e-12));
    if !certified {
        log::warn!(
            "bandit run is not certified: needs a theory schedule and step sizes at most 1/(6n) = {eta_limit}"
        );
    }

    let mut rngs: Vec<SimRng> = (0..n).map(|i| player_rng(seed, i)).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut round_log = config.log_rounds.then(Vec::new);
    let mut round = 0u64;
    let mut actions = vec![0usize; n];
    let mut rewards = vec![0.0; n];

    for t in 1..=config.epochs {
        let b_t = config.schedule.epoch_length(t, d_max);
        let eps = config.schedule.mixing(t);
        for a in agents.iter_mut() {
            match a {
                Agent::Learner(l) => l.begin_epoch(eps)?,
                Agent::Scripted(seq, x) => *x = seq[(t - 1) % seq.len()].clone(),
            }
        }
        let played = StrategyProfile::new(agents.iter().map(|a| a.strategy().clone()).collect());
        let tgap = game.total_gap(&played)?;
        let first_round = round + 1;
        let fixed: Vec<Option<WeightedIndex<f64>>> = agents
            .iter()
            .map(|a| a.fixed_for_epoch().then(|| sampler(a.strategy())))
            .collect();

        for _ in 0..b_t {
            round += 1;
            for (i, a) in agents.iter().enumerate() {
                actions[i] = match &fixed[i] {
                    Some(s) => s.sample(&mut rngs[i]),
                    None => sampler(a.strategy()).sample(&mut rngs[i]),
                };
            }
            for i in 0..n {
                rewards[i] = scale.apply(game.pure_utility(i, &actions));
                if let Agent::Learner(l) = &mut agents[i] {
                    l.record(actions[i], rewards[i])?;
                }
            }
            if let Some(log) = round_log.as_mut() {
                log.push(RoundLog { round, epoch: t, actions: actions.clone(), rewards: rewards.clone() });
            }
        }

        let inner = StrategyProfile::new(
            agents
                .iter()
                .map(|a| match a {
                    Agent::Learner(l) if !l.is_switched() => l.inner_strategy().clone(),
                    other => other.strategy().clone(),
                })
                .collect(),
        );
        let mut players = Vec::with_capacity(n);
        for (i, a) in agents.iter_mut().enumerate() {
            let mut rec = match a {
                Agent::Learner(l) => {
                    let iw = l.monitor().map(|m| m.epoch_estimate().to_vec());
                    let out = l.end_epoch()?;
                    PlayerEpoch {
                        unsampled: out.estimate.as_ref().map(|e| e.unsampled.clone()).unwrap_or_default(),
                        counts: out.estimate.as_ref().map(|e| e.counts.clone()),
                        estimate: out.estimate.map(|e| e.estimate),
                        recovered: out.recovered,
                        iw_estimate: iw.filter(|_| out.monitor.is_some()),
                        monitor: out.monitor,
                        switched: l.is_switched(),
                        audit: None,
                    }
                }
                Agent::Scripted(..) => PlayerEpoch {
                    estimate: None,
                    counts: None,
                    unsampled: Vec::new(),
                    recovered: None,
                    iw_estimate: None,
                    monitor: None,
                    switched: false,
                    audit: None,
                },
            };
            if config.audit {
                if let (Some(est), Some(rec_u)) = (&rec.estimate, &rec.recovered) {
                    let inner_utility = scale.apply_vector(&game.utility_vector(i, &inner)?);
                    let mixed_utility = scale.apply_vector(&game.utility_vector(i, &played)?);
                    let estimation_error = est.sup_distance(&mixed_utility);
                    let bound = estimation_bound(d_max, b_t, eps, t, config.delta);
                    rec.audit = Some(PlayerEpochAudit {
                        inner: inner[i].clone(),
                        recovery_error: rec_u.sup_distance(&inner_utility),
                        inner_utility,
                        mixed_utility,
                        estimation_error,
                        estimation_bound: bound,
                        bound_violated: estimation_error > bound,
                    });
                }
            }
            players.push(rec);
        }
        epochs.push(EpochRecord { t, b_t, eps_t: eps, first_round, played, tgap_mixed_avg: tgap, players });
    }

    Ok(BanditTrajectory {
        meta: BanditMeta {
            game: describe_game(game),
            agents: specs.to_vec(),
            etas,
            config: config.clone(),
            seed,
            reward_scale: scale,
            certified,
            total_rounds: round,
        },
        epochs,
        rounds: round_log,
    })
}

impl BanditTrajectory {
    pub fn num_players(&self) -> usize {
        self.meta.agents.len()
    }

    /// Columns `t, B_t, eps_t, tgap_mixed_avg, delta_1..delta_n, bound, flags`.
    /// `delta_i` is ‖Δ^t_i‖∞ (empty without audit data); `flags` lists
    /// `unsampled_p<i>`, `violated_p<i>`, `switched_p<i>` and `noncertified`
    /// separated by `;`.
    pub fn write_epoch_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.num_players();
        let mut header = vec!["t".to_string(), "B_t".into(), "eps_t".into(), "tgap_mixed_avg".into()];
        header.extend((1..=n).map(|i| format!("delta_{i}")));
        header.extend(["bound".to_string(), "flags".into()]);
        writeln!(out, "{}", header.join(","))?;
        for e in &self.epochs {
            write!(out, "{},{},{},{}", e.t, e.b_t, e.eps_t, e.tgap_mixed_avg)?;
            let mut bound = None;
            let mut flags = Vec::new();
            for (i, p) in e.players.iter().enumerate() {
                match &p.audit {
                    Some(a) => {
                        write!(out, ",{}", a.estimation_error)?;
                        bound = Some(a.estimation_bound);
                        if a.bound_violated {
                            flags.push(format!("violated_p{}", i + 1));
                        }
                    }
                    None => write!(out, ",")?,
                }
                if !p.unsampled.is_empty() {
                    flags.push(format!("unsampled_p{}", i + 1));
                }
                if p.switched {
                    flags.push(format!("switched_p{}", i + 1));
                }
            }
            if !self.meta.certified {
                flags.push("noncertified".into());
            }
            match bound {
                Some(b) => write!(out, ",{b}")?,
                None => write!(out, ",")?,
            }
            writeln!(out, ",{}", flags.join(";"))?;
        }
        Ok(())
    }

    pub fn epoch_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_epoch_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// Columns `round, epoch, a_1..a_n, r_1..r_n` (renormalized rewards).
    pub fn write_round_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let Some(rounds) = &self.rounds else {
            return Ok(());
        };
        let n = self.num_players();
        let mut header = vec!["round".to_string(), "epoch".into()];
        header.extend((1..=n).map(|i| format!("a_{i}")));
        header.extend((1..=n).map(|i| format!("r_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for r in rounds {
            write!(out, "{},{}", r.round, r.epoch)?;
            for a in &r.actions {
                write!(out, ",{a}")?;
            }
            for v in &r.rewards {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Epoch at which player `i` switched to the fallback, if ever.
    pub fn switch_epoch(&self, i: usize) -> Option<usize> {
        self.epochs.iter().find(|e| e.players[i].switched).map(|e| e.t)
    }

    pub fn final_gap(&self) -> f64 {
        self.epochs.last().map_or(f64::NAN, |e| e.tgap_mixed_avg)
    }
}
