use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::a2l::WeightRule;
use crate::bandit::{default_bandit_eta, BanditAgentSpec, BanditConfig, EpochSchedule};
use crate::dynamics::{default_eta, AlgorithmName, LearnerSpec, PlayerSpec};
use crate::fisher::{FisherMarket, MarketFile};
use crate::game::GameFile;
use crate::game::{generate_game, GameKind, GraphSpec, PolymatrixGame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Gradient,
    Bandit,
    Fisher,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gradient => "gradient",
            Self::Bandit => "bandit",
            Self::Fisher => "fisher",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FisherDynamics {
    #[serde(rename = "prd")]
    Prd,
    #[serde(rename = "a2l-prd")]
    A2lPrd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub kind: GameKind,
    #[serde(default = "two")]
    pub n: usize,
    #[serde(default = "two")]
    pub d: usize,
    #[serde(default = "complete")]
    pub graph: GraphSpec,
    /// Game seed; the run seed when absent, so each seed gets its own game.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn two() -> usize {
    2
}

fn complete() -> GraphSpec {
    GraphSpec::Complete
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameSource {
    File(PathBuf),
    Generate(GenerateSpec),
    Inline(GameFile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMarketSpec {
    pub agents: usize,
    pub goods: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketSource {
    File(PathBuf),
    Random(RandomMarketSpec),
    Inline(MarketFile),
}

/// One experiment. Relative paths are resolved against the working
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game: Option<GameSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub market: Option<MarketSource>,
    /// Algorithm for every player when `players` is absent.
    #[serde(default = "default_algorithm")]
    pub algorithm: AlgorithmName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub players: Option<Vec<PlayerSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<BanditAgentSpec>>,
    /// Step size for players that do not set their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default)]
    pub weights: WeightRule,
    /// Regret-monitor threshold constant for every default player.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robust: Option<f64>,
    /// Rounds (gradient mode) or market steps (fisher mode).
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub schedule: EpochSchedule,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub log_rounds: bool,
    #[serde(default = "default_fisher_dynamics")]
    pub fisher_dynamics: FisherDynamics,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Refuse to run unless every step-size and schedule condition of the
    /// convergence guarantees holds.
    #[serde(default)]
    pub certified: bool,
}

fn default_algorithm() -> AlgorithmName {
    AlgorithmName::A2L_OMWU
}

fn default_rounds() -> usize {
    1000
}

fn default_epochs() -> usize {
    12
}

fn default_delta() -> f64 {
    0.05
}

fn default_fisher_dynamics() -> FisherDynamics {
    FisherDynamics::A2lPrd
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// A condition of the convergence guarantees, evaluated on the prepared
/// games.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryCondition {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl ExperimentConfig {
    /// Defaults for everything but the mode.
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            game: None,
            market: None,
            algorithm: default_algorithm(),
            players: None,
            agents: None,
            eta: None,
            weights: WeightRule::Uniform,
            robust: None,
            rounds: default_rounds(),
            epochs: default_epochs(),
            schedule: EpochSchedule::Theory,
            delta: default_delta(),
            log_rounds: false,
            fisher_dynamics: default_fisher_dynamics(),
            seeds: default_seeds(),
            out_dir: default_out_dir(),
            certified: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(super::io_err(path))?;
        Self::from_json(&text)
    }

    pub fn bandit_config(&self) -> BanditConfig {
        BanditConfig {
            schedule: self.schedule,
            epochs: self.epochs,
            delta: self.delta,
            audit: true,
            log_rounds: self.log_rounds,
        }
    }

    /// Checks that need no game: every problem is collected.
    fn static_issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.seeds.is_empty() {
            issues.push("`seeds` is empty".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            issues.push("`seeds` contains duplicates".into());
        }
        if let Some(eta) = self.eta {
            if !(eta.is_finite() && eta > 0.0) {
                issues.push(format!("`eta` must be positive and finite, got {eta}"));
            }
        }
        if let Some(c) = self.robust {
            if !(c.is_finite() && c > 0.0) {
                issues.push(format!("`robust` must be positive and finite, got {c}"));
            }
        }
        match self.mode {
            Mode::Gradient | Mode::Bandit => {
                match &self.game {
                    None => issues.push(format!("{} mode needs `game`", self.mode)),
                    Some(GameSource::File(p)) if !p.is_file() => {
                        issues.push(format!("game file {} does not exist", p.display()))
                    }
                    _ => {}
                }
                if self.market.is_some() {
                    issues.push(format!("`market` is not used in {} mode", self.mode));
                }
            }
            Mode::Fisher => {
                match &self.market {
                    None => issues.push("fisher mode needs `market`".into()),
                    Some(MarketSource::File(p)) if !p.is_file() => {
                        issues.push(format!("market file {} does not exist", p.display()))
                    }
                    _ => {}
                }
                if self.game.is_some() {
                    issues.push("`game` is not used in fisher mode".into());
                }
            }
        }
        match self.mode {
            Mode::Gradient | Mode::Fisher if self.rounds == 0 => issues.push("`rounds` must be at least 1".into()),
            Mode::Bandit => {
                if self.epochs == 0 {
                    issues.push("`epochs` must be at least 1".into());
                }
                if let Err(e) = self.schedule.validate() {
                    issues.push(e.to_string());
                }
                if !(self.delta > 0.0 && self.delta < 1.0) {
                    issues.push(format!("`delta` must lie in (0, 1), got {}", self.delta));
                }
                if self.players.is_some() {
                    issues.push("bandit mode takes `agents`, not `players`".into());
                }
            }
            _ => {}
        }
        if self.mode != Mode::Bandit && self.agents.is_some() {
            issues.push(format!("`agents` is not used in {} mode", self.mode));
        }
        if self.mode == Mode::Fisher && self.certified {
            issues.push("fisher mode has no certified variant".into());
        }
        issues
    }

    /// Static validation: every problem found is reported at once.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let issues = self.static_issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Config(issues))
        }
    }

    pub(super) fn game_for_seed(&self, seed: u64) -> Result<PolymatrixGame, String> {
        let game = match self.game.as_ref().ok_or("no game source")? {
            GameSource::File(p) => PolymatrixGame::load(p).map_err(|e| format!("{}: {e}", p.display())),
            GameSource::Generate(g) => generate_game(g.kind, g.n, g.d, g.graph, g.seed.unwrap_or(seed))
                .map_err(|e| format!("generating {}: {e}", g.kind)),
            GameSource::Inline(f) => {
                PolymatrixGame::from_json(&serde_json::to_string(f).map_err(|e| e.to_string())?)
                    .map_err(|e| format!("inline game: {e}"))
            }
        }?;
        Ok(game)
    }

    pub(super) fn market_for_seed(&self, seed: u64) -> Result<FisherMarket, String> {
        match self.market.as_ref().ok_or("no market source")? {
            MarketSource::File(p) => FisherMarket::load(p).map_err(|e| format!("{}: {e}", p.display())),
            MarketSource::Random(r) => FisherMarket::random_linear(r.agents, r.goods, r.seed.unwrap_or(seed))
                .map_err(|e| format!("random market: {e}")),
            MarketSource::Inline(f) => {
                FisherMarket::linear(f.budgets.clone(), f.valuations.clone()).map_err(|e| format!("inline market: {e}"))
            }
        }
    }

    pub(super) fn player_specs(&self, game: &PolymatrixGame) -> Result<Vec<PlayerSpec>, String> {
        let n = game.num_players();
        match &self.players {
            Some(p) if p.len() != n => Err(format!("{} player specs for a {n}-player game", p.len())),
            Some(p) => Ok(p
                .iter()
                .map(|s| match s {
                    PlayerSpec::Learner(l) if l.eta.is_none() && self.eta.is_some() => {
                        PlayerSpec::Learner(LearnerSpec { eta: self.eta, ..l.clone() })
                    }
                    other => other.clone(),
                })
                .collect()),
            None => {
                let mut spec = LearnerSpec::new(self.algorithm).with_weights(self.weights);
                spec.eta = self.eta;
                spec.robust = self.robust;
                Ok(vec![PlayerSpec::Learner(spec); n])
            }
        }
    }

    pub(super) fn bandit_agents(&self, game: &PolymatrixGame) -> Result<Vec<BanditAgentSpec>, String> {
        let n = game.num_players();
        match &self.agents {
            Some(a) if a.len() != n => Err(format!("{} agents for a {n}-player game", a.len())),
            Some(a) => Ok(a
                .iter()
                .map(|s| match s {
                    BanditAgentSpec::Learner { eta: None, monitor } if self.eta.is_some() => {
                        BanditAgentSpec::Learner { eta: self.eta, monitor: *monitor }
                    }
                    other => other.clone(),
                })
                .collect()),
            None => Ok(vec![BanditAgentSpec::Learner { eta: self.eta, monitor: self.robust }; n]),
        }
    }

    /// Evaluates the guarantee conditions for one prepared game.
    pub(super) fn theory_conditions(&self, game: &PolymatrixGame) -> Vec<TheoryCondition> {
        let n = game.num_players();
        let mut out = vec![TheoryCondition {
            name: "zero_sum".into(),
            pass: game.is_zero_sum(),
            detail: format!("game is {}zero-sum", if game.is_zero_sum() { "" } else { "not " }),
        }];
        match self.mode {
            Mode::Gradient => {
                let limit = default_eta(n);
                let specs = self.player_specs(game).unwrap_or_default();
                let mut etas = Vec::new();
                let mut all_a2l_omwu = true;
                for s in &specs {
                    match s {
                        PlayerSpec::Learner(l) => {
                            etas.push(l.eta.unwrap_or(limit));
                            all_a2l_omwu &= l.algorithm == AlgorithmName::A2L_OMWU;
                        }
                        PlayerSpec::Scripted(_) => all_a2l_omwu = false,
                    }
                }
                let worst = etas.iter().copied().fold(0.0, f64::max);
                out.push(TheoryCondition {
                    name: "eta_bound".into(),
                    pass: worst <= limit,
                    detail: format!(
                        "largest eta {worst} vs 1/(2(n-1)) = {limit}, the step size under which the last-iterate gap bound sum_i ln d_i/(eta T) holds"
                    ),
                });
                out.push(TheoryCondition {
                    name: "algorithm".into(),
                    pass: all_a2l_omwu,
                    detail: "every player runs a2l-omwu".into(),
                });
            }
            Mode::Bandit => {
                let limit = default_bandit_eta(n);
                let agents = self.bandit_agents(game).unwrap_or_default();
                let mut worst: f64 = 0.0;
                let mut all_learners = true;
                for a in &agents {
                    match a {
                        BanditAgentSpec::Learner { eta, .. } => worst = worst.max(eta.unwrap_or(limit)),
                        BanditAgentSpec::Scripted(_) => all_learners = false,
                    }
                }
                out.push(TheoryCondition {
                    name: "eta_bound".into(),
                    pass: worst <= limit,
                    detail: format!("largest eta {worst} vs 1/(6n) = {limit}"),
                });
                out.push(TheoryCondition {
                    name: "schedule".into(),
                    pass: self.schedule.is_theory(),
                    detail: format!("schedule {} (B_t = t^4 or d t^4 and eps_t = 1/t required)", self.schedule),
                });
                out.push(TheoryCondition {
                    name: "algorithm".into(),
                    pass: all_learners,
                    detail: "every player runs the bandit learner".into(),
                });
            }
            Mode::Fisher => out.clear(),
        }
        out
    }
}
