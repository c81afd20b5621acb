//! Bandit feedback: players only see the reward of the action they sampled.
//!
//! Each player runs in epochs. In epoch t it plays the ε_t-mixed running
//! average x̄^t_ε for B_t rounds, estimates the utility of every action from
//! the rewards it collected, recovers the inner learner's utility by
//! û^t = t·Û^t − (t−1)·Û^{t−1}, and takes one OMWU step on û^t.
//!
//! Rewards enter the estimators after the affine map
//! r ↦ (r + h)/(2h), h = max(n − 1, 1), which sends every achievable payoff of
//! a game with entries in [−1, 1] into [0, 1]. Gaps are reported in the
//! game's own units.

mod agent;
mod audit;
mod run;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::game::{GameError, MixedStrategy, UtilityVector};
use crate::learners::LearnerError;

pub use agent::{BanditLearner, Exp3, IwMonitor, IwMonitorReport};
pub use audit::{
    estimation_bound, estimation_error_audit, estimator_unbiasedness, iw_estimator_unbiasedness,
    recovery_error_audit, regret_with_error_audit, EstimationAuditRow, RecoveryErrorRecord,
    RegretWithErrorRecord, UnbiasednessReport,
};
pub use run::{
    default_bandit_eta, run_bandit, run_bandit_with_agents, BanditMeta, BanditAgentSpec, BanditConfig, BanditTrajectory,
    EpochRecord, PlayerEpoch, PlayerEpochAudit, RoundLog,
};

#[derive(Debug, Error)]
pub enum BanditError {
    #[error("reward {reward} of action {action} is outside [0, 1] after renormalization")]
    RewardOutOfRange { action: usize, reward: f64 },
    #[error("action {action} out of range for {d} actions")]
    ActionOutOfRange { action: usize, d: usize },
    #[error("{actions} sampled actions but {rewards} rewards")]
    LengthMismatch { actions: usize, rewards: usize },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Epoch lengths B_t; the mixing rate is ε_t = 1/t in every mode.
/// Serialized as `theory`, `theory_d` or `custom:<scale>:<power>`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EpochSchedule {
    /// B_t = d·t⁴ with d the largest action count.
    TheoryD,
    /// B_t = t⁴; needs no knowledge of d.
    #[default]
    Theory,
    /// B_t = max(1, round(scale·t^power)); not covered by the guarantees.
    Custom { scale: f64, power: f64 },
}

impl EpochSchedule {
    pub fn validate(&self) -> Result<(), BanditError> {
        if let Self::Custom { scale, power } = *self {
            if !(scale.is_finite() && scale > 0.0 && power.is_finite()) {
                return Err(BanditError::Schedule(format!(
                    "custom schedule needs a positive scale and finite power, got scale={scale} power={power}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_theory(&self) -> bool {
        !matches!(self, Self::Custom { .. })
    }

    pub fn epoch_length(&self, t: usize, d: usize) -> u64 {
        let t4 = (t as u64).pow(4);
        match *self {
            Self::TheoryD => d as u64 * t4,
            Self::Theory => t4,
            Self::Custom { scale, power } => (scale * (t as f64).powf(power)).round().max(1.0) as u64,
        }
    }

    pub fn mixing(&self, t: usize) -> f64 {
        1.0 / t as f64
    }
}

impl std::str::FromStr for EpochSchedule {
    type Err = BanditError;

    /// `theory`, `theory_d`, or `custom:<scale>:<power>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "theory" => Ok(Self::Theory),
            "theory_d" => Ok(Self::TheoryD),
            _ => {
                let parts: Vec<&str> = s.split(':').collect();
                match parts.as_slice() {
                    ["custom", scale, power] => {
                        let parse = |v: &str| {
                            v.parse::<f64>()
                                .map_err(|_| BanditError::Schedule(s.to_string()))
                        };
                        let spec = Self::Custom { scale: parse(scale)?, power: parse(power)? };
                        spec.validate()?;
                        Ok(spec)
                    }
                    _ => Err(BanditError::Schedule(format!(
                        "`{s}` (expected theory, theory_d or custom:<scale>:<power>)"
                    ))),
                }
            }
        }
    }
}

impl std::fmt::Display for EpochSchedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::TheoryD => f.write_str("theory_d"),
            Self::Theory => f.write_str("theory"),
            Self::Custom { scale, power } => write!(f, "custom:{scale}:{power}"),
        }
    }
}

impl TryFrom<String> for EpochSchedule {
    type Error = BanditError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<EpochSchedule> for String {
    fn from(value: EpochSchedule) -> Self {
        value.to_string()
    }
}

/// (1 − ε)·x + ε·uniform.
pub fn mix_uniform(avg: &MixedStrategy, eps: f64) -> MixedStrategy {
    let d = avg.dim() as f64;
    if eps >= 1.0 {
        return MixedStrategy::uniform(avg.dim());
    }
    MixedStrategy::from_normalized(
        avg.probs()
            .iter()
            .map(|p| (1.0 - eps) * p + eps / d)
            .collect(),
    )
}

/// Affine map of raw payoffs into [0, 1] for an n-player game with entries
/// in [−1, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScale {
    pub half_range: f64,
}

impl RewardScale {
    pub fn for_players(n: usize) -> Self {
        Self { half_range: n.saturating_sub(1).max(1) as f64 }
    }

    pub fn apply(&self, r: f64) -> f64 {
        (r + self.half_range) / (2.0 * self.half_range)
    }

    pub fn apply_vector(&self, u: &UtilityVector) -> UtilityVector {
        UtilityVector::from_finite(u.values().iter().map(|&r| self.apply(r)).collect())
    }

    /// Converts a difference of rewards back to payoff units.
    pub fn unscale_difference(&self, v: f64) -> f64 {
        v * 2.0 * self.half_range
    }
}

/// Per-action empirical mean rewards of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochEstimate {
    pub sums: Vec<f64>,
    pub counts: Vec<u64>,
    pub estimate: UtilityVector,
    /// Actions with no sample this epoch; their estimate is 0.
    pub unsampled: Vec<usize>,
}

impl EpochEstimate {
    /// Û⁰ = 0.
    pub fn zero(d: usize) -> Self {
        Self {
            sums: vec![0.0; d],
            counts: vec![0; d],
            estimate: UtilityVector::zeros(d),
            unsampled: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.sums.len()
    }

    pub fn total_samples(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Accumulates rewards during an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochAccumulator {
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl EpochAccumulator {
    pub fn new(d: usize) -> Self {
        Self { sums: vec![0.0; d], counts: vec![0; d] }
    }

    pub fn record(&mut self, action: usize, reward: f64) -> Result<(), BanditError> {
        let d = self.sums.len();
        if action >= d {
            return Err(BanditError::ActionOutOfRange { action, d });
        }
        if !(0.0..=1.0).contains(&reward) {
            return Err(BanditError::RewardOutOfRange { action, reward });
        }
        self.sums[action] += reward;
        self.counts[action] += 1;
        Ok(())
    }

    pub fn finish(self) -> EpochEstimate {
        let mut unsampled = Vec::new();
        let estimate = self
            .sums
            .iter()
            .zip(&self.counts)
            .enumerate()
            .map(|(a, (&s, &c))| {
                if c == 0 {
                    unsampled.push(a);
                    0.0
                } else {
                    s / c as f64
                }
            })
            .collect();
        EpochEstimate {
            sums: self.sums,
            counts: self.counts,
            estimate: UtilityVector::from_finite(estimate),
            unsampled,
        }
    }
}

/// Û[a] = mean reward over the rounds in which `a` was sampled.
pub fn estimate_epoch(actions: &[usize], rewards: &[f64], d: usize) -> Result<EpochEstimate, BanditError> {
    if actions.len() != rewards.len() {
        return Err(BanditError::LengthMismatch { actions: actions.len(), rewards: rewards.len() });
    }
    let mut acc = EpochAccumulator::new(d);
    for (&a, &r) in actions.iter().zip(rewards) {
        acc.record(a, r)?;
    }
    Ok(acc.finish())
}

/// û^t = t·Û^t − (t−1)·Û^{t−1}.
pub fn recover_estimated(t: usize, current: &EpochEstimate, previous: &EpochEstimate) -> UtilityVector {
    let (tf, pf) = (t as f64, t.saturating_sub(1) as f64);
    UtilityVector::from_finite(
        current
            .estimate
            .values()
            .iter()
            .zip(previous.estimate.values())
            .map(|(c, p)| tf * c - pf * p)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixing() {
        let x = MixedStrategy::pure(2, 0);
        assert_eq!(mix_uniform(&x, 1.0).probs(), &[0.5, 0.5]);
        assert_eq!(mix_uniform(&x, 0.0).probs(), &[1.0, 0.0]);
        assert_eq!(mix_uniform(&x, 0.5).probs(), &[0.75, 0.25]);
        let y = MixedStrategy::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert!(mix_uniform(&y, 0.3).probs().iter().all(|&p| p >= 0.1 - 1e-15));
    }

    #[test]
    fn estimator() {
        let e = estimate_epoch(&[1, 1, 1, 1, 1], &[0.7; 5], 3).unwrap();
        assert!((e.estimate.values()[1] - 0.7).abs() < 1e-15);
        assert_eq!(e.unsampled, vec![0, 2]);
        assert_eq!(e.estimate.values()[0], 0.0);
        assert_eq!(e.total_samples(), 5);

        let e = estimate_epoch(&[0, 0, 0, 0], &[1.0, 0.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(e.estimate.values(), &[0.75]);
        assert!(e.unsampled.is_empty());

        assert!(matches!(
            estimate_epoch(&[0], &[1.5], 2),
            Err(BanditError::RewardOutOfRange { .. })
        ));
        assert!(matches!(estimate_epoch(&[0], &[], 2), Err(BanditError::LengthMismatch { .. })));
        assert!(matches!(estimate_epoch(&[4], &[0.5], 2), Err(BanditError::ActionOutOfRange { .. })));
    }

    #[test]
    fn recovery() {
        let mk = |v: &[f64]| EpochEstimate {
            estimate: UtilityVector::new(v.to_vec()).unwrap(),
            ..EpochEstimate::zero(v.len())
        };
        let u1 = mk(&[0.3, 0.9]);
        assert_eq!(recover_estimated(1, &u1, &EpochEstimate::zero(2)).values(), &[0.3, 0.9]);
        let u = recover_estimated(3, &mk(&[0.5, 0.5]), &mk(&[0.4, 0.6]));
        assert!((u.values()[0] - 0.7).abs() < 1e-12);
        assert!((u.values()[1] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn schedules() {
        assert_eq!(EpochSchedule::Theory.epoch_length(3, 5), 81);
        assert_eq!(EpochSchedule::TheoryD.epoch_length(3, 5), 405);
        assert_eq!(EpochSchedule::Theory.mixing(4), 0.25);
        let c: EpochSchedule = "custom:2:3".parse().unwrap();
        assert_eq!(c.epoch_length(2, 9), 16);
        assert!(!c.is_theory());
        assert_eq!(EpochSchedule::Custom { scale: 0.01, power: 1.0 }.epoch_length(1, 1), 1);
        assert!("custom:-1:2".parse::<EpochSchedule>().is_err());
        assert!("weekly".parse::<EpochSchedule>().is_err());
    }

    #[test]
    fn reward_scale() {
        let s = RewardScale::for_players(3);
        assert_eq!(s.apply(-2.0), 0.0);
        assert_eq!(s.apply(2.0), 1.0);
        assert_eq!(s.apply(0.0), 0.5);
        assert_eq!(RewardScale::for_players(1).apply(-1.0), 0.0);
    }
}
