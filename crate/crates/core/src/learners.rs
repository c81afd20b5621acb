//! Online learners over the probability simplex.
//!
//! Every learner follows the same pull/push contract: [`Learner::next_strategy`]
//! returns the strategy for the current round, then [`Learner::observe`] pushes
//! the utility vector received for it. State is stored as cumulative
//! utilities (never cumulative log-weights) and strategies are produced by a
//! max-shifted softmax, so long runs neither drift nor overflow.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{MixedStrategy, UtilityVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnerError {
    #[error("utility vector has {actual} entries, learner has {expected} actions")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite utility {0}")]
    NonFinite(f64),
    #[error("step size must be positive and finite, got {0}")]
    InvalidStepSize(f64),
    #[error("learner needs at least one action")]
    NoActions,
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("protocol violation: {0}")]
    Protocol(&'static str),
    #[error("invalid initial strategy: {0}")]
    InvalidInitial(String),
}

/// The pull-strategy / push-utility contract shared by all learners.
pub trait Learner {
    fn dim(&self) -> usize;
    fn next_strategy(&mut self) -> Result<MixedStrategy, LearnerError>;
    fn observe(&mut self, utility: &UtilityVector) -> Result<(), LearnerError>;
}

impl<L: Learner + ?Sized> Learner for Box<L> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn next_strategy(&mut self) -> Result<MixedStrategy, LearnerError> {
        (**self).next_strategy()
    }

    fn observe(&mut self, utility: &UtilityVector) -> Result<(), LearnerError> {
        (**self).observe(utility)
    }
}

/// State of a multiplicative-weights learner: Σ_{k≤t} u^k, u^t, and the
/// number of observed rounds. Before any feedback both vectors are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    d: usize,
    eta: f64,
    cum_utils: Vec<f64>,
    last_util: Vec<f64>,
    t: usize,
    /// Additive logits; the first strategy is softmax(initial_logits).
    initial_logits: Option<Vec<f64>>,
}

impl LearnerState {
    pub fn new(d: usize, eta: f64) -> Result<Self, LearnerError> {
        if d == 0 {
            return Err(LearnerError::NoActions);
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(LearnerError::InvalidStepSize(eta));
        }
        Ok(Self {
            d,
            eta,
            cum_utils: vec![0.0; d],
            last_util: vec![0.0; d],
            t: 0,
            initial_logits: None,
        })
    }

    /// Starts from an interior strategy instead of the uniform one.
    pub fn with_initial_strategy(mut self, x: &MixedStrategy) -> Result<Self, LearnerError> {
        if x.dim() != self.d {
            return Err(LearnerError::DimensionMismatch {
                expected: self.d,
                actual: x.dim(),
            });
        }
        if x.probs().iter().any(|&p| p <= 0.0) {
            return Err(LearnerError::InvalidInitial(
                "initial strategy must be interior".into(),
            ));
        }
        self.initial_logits = Some(x.probs().iter().map(|p| p.ln()).collect());
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn rounds(&self) -> usize {
        self.t
    }

    pub fn cum_utils(&self) -> &[f64] {
        &self.cum_utils
    }

    pub fn last_util(&self) -> &[f64] {
        &self.last_util
    }

    pub fn observe(&mut self, u: &UtilityVector) -> Result<(), LearnerError> {
        check_utility(self.d, u)?;
        for ((c, l), &v) in self
            .cum_utils
            .iter_mut()
            .zip(self.last_util.iter_mut())
            .zip(u.values())
        {
            *c += v;
            *l = v;
        }
        self.t += 1;
        Ok(())
    }

    fn strategy_from(&self, optimism: f64) -> MixedStrategy {
        let scores = self
            .cum_utils
            .iter()
            .zip(&self.last_util)
            .enumerate()
            .map(|(a, (c, l))| {
                let prior = self.initial_logits.as_ref().map_or(0.0, |p| p[a]);
                self.eta * (c + optimism * l) + prior
            });
        softmax(scores)
    }
}

pub(crate) fn check_utility(d: usize, u: &UtilityVector) -> Result<(), LearnerError> {
    if u.dim() != d {
        return Err(LearnerError::DimensionMismatch {
            expected: d,
            actual: u.dim(),
        });
    }
    if let Some(v) = u.values().iter().find(|v| !v.is_finite()) {
        return Err(LearnerError::NonFinite(*v));
    }
    Ok(())
}

/// Normalized exp(score), shifted by the max score before exponentiating.
pub fn softmax(scores: impl Iterator<Item = f64>) -> MixedStrategy {
    let scores: Vec<f64> = scores.collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    MixedStrategy::from_normalized(weights)
}

/// x^t[a] ∝ exp(η(Σ_{k<t} u^k[a] + u^{t−1}[a])), with u^0 = 0.
pub fn omwu_next(state: &LearnerState) -> MixedStrategy {
    state.strategy_from(1.0)
}

/// x^t[a] ∝ exp(η Σ_{k<t} u^k[a]).
pub fn mwu_next(state: &LearnerState) -> MixedStrategy {
    state.strategy_from(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseAlgorithm {
    Mwu,
    Omwu,
}

impl std::fmt::Display for BaseAlgorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mwu => "mwu",
            Self::Omwu => "omwu",
        })
    }
}

/// MWU or its optimistic variant with a fixed step size.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplicativeWeights {
    state: LearnerState,
    algorithm: BaseAlgorithm,
}

impl MultiplicativeWeights {
    pub fn new(algorithm: BaseAlgorithm, d: usize, eta: f64) -> Result<Self, LearnerError> {
        Ok(Self {
            state: LearnerState::new(d, eta)?,
            algorithm,
        })
    }

    pub fn omwu(d: usize, eta: f64) -> Result<Self, LearnerError> {
        Self::new(BaseAlgorithm::Omwu, d, eta)
    }

    pub fn mwu(d: usize, eta: f64) -> Result<Self, LearnerError> {
        Self::new(BaseAlgorithm::Mwu, d, eta)
    }

    pub fn from_state(algorithm: BaseAlgorithm, state: LearnerState) -> Self {
        Self { state, algorithm }
    }

    pub fn state(&self) -> &LearnerState {
        &self.state
    }

    pub fn algorithm(&self) -> BaseAlgorithm {
        self.algorithm
    }

    pub fn current(&self) -> MixedStrategy {
        match self.algorithm {
            BaseAlgorithm::Mwu => mwu_next(&self.state),
            BaseAlgorithm::Omwu => omwu_next(&self.state),
        }
    }
}

impl Learner for MultiplicativeWeights {
    fn dim(&self) -> usize {
        self.state.dim()
    }

    fn next_strategy(&mut self) -> Result<MixedStrategy, LearnerError> {
        Ok(self.current())
    }

    fn observe(&mut self, utility: &UtilityVector) -> Result<(), LearnerError> {
        self.state.observe(utility)
    }
}

/// MWU with the anytime step size η_t = √(ln d / t); the no-regret fallback
/// used after a robustness switch.
#[derive(Debug, Clone, PartialEq)]
pub struct AnytimeMwu {
    cum_utils: Vec<f64>,
    t: usize,
}

impl AnytimeMwu {
    pub fn new(d: usize) -> Result<Self, LearnerError> {
        if d == 0 {
            return Err(LearnerError::NoActions);
        }
        Ok(Self {
            cum_utils: vec![0.0; d],
            t: 0,
        })
    }

    pub fn step_size(&self) -> f64 {
        let d = self.cum_utils.len() as f64;
        (d.ln() / (self.t + 1) as f64).sqrt()
    }
}

impl Learner for AnytimeMwu {
    fn dim(&self) -> usize {
        self.cum_utils.len()
    }

    fn next_strategy(&mut self) -> Result<MixedStrategy, LearnerError> {
        let eta = self.step_size();
        Ok(softmax(self.cum_utils.iter().map(|c| eta * c)))
    }

    fn observe(&mut self, utility: &UtilityVector) -> Result<(), LearnerError> {
        check_utility(self.cum_utils.len(), utility)?;
        for (c, v) in self.cum_utils.iter_mut().zip(utility.values()) {
            *c += v;
        }
        self.t += 1;
        Ok(())
    }
}

/// Both sides of the regret-bounded-by-variation inequality for one OMWU
/// trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RvuRecord {
    pub regret: f64,
    pub bound_rhs: f64,
    pub slack: f64,
}

/// Regret ≤ ln d/η + η Σ‖u^t − u^{t−1}‖∞² − (1/4η) Σ‖x^t − x^{t−1}‖₁²,
/// with u^0 = 0 and x^0 = x^1 (the first movement term vanishes).
pub fn rvu_diagnostic(
    strategies: &[MixedStrategy],
    utilities: &[UtilityVector],
    eta: f64,
) -> Result<RvuRecord, LearnerError> {
    if strategies.is_empty() {
        return Err(LearnerError::EmptyTrajectory);
    }
    if strategies.len() != utilities.len() {
        return Err(LearnerError::DimensionMismatch {
            expected: strategies.len(),
            actual: utilities.len(),
        });
    }
    let d = strategies[0].dim();
    let mut cum = vec![0.0; d];
    let mut realized = 0.0;
    let mut variation = 0.0;
    let mut movement = 0.0;
    let zero = UtilityVector::zeros(d);
    for (t, (x, u)) in strategies.iter().zip(utilities).enumerate() {
        check_utility(d, u)?;
        realized += u.dot(x);
        for (c, v) in cum.iter_mut().zip(u.values()) {
            *c += v;
        }
        let prev_u = if t == 0 { &zero } else { &utilities[t - 1] };
        variation += u.sup_distance(prev_u).powi(2);
        if t > 0 {
            movement += x.l1_distance(&strategies[t - 1]).powi(2);
        }
    }
    let best = cum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let regret = best - realized;
    let bound_rhs = (d as f64).ln() / eta + eta * variation - movement / (4.0 * eta);
    Ok(RvuRecord {
        regret,
        bound_rhs,
        slack: bound_rhs - regret,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uv(v: &[f64]) -> UtilityVector {
        UtilityVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn first_strategy_is_uniform() {
        let s = LearnerState::new(4, 0.3).unwrap();
        assert_eq!(omwu_next(&s).probs(), &[0.25; 4]);
        assert_eq!(mwu_next(&s).probs(), &[0.25; 4]);
    }

    #[test]
    fn omwu_two_action_softmax() {
        // cum + last = (1, 0) with η = 0.5: cum = (0.5, 0), last = (0.5, 0)
        let mut s = LearnerState::new(2, 0.5).unwrap();
        s.observe(&uv(&[0.5, 0.0])).unwrap();
        let x = omwu_next(&s);
        let e = 0.5f64.exp();
        assert!((x.probs()[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((x.probs()[0] - 0.62246).abs() < 1e-5);
        assert!((x.probs()[1] - 0.37754).abs() < 1e-5);
    }

    #[test]
    fn mwu_and_omwu_differ_by_the_doubled_term() {
        let mut s = LearnerState::new(2, 1.0).unwrap();
        s.observe(&uv(&[1.0, 0.0])).unwrap();
        let e1 = 1f64.exp();
        let e2 = 2f64.exp();
        assert!((mwu_next(&s).probs()[0] - e1 / (e1 + 1.0)).abs() < 1e-15);
        assert!((omwu_next(&s).probs()[0] - e2 / (e2 + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn shift_invariance_and_no_overflow() {
        let mut a = LearnerState::new(3, 1.0).unwrap();
        let mut b = LearnerState::new(3, 1.0).unwrap();
        a.observe(&uv(&[0.1, 0.4, -0.2])).unwrap();
        b.observe(&uv(&[100.1, 100.4, 99.8])).unwrap();
        let (xa, xb) = (omwu_next(&a), omwu_next(&b));
        assert!(xa.sup_distance(&xb) < 1e-12);

        let mut big = LearnerState::new(2, 1.0).unwrap();
        big.observe(&uv(&[350.0, -350.0])).unwrap();
        let x = omwu_next(&big);
        assert!(x.probs().iter().all(|p| p.is_finite()));
        assert_eq!(x.probs()[0], 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert_eq!(LearnerState::new(2, 0.0).unwrap_err(), LearnerError::InvalidStepSize(0.0));
        assert_eq!(LearnerState::new(0, 1.0).unwrap_err(), LearnerError::NoActions);
        let mut s = LearnerState::new(2, 1.0).unwrap();
        assert!(matches!(
            s.observe(&uv(&[1.0, 2.0, 3.0])),
            Err(LearnerError::DimensionMismatch { expected: 2, actual: 3 })
        ));
        assert_eq!(rvu_diagnostic(&[], &[], 1.0).unwrap_err(), LearnerError::EmptyTrajectory);
    }

    #[test]
    fn initial_strategy_is_respected() {
        let x0 = MixedStrategy::new(vec![0.7, 0.3]).unwrap();
        let s = LearnerState::new(2, 1.0).unwrap().with_initial_strategy(&x0).unwrap();
        assert!(omwu_next(&s).sup_distance(&x0) < 1e-15);
        assert!(LearnerState::new(2, 1.0)
            .unwrap()
            .with_initial_strategy(&MixedStrategy::pure(2, 0))
            .is_err());
    }

    #[test]
    fn rvu_single_zero_round() {
        let r = rvu_diagnostic(&[MixedStrategy::uniform(3)], &[UtilityVector::zeros(3)], 0.5).unwrap();
        assert_eq!(r.regret, 0.0);
        assert!((r.bound_rhs - 3f64.ln() / 0.5).abs() < 1e-15);
    }

    #[test]
    fn rvu_constant_utilities() {
        let eta = 0.25;
        let mut l = MultiplicativeWeights::omwu(3, eta).unwrap();
        let u = uv(&[0.2, 0.9, 0.4]);
        let (mut xs, mut us) = (vec![], vec![]);
        for _ in 0..200 {
            xs.push(l.next_strategy().unwrap());
            l.observe(&u).unwrap();
            us.push(u.clone());
        }
        let r = rvu_diagnostic(&xs, &us, eta).unwrap();
        assert!(r.regret <= 3f64.ln() / eta + eta * 0.81 + 1e-12);
        assert!(r.slack >= -1e-9);
    }

    #[test]
    fn anytime_mwu_step_size() {
        let mut l = AnytimeMwu::new(4).unwrap();
        assert!((l.step_size() - 4f64.ln().sqrt()).abs() < 1e-15);
        l.observe(&uv(&[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!((l.step_size() - (4f64.ln() / 2.0).sqrt()).abs() < 1e-15);
        assert!(l.next_strategy().unwrap().probs()[0] > 0.25);
    }
}
