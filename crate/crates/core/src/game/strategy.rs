//! Simplex points, strategy profiles and per-action utility vectors.

use serde::{Deserialize, Serialize};

use super::GameError;

/// Absolute tolerance on the probability mass of a [`MixedStrategy`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A probability distribution over a player's actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixedStrategy(Vec<f64>);

impl MixedStrategy {
    /// Validates that `probs` is a point of the simplex.
    pub fn new(probs: Vec<f64>) -> Result<Self, GameError> {
        if probs.is_empty() {
            return Err(GameError::InvalidStrategy("empty strategy".into()));
        }
        if let Some((a, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(GameError::InvalidStrategy(format!(
                "probability of action {a} is {p}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(GameError::InvalidStrategy(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Self(probs))
    }

    pub fn uniform(d: usize) -> Self {
        assert!(d > 0, "a strategy needs at least one action");
        Self(vec![1.0 / d as f64; d])
    }

    pub fn pure(d: usize, action: usize) -> Self {
        assert!(action < d, "action {action} out of range for {d} actions");
        let mut probs = vec![0.0; d];
        probs[action] = 1.0;
        Self(probs)
    }

    /// Wraps probabilities produced by an update rule that preserves the simplex
    /// by construction (normalized softmax, convex combinations).
    pub(crate) fn from_normalized(probs: Vec<f64>) -> Self {
        debug_assert!(
            (probs.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOLERANCE,
            "not normalized: {probs:?}"
        );
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn l1_distance(&self, other: &MixedStrategy) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn sup_distance(&self, other: &MixedStrategy) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for MixedStrategy {
    type Error = GameError;

    fn try_from(value: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<MixedStrategy> for Vec<f64> {
    fn from(value: MixedStrategy) -> Self {
        value.0
    }
}

impl AsRef<[f64]> for MixedStrategy {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// One mixed strategy per player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StrategyProfile(Vec<MixedStrategy>);

impl StrategyProfile {
    pub fn new(strategies: Vec<MixedStrategy>) -> Self {
        Self(strategies)
    }

    pub fn uniform(action_counts: &[usize]) -> Self {
        Self(action_counts.iter().map(|&d| MixedStrategy::uniform(d)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn player(&self, i: usize) -> &MixedStrategy {
        &self.0[i]
    }

    pub fn strategies(&self) -> &[MixedStrategy] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, MixedStrategy> {
        self.0.iter()
    }

    /// Replaces player `i`'s strategy, keeping the others.
    pub fn with_player(&self, i: usize, strategy: MixedStrategy) -> Self {
        let mut next = self.clone();
        next.0[i] = strategy;
        next
    }

    /// Σ_i ‖x_i − x'_i‖₁².
    pub fn sum_sq_l1_distance(&self, other: &StrategyProfile) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.l1_distance(b).powi(2))
            .sum()
    }
}

impl From<Vec<MixedStrategy>> for StrategyProfile {
    fn from(value: Vec<MixedStrategy>) -> Self {
        Self(value)
    }
}

impl std::ops::Index<usize> for StrategyProfile {
    type Output = MixedStrategy;

    fn index(&self, index: usize) -> &Self::Output {
        &self.0[index]
    }
}

/// Expected payoff of each of a player's actions against fixed opponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UtilityVector(Vec<f64>);

impl UtilityVector {
    pub fn new(values: Vec<f64>) -> Result<Self, GameError> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(GameError::NonFinite(*v));
        }
        Ok(Self(values))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    /// Internal constructor for values computed from finite inputs.
    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// ⟨x, u⟩.
    pub fn dot(&self, x: &MixedStrategy) -> f64 {
        self.0.iter().zip(x.probs()).map(|(u, p)| u * p).sum()
    }

    /// Best pure action and its value; ties go to the lowest index.
    pub fn argmax(&self) -> (usize, f64) {
        let mut best = (0, self.0[0]);
        for (a, &v) in self.0.iter().enumerate().skip(1) {
            if v > best.1 {
                best = (a, v);
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.argmax().1
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &UtilityVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl AsRef<[f64]> for UtilityVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_off_simplex_points() {
        assert!(MixedStrategy::new(vec![0.5, 0.6]).is_err());
        assert!(MixedStrategy::new(vec![1.5, -0.5]).is_err());
        assert!(MixedStrategy::new(vec![f64::NAN, 1.0]).is_err());
        assert!(MixedStrategy::new(vec![]).is_err());
        assert!(MixedStrategy::new(vec![0.5, 0.5 + 5e-10]).is_ok());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let u = UtilityVector::new(vec![0.2, 0.7, 0.7]).unwrap();
        assert_eq!(u.argmax(), (1, 0.7));
    }

    #[test]
    fn serde_validates() {
        let ok: MixedStrategy = serde_json::from_str("[0.25, 0.75]").unwrap();
        assert_eq!(ok.probs(), &[0.25, 0.75]);
        assert!(serde_json::from_str::<MixedStrategy>("[0.25, 0.25]").is_err());
    }
}
