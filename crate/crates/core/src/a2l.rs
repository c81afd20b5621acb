//! The average-to-last-iterate wrapper.
//!
//! `A2l<L>` plays the running (weighted) average x̄^t of the iterates its inner
//! learner `L` produces. When every player in a game with linear utilities
//! wraps its learner this way, the observed utility ū^t is the utility at the
//! opponents' averages, and by linearity
//!
//! ```text
//! u^t = (W_t ū^t − Σ_{k<t} α_k u^k) / α_t,    W_t = Σ_{k≤t} α_k
//! ```
//!
//! is exactly the utility the inner learner would have seen in a bare run.
//! That vector is forwarded to the inner learner, so the wrapped dynamics'
//! last iterate equals the bare dynamics' average iterate.

use serde::{Deserialize, Serialize};

use crate::game::{MixedStrategy, UtilityVector};
use crate::learners::{check_utility, Learner, LearnerError};

/// Averaging weights α_t. All players must use the same rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightRule {
    /// α_t = 1.
    #[default]
    Uniform,
    /// α_t = t.
    Linear,
}

impl WeightRule {
    pub fn weight(self, t: usize) -> f64 {
        match self {
            Self::Uniform => 1.0,
            Self::Linear => t as f64,
        }
    }
}

impl std::str::FromStr for WeightRule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "linear" => Ok(Self::Linear),
            other => Err(format!("unknown weight rule `{other}` (expected uniform or linear)")),
        }
    }
}

impl std::fmt::Display for WeightRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone)]
pub struct A2l<L> {
    inner: L,
    rule: WeightRule,
    /// Completed rounds.
    t: usize,
    avg: Vec<f64>,
    /// Σ_{k<t} α_k u^k over recovered utilities.
    cum_recovered: Vec<f64>,
    cum_weight: f64,
    /// Inner iterate of the round in progress; set by `next_strategy`.
    pending: Option<MixedStrategy>,
    last_inner: Option<MixedStrategy>,
    last_recovered: Option<UtilityVector>,
}

impl<L: Learner> A2l<L> {
    pub fn new(inner: L, rule: WeightRule) -> Self {
        let d = inner.dim();
        Self {
            inner,
            rule,
            t: 0,
            avg: vec![0.0; d],
            cum_recovered: vec![0.0; d],
            cum_weight: 0.0,
            pending: None,
            last_inner: None,
            last_recovered: None,
        }
    }

    pub fn inner(&self) -> &L {
        &self.inner
    }

    pub fn rule(&self) -> WeightRule {
        self.rule
    }

    pub fn rounds(&self) -> usize {
        self.t
    }

    pub fn cum_weight(&self) -> f64 {
        self.cum_weight
    }

    /// Inner iterate x^t of the current (or most recent) round.
    pub fn last_inner_strategy(&self) -> Option<&MixedStrategy> {
        self.pending.as_ref().or(self.last_inner.as_ref())
    }

    /// Utility vector most recently recovered and forwarded to the inner learner.
    pub fn last_recovered(&self) -> Option<&UtilityVector> {
        self.last_recovered.as_ref()
    }
}

impl<L: Learner> Learner for A2l<L> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn next_strategy(&mut self) -> Result<MixedStrategy, LearnerError> {
        if self.pending.is_some() {
            return Err(LearnerError::Protocol("next_strategy called twice without observe"));
        }
        let x = self.inner.next_strategy()?;
        let alpha = self.rule.weight(self.t + 1);
        self.cum_weight += alpha;
        let step = alpha / self.cum_weight;
        for (a, p) in self.avg.iter_mut().zip(x.probs()) {
            *a += step * (p - *a);
        }
        self.pending = Some(x);
        // The incremental update keeps the mass within rounding of 1.
        let total: f64 = self.avg.iter().sum();
        Ok(MixedStrategy::from_normalized(
            self.avg.iter().map(|a| a / total).collect(),
        ))
    }

    fn observe(&mut self, avg_util: &UtilityVector) -> Result<(), LearnerError> {
        check_utility(self.dim(), avg_util)?;
        let Some(x) = self.pending.take() else {
            return Err(LearnerError::Protocol("observe called before next_strategy"));
        };
        let alpha = self.rule.weight(self.t + 1);
        let recovered: Vec<f64> = avg_util
            .values()
            .iter()
            .zip(&self.cum_recovered)
            .map(|(u, c)| (self.cum_weight * u - c) / alpha)
            .collect();
        let recovered = UtilityVector::new(recovered)
            .map_err(|_| LearnerError::NonFinite(f64::NAN))?;
        self.inner.observe(&recovered)?;
        for (c, u) in self.cum_recovered.iter_mut().zip(recovered.values()) {
            *c += alpha * u;
        }
        self.t += 1;
        self.last_inner = Some(x);
        self.last_recovered = Some(recovered);
        Ok(())
    }
}
