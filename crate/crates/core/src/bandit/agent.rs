use serde::{Deserialize, Serialize};

use super::{mix_uniform, recover_estimated, BanditError, EpochAccumulator, EpochEstimate};
use crate::dynamics::MonitorDecision;
use crate::game::{MixedStrategy, UtilityVector};
use crate::learners::{omwu_next, softmax, LearnerError, LearnerState};

/// Exp3 on importance-weighted loss estimates with η_t = √(ln d / (d·t)).
#[derive(Debug, Clone, PartialEq)]
pub struct Exp3 {
    cum_loss: Vec<f64>,
    t: usize,
    current: MixedStrategy,
}

impl Exp3 {
    pub fn new(d: usize) -> Self {
        Self {
            cum_loss: vec![0.0; d],
            t: 0,
            current: MixedStrategy::uniform(d),
        }
    }

    pub fn strategy(&self) -> &MixedStrategy {
        &self.current
    }

    pub fn step_size(&self) -> f64 {
        let d = self.cum_loss.len() as f64;
        (d.ln() / (d * (self.t + 1) as f64)).sqrt()
    }

    pub fn update(&mut self, action: usize, reward: f64) {
        let p = self.current.probs()[action];
        self.cum_loss[action] += (1.0 - reward) / p;
        self.t += 1;
        let eta = self.step_size();
        self.current = softmax(self.cum_loss.iter().map(|l| -eta * l));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IwMonitorReport {
    /// max_b Σ_k Ũ^k[b] − Σ_k ⟨Ũ^k, x^k_ε⟩.
    pub reg_estimate: f64,
    /// 4d·√(Σ_k k²B_k)·ln(π²d t²/(3δ)).
    pub radius: f64,
    /// c·T_t^{4/5}.
    pub threshold: f64,
    pub decision: MonitorDecision,
    /// The estimate exceeds the threshold even after subtracting the radius.
    pub certified: bool,
}

/// Importance-weighted regret estimate of one player, updated per round and
/// evaluated at epoch ends. Only the player's own actions, rewards and mixed
/// strategies enter it.
#[derive(Debug, Clone, PartialEq)]
pub struct IwMonitor {
    c: f64,
    delta: f64,
    cum_iw: Vec<f64>,
    epoch_iw: Vec<f64>,
    realized: f64,
    total_rounds: u64,
    sum_k2b: f64,
    epochs: usize,
}

impl IwMonitor {
    pub fn new(d: usize, c: f64, delta: f64) -> Self {
        Self {
            c,
            delta,
            cum_iw: vec![0.0; d],
            epoch_iw: vec![0.0; d],
            realized: 0.0,
            total_rounds: 0,
            sum_k2b: 0.0,
            epochs: 0,
        }
    }

    /// Ũ[a] += r / x_ε[a]; ⟨Ũ, x_ε⟩ gains exactly r.
    pub fn record(&mut self, action: usize, reward: f64, played: &MixedStrategy) {
        let w = reward / played.probs()[action];
        self.cum_iw[action] += w;
        self.epoch_iw[action] += w;
        self.realized += reward;
    }

    /// Ũ^t of the epoch most recently closed (or in progress).
    pub fn epoch_estimate(&self) -> &[f64] {
        &self.epoch_iw
    }

    pub fn end_epoch(&mut self, t: usize, b_t: u64) -> IwMonitorReport {
        self.epochs = t;
        self.total_rounds += b_t;
        self.sum_k2b += (t as f64).powi(2) * b_t as f64;
        let d = self.cum_iw.len() as f64;
        let best = self.cum_iw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let reg_estimate = best - self.realized;
        let t2 = (t as f64).powi(2);
        let radius = 4.0
            * d
            * self.sum_k2b.sqrt()
            * (std::f64::consts::PI.powi(2) * d * t2 / (3.0 * self.delta)).ln();
        let threshold = self.c * (self.total_rounds as f64).powf(0.8);
        let decision = if reg_estimate > threshold {
            MonitorDecision::Switch
        } else {
            MonitorDecision::Continue
        };
        IwMonitorReport {
            reg_estimate,
            radius,
            threshold,
            decision,
            certified: reg_estimate - radius > threshold,
        }
    }

    fn start_epoch(&mut self) {
        self.epoch_iw.iter_mut().for_each(|v| *v = 0.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochOutcome {
    pub estimate: Option<EpochEstimate>,
    pub recovered: Option<UtilityVector>,
    pub monitor: Option<IwMonitorReport>,
    pub switched_now: bool,
}

/// One player's epoch-based bandit learner: estimate, recover, OMWU step.
#[derive(Debug, Clone)]
pub struct BanditLearner {
    state: LearnerState,
    avg: Vec<f64>,
    epoch: usize,
    inner: MixedStrategy,
    played: MixedStrategy,
    prev: EpochEstimate,
    acc: Option<EpochAccumulator>,
    monitor: Option<IwMonitor>,
    fallback: Option<Exp3>,
}

impl BanditLearner {
    pub fn new(d: usize, eta: f64) -> Result<Self, LearnerError> {
        Ok(Self {
            state: LearnerState::new(d, eta)?,
            avg: vec![0.0; d],
            epoch: 0,
            inner: MixedStrategy::uniform(d),
            played: MixedStrategy::uniform(d),
            prev: EpochEstimate::zero(d),
            acc: None,
            monitor: None,
            fallback: None,
        })
    }

    /// Enables the importance-weighted regret monitor with threshold constant
    /// `c` and confidence `delta`.
    pub fn with_monitor(mut self, c: f64, delta: f64) -> Self {
        self.monitor = Some(IwMonitor::new(self.state.dim(), c, delta));
        self
    }

    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn state(&self) -> &LearnerState {
        &self.state
    }

    /// x^t of the current epoch.
    pub fn inner_strategy(&self) -> &MixedStrategy {
        &self.inner
    }

    /// x̄^t_ε of the current epoch.
    pub fn mixed_strategy(&self) -> &MixedStrategy {
        &self.played
    }

    pub fn is_switched(&self) -> bool {
        self.fallback.is_some()
    }

    pub fn monitor(&self) -> Option<&IwMonitor> {
        self.monitor.as_ref()
    }

    /// Starts epoch t = epoch + 1 with mixing rate `eps`.
    pub fn begin_epoch(&mut self, eps: f64) -> Result<(), BanditError> {
        if self.acc.is_some() {
            return Err(LearnerError::Protocol("begin_epoch called twice without end_epoch").into());
        }
        self.epoch += 1;
        if self.fallback.is_some() {
            self.acc = Some(EpochAccumulator::new(self.dim()));
            return Ok(());
        }
        self.inner = omwu_next(&self.state);
        let step = 1.0 / self.epoch as f64;
        for (a, x) in self.avg.iter_mut().zip(self.inner.probs()) {
            *a += step * (x - *a);
        }
        let total: f64 = self.avg.iter().sum();
        let avg = MixedStrategy::from_normalized(self.avg.iter().map(|a| a / total).collect());
        self.played = mix_uniform(&avg, eps);
        if let Some(m) = self.monitor.as_mut() {
            m.start_epoch();
        }
        self.acc = Some(EpochAccumulator::new(self.dim()));
        Ok(())
    }

    /// Strategy to sample from in the next round.
    pub fn round_strategy(&self) -> &MixedStrategy {
        match &self.fallback {
            Some(f) => f.strategy(),
            None => &self.played,
        }
    }

    /// Feeds the renormalized reward of the sampled action.
    pub fn record(&mut self, action: usize, reward: f64) -> Result<(), BanditError> {
        let acc = self
            .acc
            .as_mut()
            .ok_or(LearnerError::Protocol("record called outside an epoch"))?;
        acc.record(action, reward)?;
        if let Some(f) = self.fallback.as_mut() {
            f.update(action, reward);
        } else if let Some(m) = self.monitor.as_mut() {
            m.record(action, reward, &self.played);
        }
        Ok(())
    }

    pub fn end_epoch(&mut self) -> Result<EpochOutcome, BanditError> {
        let acc = self
            .acc
            .take()
            .ok_or(LearnerError::Protocol("end_epoch called outside an epoch"))?;
        let estimate = acc.finish();
        if self.fallback.is_some() {
            return Ok(EpochOutcome { estimate: None, recovered: None, monitor: None, switched_now: false });
        }
        let t = self.epoch;
        let recovered = recover_estimated(t, &estimate, &self.prev);
        self.state.observe(&recovered)?;
        let report = self
            .monitor
            .as_mut()
            .map(|m| m.end_epoch(t, estimate.total_samples()));
        let switched_now = report.is_some_and(|r| r.decision == MonitorDecision::Switch);
        if switched_now {
            log::info!("bandit regret monitor switched to Exp3 after epoch {t}");
            self.fallback = Some(Exp3::new(self.dim()));
        }
        self.prev = estimate.clone();
        Ok(EpochOutcome {
            estimate: Some(estimate),
            recovered: Some(recovered),
            monitor: report,
            switched_now,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_epoch_is_uniform() {
        let mut l = BanditLearner::new(3, 0.1).unwrap();
        l.begin_epoch(1.0).unwrap();
        assert_eq!(l.round_strategy(), &MixedStrategy::uniform(3));
        l.record(0, 1.0).unwrap();
        let out = l.end_epoch().unwrap();
        assert_eq!(out.recovered.unwrap().values(), &[1.0, 0.0, 0.0]);
        assert_eq!(out.estimate.unwrap().unsampled, vec![1, 2]);
    }

    #[test]
    fn protocol() {
        let mut l = BanditLearner::new(2, 0.1).unwrap();
        assert!(l.record(0, 0.5).is_err());
        assert!(l.end_epoch().is_err());
        l.begin_epoch(1.0).unwrap();
        assert!(l.begin_epoch(0.5).is_err());
    }

    #[test]
    fn exp3_moves_toward_rewarded_action() {
        let mut e = Exp3::new(2);
        for _ in 0..200 {
            e.update(1, 0.0);
            e.update(0, 1.0);
        }
        assert!(e.strategy().probs()[0] > 0.9);
    }

    #[test]
    fn monitor_accounting() {
        let mut m = IwMonitor::new(2, 4.0, 0.05);
        let x = MixedStrategy::uniform(2);
        m.record(0, 1.0, &x);
        m.record(1, 0.0, &x);
        assert_eq!(m.epoch_estimate(), &[2.0, 0.0]);
        let r = m.end_epoch(1, 2);
        assert_eq!(r.reg_estimate, 1.0);
        assert!((r.threshold - 4.0 * 2f64.powf(0.8)).abs() < 1e-12);
        let expected_radius = 8.0 * 2f64.sqrt() * (std::f64::consts::PI.powi(2) * 2.0 / 0.15).ln();
        assert!((r.radius - expected_radius).abs() < 1e-9);
        assert_eq!(r.decision, MonitorDecision::Continue);
    }
}
