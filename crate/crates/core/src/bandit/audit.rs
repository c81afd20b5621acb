//! Offline checks of a bandit run against quantities only the simulator
//! knows: true utilities, estimation errors Δ^t = Û^t − ū^t_ε and recovery
//! errors δ^t = û^t − u^t. All quantities are in renormalized reward units.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::{BanditError, BanditTrajectory, RewardScale};
use crate::game::{PolymatrixGame, StrategyProfile};
use crate::rng::player_rng;

/// 2·√(d·ln(B_t t²/δ) / (B_t ε_t)): high-probability bound on ‖Δ^t‖∞.
pub fn estimation_bound(d: usize, b_t: u64, eps: f64, t: usize, delta: f64) -> f64 {
    let b = b_t as f64;
    let t2 = (t as f64).powi(2);
    2.0 * (d as f64 * (b * t2 / delta).ln() / (b * eps)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationAuditRow {
    pub t: usize,
    pub player: usize,
    pub error: f64,
    pub bound: f64,
    pub violated: bool,
}

pub fn estimation_error_audit(traj: &BanditTrajectory) -> Vec<EstimationAuditRow> {
    let mut rows = Vec::new();
    for e in &traj.epochs {
        for (i, p) in e.players.iter().enumerate() {
            if let Some(a) = &p.audit {
                rows.push(EstimationAuditRow {
                    t: e.t,
                    player: i,
                    error: a.estimation_error,
                    bound: a.estimation_bound,
                    violated: a.bound_violated,
                });
            }
        }
    }
    rows
}

/// ‖δ^t‖∞ against ‖tΔ^t‖∞ + ‖(t−1)Δ^{t−1}‖∞ + 2ε_t and its squared form
/// 3‖tΔ^t‖² + 3‖(t−1)Δ^{t−1}‖² + 12ε_t².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryErrorRecord {
    pub t: usize,
    pub player: usize,
    pub recovery_error: f64,
    pub first_order_rhs: f64,
    pub second_order_rhs: f64,
    pub first_order_slack: f64,
    pub second_order_slack: f64,
}

fn missing_audit() -> BanditError {
    BanditError::Invalid("trajectory has no audit data; rerun with audit enabled".into())
}

pub fn recovery_error_audit(traj: &BanditTrajectory) -> Result<Vec<RecoveryErrorRecord>, BanditError> {
    let n = traj.num_players();
    let mut out = Vec::new();
    for i in 0..n {
        let mut prev = 0.0;
        for e in &traj.epochs {
            let Some(a) = &e.players[i].audit else {
                if e.players[i].estimate.is_some() {
                    return Err(missing_audit());
                }
                break;
            };
            let t = e.t as f64;
            let cur = t * a.estimation_error;
            let first = cur + prev + 2.0 * e.eps_t;
            let second = 3.0 * cur * cur + 3.0 * prev * prev + 12.0 * e.eps_t * e.eps_t;
            out.push(RecoveryErrorRecord {
                t: e.t,
                player: i,
                recovery_error: a.recovery_error,
                first_order_rhs: first,
                second_order_rhs: second,
                first_order_slack: first - a.recovery_error,
                second_order_slack: second - a.recovery_error.powi(2),
            });
            prev = cur;
        }
    }
    Ok(out)
}

/// Regret of the inner iterates against the true utilities, with the
/// right-hand side
///
/// ```text
/// ln d/η + 4η Σ_{t≤T} ‖u^t − u^{t−1}‖∞² − (1/8η) Σ_{t≤T} ‖x^t − x^{t−1}‖₁²
///   + 2‖TΔ^T‖∞ + 26η Σ_{t<T} ‖tΔ^t‖∞² + 4 Σ_{t≤T} ε_t + 16π²η
/// ```
///
/// evaluated from logged quantities (u^0 = 0, x^0 = x^1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretWithErrorRecord {
    pub t: usize,
    pub player: usize,
    pub regret: f64,
    pub rhs: f64,
    pub slack: f64,
}

pub fn regret_with_error_audit(traj: &BanditTrajectory) -> Result<Vec<RegretWithErrorRecord>, BanditError> {
    let n = traj.num_players();
    let pi2 = std::f64::consts::PI.powi(2);
    let mut out = Vec::new();
    for i in 0..n {
        let Some(eta) = traj.meta.etas[i] else { continue };
        let mut cum: Option<Vec<f64>> = None;
        let mut realized = 0.0;
        let mut variation = 0.0;
        let mut movement = 0.0;
        let mut err_sq_before = 0.0;
        let mut eps_sum = 0.0;
        let mut prev: Option<(&crate::game::UtilityVector, &crate::game::MixedStrategy)> = None;
        for e in &traj.epochs {
            let p = &e.players[i];
            if p.switched && p.estimate.is_none() {
                break;
            }
            let a = p.audit.as_ref().ok_or_else(missing_audit)?;
            let (u, x) = (&a.inner_utility, &a.inner);
            let d = u.dim();
            let cum = cum.get_or_insert_with(|| vec![0.0; d]);
            for (c, v) in cum.iter_mut().zip(u.values()) {
                *c += v;
            }
            realized += u.dot(x);
            match prev {
                None => variation += u.sup_norm().powi(2),
                Some((pu, px)) => {
                    variation += u.sup_distance(pu).powi(2);
                    movement += x.l1_distance(px).powi(2);
                }
            }
            eps_sum += e.eps_t;
            let t = e.t as f64;
            let best = cum.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let regret = best - realized;
            let rhs = (d as f64).ln() / eta + 4.0 * eta * variation - movement / (8.0 * eta)
                + 2.0 * t * a.estimation_error
                + 26.0 * eta * err_sq_before
                + 4.0 * eps_sum
                + 16.0 * pi2 * eta;
            out.push(RegretWithErrorRecord { t: e.t, player: i, regret, rhs, slack: rhs - regret });
            err_sq_before += (t * a.estimation_error).powi(2);
            prev = Some((u, x));
        }
    }
    Ok(out)
}

/// Monte-Carlo mean of an estimator against its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessReport {
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Resamples contributing to each coordinate.
    pub samples: Vec<usize>,
    /// max_a |mean[a] − truth[a]| / stderr[a].
    pub max_abs_z: f64,
}

impl UnbiasednessReport {
    fn from_moments(truth: Vec<f64>, sum: &[f64], sum_sq: &[f64], samples: Vec<usize>) -> Self {
        let mut mean = Vec::with_capacity(truth.len());
        let mut stderr = Vec::with_capacity(truth.len());
        let mut max_abs_z: f64 = 0.0;
        for a in 0..truth.len() {
            let k = samples[a] as f64;
            let m = sum[a] / k;
            let var = ((sum_sq[a] / k - m * m) * k / (k - 1.0)).max(0.0);
            let se = (var / k).sqrt();
            let z = if se > 0.0 {
                (m - truth[a]).abs() / se
            } else if (m - truth[a]).abs() <= 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            max_abs_z = max_abs_z.max(z);
            mean.push(m);
            stderr.push(se);
        }
        Self { truth, mean, stderr, samples, max_abs_z }
    }
}

/// Draws `resamples` independent epochs of `b` rounds at the fixed mixed
/// `profile` and feeds `per_epoch` the sampled actions and player `i`'s
/// renormalized rewards.
fn resample_epochs(
    game: &PolymatrixGame,
    profile: &StrategyProfile,
    b: u64,
    resamples: usize,
    seed: u64,
    i: usize,
    mut per_epoch: impl FnMut(&[usize], &[f64]),
) -> Result<(), BanditError> {
    game.validate_profile(profile)?;
    let n = game.num_players();
    let scale = RewardScale::for_players(n);
    let samplers: Vec<WeightedIndex<f64>> = profile
        .iter()
        .map(|x| WeightedIndex::new(x.probs()).expect("positive mass"))
        .collect();
    let mut rngs: Vec<_> = (0..n).map(|k| player_rng(seed, k)).collect();
    let mut joint = vec![0usize; n];
    let mut acts = Vec::with_capacity(b as usize);
    let mut rewards = Vec::with_capacity(b as usize);
    for _ in 0..resamples {
        acts.clear();
        rewards.clear();
        for _ in 0..b {
            for k in 0..n {
                joint[k] = samplers[k].sample(&mut rngs[k]);
            }
            acts.push(joint[i]);
            rewards.push(scale.apply(game.pure_utility(i, &joint)));
        }
        per_epoch(&acts, &rewards);
    }
    Ok(())
}

/// Mean of the per-action empirical-mean estimator of player `i`, over epochs
/// in which the action was sampled, against ū_ε[a].
pub fn estimator_unbiasedness(
    game: &PolymatrixGame,
    profile: &StrategyProfile,
    i: usize,
    b: u64,
    resamples: usize,
    seed: u64,
) -> Result<UnbiasednessReport, BanditError> {
    let d = game.action_counts()[i];
    let scale = RewardScale::for_players(game.num_players());
    let truth = scale.apply_vector(&game.utility_vector(i, profile)?).into_inner();
    let (mut sum, mut sum_sq, mut samples) = (vec![0.0; d], vec![0.0; d], vec![0usize; d]);
    resample_epochs(game, profile, b, resamples, seed, i, |acts, rewards| {
        let est = super::estimate_epoch(acts, rewards, d).expect("renormalized rewards lie in [0, 1]");
        for a in 0..d {
            if est.counts[a] > 0 {
                let v = est.estimate.values()[a];
                sum[a] += v;
                sum_sq[a] += v * v;
                samples[a] += 1;
            }
        }
    })?;
    Ok(UnbiasednessReport::from_moments(truth, &sum, &sum_sq, samples))
}

/// Mean of the importance-weighted epoch estimate Ũ[a] = Σ_j r^j 1[a^j = a]/x[a]
/// against the true accumulated utility B·ū_ε[a].
pub fn iw_estimator_unbiasedness(
    game: &PolymatrixGame,
    profile: &StrategyProfile,
    i: usize,
    b: u64,
    resamples: usize,
    seed: u64,
) -> Result<UnbiasednessReport, BanditError> {
    let d = game.action_counts()[i];
    let scale = RewardScale::for_players(game.num_players());
    let truth: Vec<f64> = scale
        .apply_vector(&game.utility_vector(i, profile)?)
        .values()
        .iter()
        .map(|u| b as f64 * u)
        .collect();
    let x = profile[i].probs().to_vec();
    let (mut sum, mut sum_sq) = (vec![0.0; d], vec![0.0; d]);
    let mut est = vec![0.0; d];
    resample_epochs(game, profile, b, resamples, seed, i, |acts, rewards| {
        est.iter_mut().for_each(|v| *v = 0.0);
        for (&a, &r) in acts.iter().zip(rewards) {
            est[a] += r / x[a];
        }
        for a in 0..d {
            sum[a] += est[a];
            sum_sq[a] += est[a] * est[a];
        }
    })?;
    Ok(UnbiasednessReport::from_moments(truth, &sum, &sum_sq, vec![resamples; d]))
}
