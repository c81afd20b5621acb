//! Proportional response dynamics (PRD) in Fisher markets with unit supplies,
//! and the averaged variant in which agents spend their running-average
//! budget allocation and reconstruct the unplayed prices.
//!
//! PRD: with prices p_j = Σ_i b_ij and allocations x_ij = b_ij / p_j, every
//! agent re-splits its budget in proportion to the bundle-weighted marginal
//! utilities, b'_ij = B_i · x_ij ∇_j u_i(x_i) / Σ_k x_ik ∇_k u_i(x_i).

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, MARKET_STREAM};

/// Tolerance on Σ_j b_ij = B_i.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum FisherError {
    #[error("budget of agent {agent} must be positive and finite, got {value}")]
    InvalidBudget { agent: usize, value: f64 },
    #[error("agent {agent}: {reason}")]
    InvalidValuation { agent: usize, reason: String },
    #[error("degenerate market: good {good} has price {price}")]
    DegenerateMarket { good: usize, price: f64 },
    #[error("agent {agent} derives zero marginal utility from its whole bundle")]
    Stall { agent: usize },
    #[error("invalid spending: {0}")]
    InvalidSpending(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// ∇u_i(x_i) for a custom utility model. Gross-substitutes behaviour is
/// assumed, not checked.
pub trait GradientOracle: Send + Sync {
    fn gradient(&self, agent: usize, bundle: &[f64]) -> Vec<f64>;
}

#[derive(Clone)]
pub enum MarketUtilities {
    /// u_i(x_i) = Σ_j a_ij x_ij.
    Linear(Vec<Vec<f64>>),
    Custom(Arc<dyn GradientOracle>),
}

impl fmt::Debug for MarketUtilities {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear(v) => f.debug_tuple("Linear").field(v).finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FisherMarket {
    budgets: Vec<f64>,
    n_goods: usize,
    utilities: MarketUtilities,
}

/// Market file: `{"budgets": [...], "valuations": [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketFile {
    pub budgets: Vec<f64>,
    pub valuations: Vec<Vec<f64>>,
}

fn check_budgets(budgets: &[f64]) -> Result<(), FisherError> {
    if budgets.is_empty() {
        return Err(FisherError::Invalid("market needs at least one agent".into()));
    }
    for (i, &b) in budgets.iter().enumerate() {
        if !(b.is_finite() && b > 0.0) {
            return Err(FisherError::InvalidBudget { agent: i, value: b });
        }
    }
    Ok(())
}

impl FisherMarket {
    pub fn linear(budgets: Vec<f64>, valuations: Vec<Vec<f64>>) -> Result<Self, FisherError> {
        check_budgets(&budgets)?;
        if valuations.len() != budgets.len() {
            return Err(FisherError::Invalid(format!(
                "{} budgets but {} valuation rows",
                budgets.len(),
                valuations.len()
            )));
        }
        let n_goods = valuations[0].len();
        if n_goods == 0 {
            return Err(FisherError::Invalid("market needs at least one good".into()));
        }
        for (i, row) in valuations.iter().enumerate() {
            if row.len() != n_goods {
                return Err(FisherError::InvalidValuation {
                    agent: i,
                    reason: format!("{} valuations for {n_goods} goods", row.len()),
                });
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(FisherError::InvalidValuation {
                    agent: i,
                    reason: "valuations must be finite and non-negative".into(),
                });
            }
            if row.iter().all(|&v| v == 0.0) {
                return Err(FisherError::InvalidValuation {
                    agent: i,
                    reason: "agent values no good".into(),
                });
            }
        }
        Ok(Self { budgets, n_goods, utilities: MarketUtilities::Linear(valuations) })
    }

    pub fn with_oracle(
        budgets: Vec<f64>,
        n_goods: usize,
        oracle: Arc<dyn GradientOracle>,
    ) -> Result<Self, FisherError> {
        check_budgets(&budgets)?;
        if n_goods == 0 {
            return Err(FisherError::Invalid("market needs at least one good".into()));
        }
        Ok(Self { budgets, n_goods, utilities: MarketUtilities::Custom(oracle) })
    }

    /// Budgets uniform in [0.5, 1.5], valuations uniform in [0, 1].
    pub fn random_linear(m_agents: usize, n_goods: usize, seed: u64) -> Result<Self, FisherError> {
        let mut rng = stream_rng(seed, MARKET_STREAM);
        let budgets = (0..m_agents).map(|_| rng.random_range(0.5..=1.5)).collect();
        let valuations = (0..m_agents)
            .map(|_| (0..n_goods).map(|_| rng.random_range(0.0..=1.0)).collect())
            .collect();
        Self::linear(budgets, valuations)
    }

    pub fn m_agents(&self) -> usize {
        self.budgets.len()
    }

    pub fn n_goods(&self) -> usize {
        self.n_goods
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn total_budget(&self) -> f64 {
        self.budgets.iter().sum()
    }

    pub fn utilities(&self) -> &MarketUtilities {
        &self.utilities
    }

    pub fn gradient(&self, agent: usize, bundle: &[f64]) -> Vec<f64> {
        match &self.utilities {
            MarketUtilities::Linear(v) => v[agent].clone(),
            MarketUtilities::Custom(o) => o.gradient(agent, bundle),
        }
    }

    /// The same market with every budget multiplied by `k`.
    pub fn scaled_budgets(&self, k: f64) -> Result<Self, FisherError> {
        let budgets: Vec<f64> = self.budgets.iter().map(|b| b * k).collect();
        check_budgets(&budgets)?;
        Ok(Self { budgets, ..self.clone() })
    }

    pub fn from_json(text: &str) -> Result<Self, FisherError> {
        let file: MarketFile = serde_json::from_str(text)?;
        Self::linear(file.budgets, file.valuations)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FisherError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String, FisherError> {
        match &self.utilities {
            MarketUtilities::Linear(v) => Ok(serde_json::to_string_pretty(&MarketFile {
                budgets: self.budgets.clone(),
                valuations: v.clone(),
            })?),
            MarketUtilities::Custom(_) => Err(FisherError::Invalid(
                "markets with custom utilities have no file form".into(),
            )),
        }
    }
}

/// b_ij ≥ 0 with Σ_j b_ij = B_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpendingProfile(Vec<Vec<f64>>);

impl SpendingProfile {
    pub fn new(market: &FisherMarket, b: Vec<Vec<f64>>) -> Result<Self, FisherError> {
        if b.len() != market.m_agents() {
            return Err(FisherError::InvalidSpending(format!(
                "{} rows for {} agents",
                b.len(),
                market.m_agents()
            )));
        }
        for (i, row) in b.iter().enumerate() {
            if row.len() != market.n_goods() {
                return Err(FisherError::InvalidSpending(format!(
                    "agent {i} has {} entries for {} goods",
                    row.len(),
                    market.n_goods()
                )));
            }
            if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(FisherError::InvalidSpending(format!("agent {i} has a negative spend")));
            }
            let total: f64 = row.iter().sum();
            if (total - market.budgets[i]).abs() > BUDGET_TOLERANCE {
                return Err(FisherError::InvalidSpending(format!(
                    "agent {i} spends {total} of budget {}",
                    market.budgets[i]
                )));
            }
        }
        Ok(Self(b))
    }

    /// b_ij = B_i / n.
    pub fn even(market: &FisherMarket) -> Self {
        let n = market.n_goods() as f64;
        Self(
            market
                .budgets
                .iter()
                .map(|&b| vec![b / n; market.n_goods()])
                .collect(),
        )
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.0
    }

    /// p_j = Σ_i b_ij.
    pub fn prices(&self) -> Vec<f64> {
        let n = self.0.first().map_or(0, Vec::len);
        (0..n).map(|j| self.0.iter().map(|r| r[j]).sum()).collect()
    }

    /// x_ij = b_ij / p_j; fails on a zero price.
    pub fn allocations(&self) -> Result<Vec<Vec<f64>>, FisherError> {
        let p = positive_prices(self.prices())?;
        Ok(self
            .0
            .iter()
            .map(|r| r.iter().zip(&p).map(|(b, p)| b / p).collect())
            .collect())
    }
}

fn positive_prices(p: Vec<f64>) -> Result<Vec<f64>, FisherError> {
    if let Some((good, &price)) = p.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p > 0.0)) {
        return Err(FisherError::DegenerateMarket { good, price });
    }
    Ok(p)
}

/// New spending of one agent given its bundle.
fn respond(market: &FisherMarket, agent: usize, bundle: &[f64]) -> Result<Vec<f64>, FisherError> {
    let g = market.gradient(agent, bundle);
    let weighted: Vec<f64> = bundle.iter().zip(&g).map(|(x, g)| x * g).collect();
    let denom: f64 = weighted.iter().sum();
    if !(denom.is_finite() && denom > 0.0) {
        return Err(FisherError::Stall { agent });
    }
    let budget = market.budgets[agent];
    Ok(weighted.iter().map(|w| budget * w / denom).collect())
}

pub fn prd_step(market: &FisherMarket, spend: &SpendingProfile) -> Result<SpendingProfile, FisherError> {
    let x = spend.allocations()?;
    let rows = x
        .iter()
        .enumerate()
        .map(|(i, xi)| respond(market, i, xi))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SpendingProfile(rows))
}

/// One agent of the averaged dynamics. It keeps its internal PRD spend b^t,
/// submits the running average b̄^t, and reconstructs the internal prices
/// from the allocation the market returns.
#[derive(Debug, Clone, PartialEq)]
pub struct A2lPrdAgent {
    agent: usize,
    t: usize,
    spend: Vec<f64>,
    avg_spend: Vec<f64>,
    /// Σ_{k<t} p^k_j; only maintained for goods the agent has spent on.
    cum_prices: Vec<f64>,
    last_prices: Vec<Option<f64>>,
}

impl A2lPrdAgent {
    pub fn new(market: &FisherMarket, agent: usize) -> Self {
        let n = market.n_goods();
        let b = vec![market.budgets[agent] / n as f64; n];
        Self {
            agent,
            t: 1,
            avg_spend: b.clone(),
            spend: b,
            cum_prices: vec![0.0; n],
            last_prices: vec![None; n],
        }
    }

    /// b̄^t_i, the spend submitted to the market this round.
    pub fn submitted(&self) -> &[f64] {
        &self.avg_spend
    }

    /// Internal spend b^t_i.
    pub fn internal(&self) -> &[f64] {
        &self.spend
    }

    /// Internal prices p^t recovered in the last round; `None` for goods the
    /// agent never spent on, whose price it never needs.
    pub fn recovered_prices(&self) -> &[Option<f64>] {
        &self.last_prices
    }

    /// Consumes the allocation x̄^t_i of the submitted spend and advances to
    /// round t + 1.
    pub fn observe(&mut self, market: &FisherMarket, allocation: &[f64]) -> Result<(), FisherError> {
        let t = self.t as f64;
        let n = self.spend.len();
        let mut bundle = vec![0.0; n];
        for j in 0..n {
            if self.avg_spend[j] > 0.0 && allocation[j] > 0.0 {
                let avg_price = self.avg_spend[j] / allocation[j];
                let price = t * avg_price - self.cum_prices[j];
                self.cum_prices[j] += price;
                self.last_prices[j] = Some(price);
                if self.spend[j] > 0.0 {
                    if !(price.is_finite() && price > 0.0) {
                        return Err(FisherError::DegenerateMarket { good: j, price });
                    }
                    bundle[j] = self.spend[j] / price;
                }
            } else {
                // b̄_ij = 0 means b^k_ij = 0 for every k ≤ t, so x^t_ij = 0.
                self.last_prices[j] = None;
            }
        }
        let next = respond(market, self.agent, &bundle)?;
        self.t += 1;
        let step = 1.0 / self.t as f64;
        for (a, b) in self.avg_spend.iter_mut().zip(&next) {
            *a += step * (b - *a);
        }
        self.spend = next;
        Ok(())
    }
}

/// Plays one round: agents submit averaged spends, the market allocates, each
/// agent observes its own allocation. Returns the submitted profile.
pub fn a2l_prd_step(market: &FisherMarket, agents: &mut [A2lPrdAgent]) -> Result<SpendingProfile, FisherError> {
    let submitted = SpendingProfile(agents.iter().map(|a| a.submitted().to_vec()).collect());
    let x = submitted.allocations()?;
    for (a, xi) in agents.iter_mut().zip(&x) {
        a.observe(market, xi)?;
    }
    Ok(submitted)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceStep {
    pub t: usize,
    pub prices: Vec<f64>,
    pub max_bpb_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketRun {
    /// `prd` or `a2l-prd`.
    pub dynamics: String,
    /// Spending profile submitted to the market in each round.
    pub spends: Vec<SpendingProfile>,
    pub steps: Vec<PriceStep>,
}

/// Plain PRD from the even split for `steps` rounds.
pub fn run_prd(market: &FisherMarket, steps: usize) -> Result<MarketRun, FisherError> {
    let mut spend = SpendingProfile::even(market);
    let mut run = MarketRun { dynamics: "prd".into(), spends: Vec::with_capacity(steps), steps: Vec::with_capacity(steps) };
    for t in 1..=steps {
        run.steps.push(price_step(market, t, &spend)?);
        let next = prd_step(market, &spend)?;
        run.spends.push(std::mem::replace(&mut spend, next));
    }
    Ok(run)
}

/// Averaged PRD from the even split for `steps` rounds.
pub fn run_a2l_prd(market: &FisherMarket, steps: usize) -> Result<MarketRun, FisherError> {
    let mut agents: Vec<A2lPrdAgent> = (0..market.m_agents()).map(|i| A2lPrdAgent::new(market, i)).collect();
    let mut run = MarketRun { dynamics: "a2l-prd".into(), spends: Vec::with_capacity(steps), steps: Vec::with_capacity(steps) };
    for t in 1..=steps {
        let submitted = a2l_prd_step(market, &mut agents)?;
        run.steps.push(price_step(market, t, &submitted)?);
        run.spends.push(submitted);
    }
    Ok(run)
}

fn price_step(market: &FisherMarket, t: usize, spend: &SpendingProfile) -> Result<PriceStep, FisherError> {
    let prices = spend.prices();
    let x = spend.allocations()?;
    Ok(PriceStep { t, max_bpb_violation: bpb_violation(market, &prices, &x)?, prices })
}

/// max_i Σ_j (p_j x_ij / B_i)(1 − r_ij / max_k r_ik) with bang-per-buck
/// r_ij = ∇_j u_i(x_i) / p_j: the budget share spent below the best rate,
/// weighted by the shortfall. Zero exactly when agents buy only
/// best-rate goods.
pub fn bpb_violation(market: &FisherMarket, prices: &[f64], x: &[Vec<f64>]) -> Result<f64, FisherError> {
    let prices = positive_prices(prices.to_vec())?;
    let mut worst: f64 = 0.0;
    for (i, xi) in x.iter().enumerate() {
        let g = market.gradient(i, xi);
        let rates: Vec<f64> = g.iter().zip(&prices).map(|(g, p)| g / p).collect();
        let best = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if best <= 0.0 {
            continue;
        }
        let v: f64 = xi
            .iter()
            .zip(&prices)
            .zip(&rates)
            .map(|((x, p), r)| p * x / market.budgets[i] * (1.0 - r / best))
            .sum();
        worst = worst.max(v);
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub pass: bool,
    pub worst_violation: f64,
}

impl ConditionReport {
    fn new(worst: f64, tol: f64) -> Self {
        Self { pass: worst <= tol, worst_violation: worst }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeReport {
    /// Σ_j p_j x_ij ≤ B_i.
    pub budget_feasible: ConditionReport,
    /// Spending only on goods with the best bang-per-buck ([`bpb_violation`]).
    pub utility_maximizing: ConditionReport,
    /// Σ_i x_ij = 1 for every good; the violation is the largest |excess|.
    pub market_clears: ConditionReport,
}

impl CeReport {
    pub fn all_pass(&self) -> bool {
        self.budget_feasible.pass && self.utility_maximizing.pass && self.market_clears.pass
    }
}

pub fn verify_ce(
    market: &FisherMarket,
    prices: &[f64],
    allocations: &[Vec<f64>],
    tol: f64,
) -> Result<CeReport, FisherError> {
    if prices.len() != market.n_goods() || allocations.len() != market.m_agents() {
        return Err(FisherError::Invalid("prices or allocations do not match the market".into()));
    }
    if allocations.iter().any(|r| r.len() != market.n_goods()) {
        return Err(FisherError::Invalid("allocation rows do not match the goods".into()));
    }
    let prices = positive_prices(prices.to_vec())?;
    let budget = allocations
        .iter()
        .zip(&market.budgets)
        .map(|(xi, b)| {
            let cost: f64 = xi.iter().zip(&prices).map(|(x, p)| x * p).sum();
            (cost - b).max(0.0)
        })
        .fold(0.0, f64::max);
    let clears = (0..market.n_goods())
        .map(|j| (allocations.iter().map(|r| r[j]).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(CeReport {
        budget_feasible: ConditionReport::new(budget, tol),
        utility_maximizing: ConditionReport::new(bpb_violation(market, &prices, allocations)?, tol),
        market_clears: ConditionReport::new(clears, tol),
    })
}

impl MarketRun {
    /// Columns `t, p_1..p_n, max_bpb_violation`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.steps.first().map_or(0, |s| s.prices.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|j| format!("p_{j}")));
        header.push("max_bpb_violation".into());
        writeln!(out, "{}", header.join(","))?;
        for s in &self.steps {
            write!(out, "{}", s.t)?;
            for p in &s.prices {
                write!(out, ",{p}")?;
            }
            writeln!(out, ",{}", s.max_bpb_violation)?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> FisherMarket {
        FisherMarket::linear(vec![1.0, 1.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()
    }

    #[test]
    fn one_step_reaches_the_hand_solution() {
        let m = two_by_two();
        let start = SpendingProfile::new(&m, vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let next = prd_step(&m, &start).unwrap();
        assert_eq!(next.rows(), &[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(next.prices(), vec![1.0, 1.0]);
        let again = prd_step(&m, &next).unwrap();
        assert_eq!(again, next);
    }

    #[test]
    fn single_good_is_a_fixed_point() {
        let m = FisherMarket::linear(vec![1.0, 2.0, 0.5], vec![vec![1.0], vec![0.3], vec![2.0]]).unwrap();
        let s = SpendingProfile::even(&m);
        assert_eq!(prd_step(&m, &s).unwrap(), s);
    }

    #[test]
    fn ce_checks() {
        let m = two_by_two();
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let r = verify_ce(&m, &[1.0, 1.0], &id, 1e-9).unwrap();
        assert!(r.all_pass());
        let over = vec![vec![1.0, 0.0], vec![0.5, 1.0]];
        let r = verify_ce(&m, &[1.0, 1.0], &over, 1e-9).unwrap();
        assert!(!r.market_clears.pass);
        assert!((r.market_clears.worst_violation - 0.5).abs() < 1e-15);
        assert!(matches!(
            verify_ce(&m, &[0.0, 0.0], &id, 1e-9),
            Err(FisherError::DegenerateMarket { .. })
        ));
    }

    #[test]
    fn degenerate_and_stalled_markets() {
        let m = two_by_two();
        let zero_price = SpendingProfile::new(&m, vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(prd_step(&m, &zero_price), Err(FisherError::DegenerateMarket { good: 1, .. })));

        struct Flat;
        impl GradientOracle for Flat {
            fn gradient(&self, _: usize, bundle: &[f64]) -> Vec<f64> {
                vec![0.0; bundle.len()]
            }
        }
        let flat = FisherMarket::with_oracle(vec![1.0], 2, Arc::new(Flat)).unwrap();
        assert!(matches!(
            prd_step(&flat, &SpendingProfile::even(&flat)),
            Err(FisherError::Stall { agent: 0 })
        ));
    }

    #[test]
    fn validation() {
        assert!(FisherMarket::linear(vec![0.0], vec![vec![1.0]]).is_err());
        assert!(FisherMarket::linear(vec![1.0], vec![vec![0.0, 0.0]]).is_err());
        assert!(FisherMarket::linear(vec![1.0], vec![vec![-1.0, 1.0]]).is_err());
        let m = two_by_two();
        assert!(SpendingProfile::new(&m, vec![vec![0.5, 0.4], vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn averaged_first_round_matches_prd() {
        let m = FisherMarket::random_linear(3, 4, 2).unwrap();
        let a = run_a2l_prd(&m, 1).unwrap();
        let p = run_prd(&m, 1).unwrap();
        assert_eq!(a.steps[0].prices, p.steps[0].prices);
    }

    #[test]
    fn json_round_trip() {
        let m = FisherMarket::random_linear(2, 3, 1).unwrap();
        let back = FisherMarket::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.budgets(), m.budgets());
    }
}
