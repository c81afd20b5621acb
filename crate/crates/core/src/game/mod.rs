//! Games with linear utilities: polymatrix games (bimatrix games are the
//! two-player, single-edge case), utility vectors and equilibrium gaps.

mod generate;
mod io;
mod strategy;

use rand::Rng;
use thiserror::Error;

pub use generate::{generate_game, GameKind, GraphSpec};
pub use io::GameFile;
pub use strategy::{MixedStrategy, StrategyProfile, UtilityVector, SIMPLEX_TOLERANCE};

/// Tolerance for the zero-sum check on pure action profiles.
pub const ZERO_SUM_TOLERANCE: f64 = 1e-9;

/// Profiles are enumerated exhaustively up to this many, sampled beyond it.
const ZERO_SUM_ENUMERATION_LIMIT: u128 = 1_000_000;
const ZERO_SUM_SAMPLES: usize = 10_000;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("player {player}: expected {expected} actions, got {actual}")]
    DimensionMismatch {
        player: usize,
        expected: usize,
        actual: usize,
    },
    #[error("profile has {actual} strategies but the game has {expected} players")]
    PlayerCount { expected: usize, actual: usize },
    #[error("player index {0} out of range")]
    PlayerOutOfRange(usize),
    #[error("invalid mixed strategy: {0}")]
    InvalidStrategy(String),
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("edge ({from}, {to}): {reason}")]
    InvalidEdge {
        from: usize,
        to: usize,
        reason: String,
    },
    #[error("game is flagged zero-sum but utilities sum to {sum} at pure profile {profile:?}")]
    NotZeroSum { profile: Vec<usize>, sum: f64 },
    #[error("unknown game kind `{0}`")]
    UnknownKind(String),
    #[error("invalid graph spec `{0}`")]
    InvalidGraph(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("game file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("game file: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, GameError> {
        if data.len() != rows * cols {
            return Err(GameError::InvalidParameter(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(GameError::NonFinite(*v));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GameError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(GameError::InvalidParameter("ragged matrix rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn neg(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| -v).collect(),
        }
    }

    /// out += self · x
    fn mul_vec_add(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o += self.row(r).iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// Directed edge (i, j) carrying player i's payoff matrix against j.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub matrix: Matrix,
}

/// An n-player polymatrix game. Player i's utility at profile x is
/// Σ_{j:(i,j)∈E} x_iᵀ A_ij x_j, so u_i(·, x_{-i}) = Σ_j A_ij x_j.
///
/// Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PolymatrixGame {
    action_counts: Vec<usize>,
    edges: Vec<Edge>,
    zero_sum: bool,
    // outgoing edge indices per player
    adjacency: Vec<Vec<usize>>,
}

impl PolymatrixGame {
    /// Builds and validates a game. A zero-sum flag is verified on pure
    /// profiles: exhaustively when Π d_i ≤ 10^6, otherwise on 10^4 uniformly
    /// drawn profiles.
    pub fn new(
        action_counts: Vec<usize>,
        edges: Vec<Edge>,
        zero_sum: bool,
    ) -> Result<Self, GameError> {
        let n = action_counts.len();
        if n == 0 {
            return Err(GameError::InvalidParameter("a game needs players".into()));
        }
        if let Some(i) = action_counts.iter().position(|&d| d == 0) {
            return Err(GameError::InvalidParameter(format!(
                "player {i} has no actions"
            )));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            let bad = |reason: String| GameError::InvalidEdge {
                from: e.from,
                to: e.to,
                reason,
            };
            if e.from >= n || e.to >= n {
                return Err(bad("player index out of range".into()));
            }
            if e.from == e.to {
                return Err(bad("self loop".into()));
            }
            let (di, dj) = (action_counts[e.from], action_counts[e.to]);
            if e.matrix.rows() != di || e.matrix.cols() != dj {
                return Err(bad(format!(
                    "matrix is {}x{}, expected {di}x{dj}",
                    e.matrix.rows(),
                    e.matrix.cols()
                )));
            }
            if edges[..k].iter().any(|o| o.from == e.from && o.to == e.to) {
                return Err(bad("duplicate edge".into()));
            }
            if !edges.iter().any(|o| o.from == e.to && o.to == e.from) {
                return Err(bad("reverse edge missing".into()));
            }
            adjacency[e.from].push(k);
        }
        let game = Self {
            action_counts,
            edges,
            zero_sum,
            adjacency,
        };
        if zero_sum {
            game.check_zero_sum()?;
        }
        Ok(game)
    }

    /// Two-player game with payoff matrices A (row player) and B (column
    /// player), both d1 × d2.
    pub fn bimatrix(a: Matrix, b: Matrix, zero_sum: bool) -> Result<Self, GameError> {
        if a.rows() != b.rows() || a.cols() != b.cols() {
            return Err(GameError::InvalidParameter(
                "bimatrix payoff matrices differ in shape".into(),
            ));
        }
        let counts = vec![a.rows(), a.cols()];
        let edges = vec![
            Edge {
                from: 0,
                to: 1,
                matrix: a,
            },
            Edge {
                from: 1,
                to: 0,
                matrix: b.transpose(),
            },
        ];
        Self::new(counts, edges, zero_sum)
    }

    pub fn num_players(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    /// d = max_i d_i.
    pub fn dimension(&self) -> usize {
        self.action_counts.iter().copied().max().unwrap_or(0)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_zero_sum(&self) -> bool {
        self.zero_sum
    }

    /// Σ_i ln d_i.
    pub fn log_dim_sum(&self) -> f64 {
        self.action_counts.iter().map(|&d| (d as f64).ln()).sum()
    }

    pub fn validate_profile(&self, profile: &StrategyProfile) -> Result<(), GameError> {
        if profile.len() != self.num_players() {
            return Err(GameError::PlayerCount {
                expected: self.num_players(),
                actual: profile.len(),
            });
        }
        for (i, (x, &d)) in profile.iter().zip(&self.action_counts).enumerate() {
            if x.dim() != d {
                return Err(GameError::DimensionMismatch {
                    player: i,
                    expected: d,
                    actual: x.dim(),
                });
            }
        }
        Ok(())
    }

    /// u_i(·, x_{-i}) = Σ_{j:(i,j)∈E} A_ij x_j. Independent of x_i.
    pub fn utility_vector(
        &self,
        i: usize,
        profile: &StrategyProfile,
    ) -> Result<UtilityVector, GameError> {
        if i >= self.num_players() {
            return Err(GameError::PlayerOutOfRange(i));
        }
        self.validate_profile(profile)?;
        Ok(self.utility_vector_unchecked(i, profile))
    }

    pub(crate) fn utility_vector_unchecked(
        &self,
        i: usize,
        profile: &StrategyProfile,
    ) -> UtilityVector {
        let mut out = vec![0.0; self.action_counts[i]];
        for &k in &self.adjacency[i] {
            let e = &self.edges[k];
            e.matrix.mul_vec_add(profile[e.to].probs(), &mut out);
        }
        UtilityVector::from_finite(out)
    }

    pub(crate) fn utility_vectors_unchecked(&self, profile: &StrategyProfile) -> Vec<UtilityVector> {
        (0..self.num_players())
            .map(|i| self.utility_vector_unchecked(i, profile))
            .collect()
    }

    /// Utility vectors of every player at `profile`.
    pub fn utility_vectors(
        &self,
        profile: &StrategyProfile,
    ) -> Result<Vec<UtilityVector>, GameError> {
        self.validate_profile(profile)?;
        Ok(self.utility_vectors_unchecked(profile))
    }

    /// u_i(x) = ⟨x_i, u_i(·, x_{-i})⟩ for every player.
    pub fn utilities(&self, profile: &StrategyProfile) -> Result<Vec<f64>, GameError> {
        Ok(self
            .utility_vectors(profile)?
            .iter()
            .zip(profile.iter())
            .map(|(u, x)| u.dot(x))
            .collect())
    }

    /// Per-player best-response improvement max_a u_i(·,x_{-i})[a] − u_i(x).
    pub fn player_gaps(&self, profile: &StrategyProfile) -> Result<Vec<f64>, GameError> {
        let us = self.utility_vectors(profile)?;
        Ok(gaps_from_vectors(&us, profile))
    }

    /// TGap(x) = Σ_i (max_a u_i(·,x_{-i})[a] − u_i(x)).
    pub fn total_gap(&self, profile: &StrategyProfile) -> Result<f64, GameError> {
        Ok(self.player_gaps(profile)?.iter().sum())
    }

    /// Utilities at a pure action profile.
    pub fn pure_utilities(&self, actions: &[usize]) -> Vec<f64> {
        (0..self.num_players())
            .map(|i| self.pure_utility(i, actions))
            .collect()
    }

    pub(crate) fn pure_utility(&self, i: usize, actions: &[usize]) -> f64 {
        self.adjacency[i]
            .iter()
            .map(|&k| {
                let e = &self.edges[k];
                e.matrix.get(actions[i], actions[e.to])
            })
            .sum()
    }

    /// Largest |u_i(a)| bound implied by the payoff entries: Σ_j max |A_ij|.
    pub fn payoff_bound(&self, i: usize) -> f64 {
        self.adjacency[i]
            .iter()
            .map(|&k| {
                self.edges[k]
                    .matrix
                    .data
                    .iter()
                    .fold(0.0f64, |m, v| m.max(v.abs()))
            })
            .sum()
    }

    fn check_zero_sum(&self) -> Result<(), GameError> {
        let total: u128 = self
            .action_counts
            .iter()
            .try_fold(1u128, |acc, &d| acc.checked_mul(d as u128))
            .unwrap_or(u128::MAX);
        let check = |actions: &[usize]| -> Result<(), GameError> {
            let sum: f64 = self.pure_utilities(actions).iter().sum();
            if sum.abs() > ZERO_SUM_TOLERANCE {
                return Err(GameError::NotZeroSum {
                    profile: actions.to_vec(),
                    sum,
                });
            }
            Ok(())
        };
        let n = self.num_players();
        if total <= ZERO_SUM_ENUMERATION_LIMIT {
            let mut actions = vec![0usize; n];
            loop {
                check(&actions)?;
                // odometer increment
                let mut p = 0;
                loop {
                    if p == n {
                        return Ok(());
                    }
                    actions[p] += 1;
                    if actions[p] < self.action_counts[p] {
                        break;
                    }
                    actions[p] = 0;
                    p += 1;
                }
            }
        } else {
            let mut rng = crate::rng::stream_rng(0, crate::rng::ZERO_SUM_CHECK_STREAM);
            let mut actions = vec![0usize; n];
            for _ in 0..ZERO_SUM_SAMPLES {
                for (a, &d) in actions.iter_mut().zip(&self.action_counts) {
                    *a = rng.random_range(0..d);
                }
                check(&actions)?;
            }
            Ok(())
        }
    }
}

pub(crate) fn gaps_from_vectors(us: &[UtilityVector], profile: &StrategyProfile) -> Vec<f64> {
    us.iter()
        .zip(profile.iter())
        .map(|(u, x)| (u.max() - u.dot(x)).max(0.0))
        .collect()
}

/// Both sides of Σ_i ‖u_i(·,x_{-i}) − u_i(·,x'_{-i})‖∞² ≤ (n−1)² Σ_i ‖x_i − x'_i‖₁².
pub fn utility_variation_bound(
    game: &PolymatrixGame,
    x: &StrategyProfile,
    x_prime: &StrategyProfile,
) -> Result<(f64, f64), GameError> {
    let u = game.utility_vectors(x)?;
    let v = game.utility_vectors(x_prime)?;
    let lhs = u
        .iter()
        .zip(&v)
        .map(|(a, b)| a.sup_distance(b).powi(2))
        .sum();
    let n1 = (game.num_players() - 1) as f64;
    Ok((lhs, n1 * n1 * x.sum_sq_l1_distance(x_prime)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pennies() -> PolymatrixGame {
        generate_game(GameKind::MatchingPennies, 2, 2, GraphSpec::Complete, 0).unwrap()
    }

    fn profile(rows: &[&[f64]]) -> StrategyProfile {
        rows.iter()
            .map(|r| MixedStrategy::new(r.to_vec()).unwrap())
            .collect::<Vec<_>>()
            .into()
    }

    #[test]
    fn pennies_utility_vectors() {
        let g = pennies();
        let x = profile(&[&[0.3, 0.7], &[0.5, 0.5]]);
        assert_eq!(g.utility_vector(0, &x).unwrap().values(), &[0.5, 0.5]);
        let x = profile(&[&[0.3, 0.7], &[1.0, 0.0]]);
        assert_eq!(g.utility_vector(0, &x).unwrap().values(), &[1.0, 0.0]);
    }

    #[test]
    fn pennies_utilities_and_gaps() {
        let g = pennies();
        let uniform = StrategyProfile::uniform(g.action_counts());
        assert_eq!(g.utilities(&uniform).unwrap(), vec![0.5, -0.5]);
        assert_eq!(g.total_gap(&uniform).unwrap(), 0.0);
        let pure = profile(&[&[1.0, 0.0], &[1.0, 0.0]]);
        assert_eq!(g.player_gaps(&pure).unwrap(), vec![0.0, 1.0]);
        assert_eq!(g.total_gap(&pure).unwrap(), 1.0);
    }

    #[test]
    fn constant_matrix_gives_constant_utility() {
        let ones = Matrix::filled(2, 3, 1.0);
        let g = PolymatrixGame::bimatrix(ones.clone(), ones, false).unwrap();
        let x = profile(&[&[0.1, 0.9], &[0.2, 0.3, 0.5]]);
        assert!((g.utilities(&x).unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_errors_name_the_player() {
        let g = pennies();
        let x = profile(&[&[0.5, 0.5], &[0.2, 0.3, 0.5]]);
        match g.utility_vector(0, &x) {
            Err(GameError::DimensionMismatch {
                player: 1,
                expected: 2,
                actual: 3,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let x = profile(&[&[0.5, 0.5]]);
        assert!(matches!(
            g.total_gap(&x),
            Err(GameError::PlayerCount { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn rejects_missing_reverse_edge_and_bad_shapes() {
        let e = Edge {
            from: 0,
            to: 1,
            matrix: Matrix::filled(2, 2, 0.0),
        };
        assert!(matches!(
            PolymatrixGame::new(vec![2, 2], vec![e.clone()], false),
            Err(GameError::InvalidEdge { .. })
        ));
        let back = Edge {
            from: 1,
            to: 0,
            matrix: Matrix::filled(3, 2, 0.0),
        };
        assert!(PolymatrixGame::new(vec![2, 2], vec![e, back], false).is_err());
    }

    #[test]
    fn rejects_false_zero_sum_flag() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let err = PolymatrixGame::bimatrix(a.clone(), a, true).unwrap_err();
        assert!(matches!(err, GameError::NotZeroSum { .. }));
    }

    #[test]
    fn zero_sum_without_pairwise_antisymmetry_is_accepted() {
        // Constant transfers around a triangle cancel globally even though no
        // pair of matrices is antisymmetric.
        let c = |v: f64| Matrix::filled(2, 2, v);
        let edges = vec![
            Edge { from: 0, to: 1, matrix: c(1.0) },
            Edge { from: 1, to: 0, matrix: c(0.0) },
            Edge { from: 1, to: 2, matrix: c(1.0) },
            Edge { from: 2, to: 1, matrix: c(0.0) },
            Edge { from: 2, to: 0, matrix: c(1.0) },
            Edge { from: 0, to: 2, matrix: c(-3.0) },
        ];
        assert!(PolymatrixGame::new(vec![2, 2, 2], edges, true).is_ok());
    }

    #[test]
    fn single_player_game_has_zero_utility() {
        let g = PolymatrixGame::new(vec![3], vec![], true).unwrap();
        let x = StrategyProfile::uniform(&[3]);
        assert_eq!(g.utility_vector(0, &x).unwrap().values(), &[0.0; 3]);
        assert_eq!(g.total_gap(&x).unwrap(), 0.0);
    }
}
