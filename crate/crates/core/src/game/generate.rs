use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Edge, GameError, Matrix, PolymatrixGame};
use crate::rng::{stream_rng, SimRng, GAME_STREAM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameKind {
    MatchingPennies,
    #[serde(rename = "rps")]
    RockPaperScissors,
    /// Pairwise zero-sum: A_ji = −A_ijᵀ on every edge.
    #[serde(rename = "random_zs")]
    RandomZeroSum,
    #[serde(rename = "random_gs")]
    RandomGeneralSum,
}

impl FromStr for GameKind {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "matching_pennies" | "pennies" => Ok(Self::MatchingPennies),
            "rps" | "rock_paper_scissors" => Ok(Self::RockPaperScissors),
            "random_zs" | "random_zero_sum" => Ok(Self::RandomZeroSum),
            "random_gs" | "random_general_sum" => Ok(Self::RandomGeneralSum),
            other => Err(GameError::UnknownKind(other.to_string())),
        }
    }
}

impl fmt::Display for GameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::MatchingPennies => "matching_pennies",
            Self::RockPaperScissors => "rps",
            Self::RandomZeroSum => "random_zs",
            Self::RandomGeneralSum => "random_gs",
        })
    }
}

/// Interaction graph for random polymatrix games.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSpec {
    Complete,
    Cycle,
    /// Erdős–Rényi G(n, p): each unordered pair is an edge with probability p.
    Gnp { p: f64 },
}

impl FromStr for GraphSpec {
    type Err = GameError;

    /// `complete`, `cycle`, or `gnp:<p>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "complete" => Ok(Self::Complete),
            "cycle" => Ok(Self::Cycle),
            _ => {
                let p = s
                    .strip_prefix("gnp:")
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| GameError::InvalidGraph(s.to_string()))?;
                let spec = Self::Gnp { p };
                spec.validate()?;
                Ok(spec)
            }
        }
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Complete => f.write_str("complete"),
            Self::Cycle => f.write_str("cycle"),
            Self::Gnp { p } => write!(f, "gnp:{p}"),
        }
    }
}

impl GraphSpec {
    fn validate(&self) -> Result<(), GameError> {
        match self {
            Self::Gnp { p } if !(0.0..=1.0).contains(p) => {
                Err(GameError::InvalidGraph(format!("gnp:{p}")))
            }
            _ => Ok(()),
        }
    }

    /// Unordered pairs (i < j).
    fn pairs(&self, n: usize, rng: &mut SimRng) -> Vec<(usize, usize)> {
        match *self {
            Self::Complete => (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect(),
            Self::Cycle if n == 2 => vec![(0, 1)],
            Self::Cycle => (0..n)
                .map(|i| {
                    let j = (i + 1) % n;
                    (i.min(j), i.max(j))
                })
                .collect(),
            Self::Gnp { p } => (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|_| rng.random_bool(p))
                .collect(),
        }
    }
}

/// Builds a built-in game. The canonical games ignore `n`, `d` and `graph`;
/// random games draw payoff entries uniformly from [−1, 1] and are fully
/// determined by `seed`.
pub fn generate_game(
    kind: GameKind,
    n: usize,
    d: usize,
    graph: GraphSpec,
    seed: u64,
) -> Result<PolymatrixGame, GameError> {
    match kind {
        GameKind::MatchingPennies => {
            let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]])?;
            PolymatrixGame::bimatrix(a.clone(), a.neg(), true)
        }
        GameKind::RockPaperScissors => {
            let a = Matrix::from_rows(&[
                vec![0.0, -1.0, 1.0],
                vec![1.0, 0.0, -1.0],
                vec![-1.0, 1.0, 0.0],
            ])?;
            PolymatrixGame::bimatrix(a.clone(), a.neg(), true)
        }
        GameKind::RandomZeroSum | GameKind::RandomGeneralSum => {
            if n < 2 {
                return Err(GameError::InvalidParameter(format!(
                    "random games need n >= 2, got {n}"
                )));
            }
            if d < 2 {
                return Err(GameError::InvalidParameter(format!(
                    "random games need d >= 2, got {d}"
                )));
            }
            graph.validate()?;
            let mut rng = stream_rng(seed, GAME_STREAM);
            let zero_sum = kind == GameKind::RandomZeroSum;
            let mut edges = Vec::new();
            for (i, j) in graph.pairs(n, &mut rng) {
                let a = random_matrix(d, d, &mut rng);
                let back = if zero_sum {
                    a.transpose().neg()
                } else {
                    random_matrix(d, d, &mut rng)
                };
                edges.push(Edge { from: i, to: j, matrix: a });
                edges.push(Edge { from: j, to: i, matrix: back });
            }
            PolymatrixGame::new(vec![d; n], edges, zero_sum)
        }
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut SimRng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..=1.0))
        .collect();
    Matrix::new(rows, cols, data).expect("finite entries")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_games() {
        let mp = generate_game(GameKind::MatchingPennies, 2, 2, GraphSpec::Complete, 0).unwrap();
        assert_eq!(mp.action_counts(), &[2, 2]);
        assert!(mp.is_zero_sum());
        let e = &mp.edges()[1];
        assert_eq!((e.from, e.to), (1, 0));
        assert_eq!(e.matrix.to_rows(), vec![vec![-1.0, -0.0], vec![-0.0, -1.0]]);

        let rps = generate_game(GameKind::RockPaperScissors, 2, 3, GraphSpec::Complete, 0).unwrap();
        assert_eq!(rps.action_counts(), &[3, 3]);
        let a = &rps.edges()[0].matrix;
        for r in 0..3 {
            for c in 0..3 {
                // circulant: entry depends on (c - r) mod 3
                let k = (c + 3 - r) % 3;
                assert_eq!(a.get(r, c), [0.0, -1.0, 1.0][k]);
            }
        }
    }

    #[test]
    fn random_zero_sum_is_deterministic_and_antisymmetric() {
        let g1 = generate_game(GameKind::RandomZeroSum, 3, 4, GraphSpec::Complete, 7).unwrap();
        let g2 = generate_game(GameKind::RandomZeroSum, 3, 4, GraphSpec::Complete, 7).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(g1.edges().len(), 6);
        for e in g1.edges() {
            let back = g1
                .edges()
                .iter()
                .find(|o| o.from == e.to && o.to == e.from)
                .unwrap();
            assert_eq!(back.matrix, e.matrix.transpose().neg());
            for r in 0..4 {
                for c in 0..4 {
                    assert!((-1.0..=1.0).contains(&e.matrix.get(r, c)));
                }
            }
        }
        let g3 = generate_game(GameKind::RandomZeroSum, 3, 4, GraphSpec::Complete, 8).unwrap();
        assert_ne!(g1, g3);
    }

    #[test]
    fn graphs() {
        let cyc = generate_game(GameKind::RandomZeroSum, 5, 2, GraphSpec::Cycle, 1).unwrap();
        assert_eq!(cyc.edges().len(), 10);
        let empty = generate_game(GameKind::RandomGeneralSum, 4, 2, GraphSpec::Gnp { p: 0.0 }, 1).unwrap();
        assert!(empty.edges().is_empty());
        assert!(!empty.is_zero_sum());
        assert!(matches!("gnp:1.5".parse::<GraphSpec>(), Err(GameError::InvalidGraph(_))));
        assert!(matches!("star".parse::<GraphSpec>(), Err(GameError::InvalidGraph(_))));
        assert_eq!("gnp:0.25".parse::<GraphSpec>().unwrap(), GraphSpec::Gnp { p: 0.25 });
    }

    #[test]
    fn bad_parameters() {
        assert!(matches!("chess".parse::<GameKind>(), Err(GameError::UnknownKind(_))));
        assert!(generate_game(GameKind::RandomZeroSum, 1, 3, GraphSpec::Complete, 0).is_err());
        assert!(generate_game(GameKind::RandomZeroSum, 3, 1, GraphSpec::Complete, 0).is_err());
    }
}
