//! JSON game files:
//! `{"n": 2, "action_counts": [2, 2], "zero_sum": true,
//!   "edges": [{"i": 0, "j": 1, "matrix": [[1, 0], [0, 1]]}, ...]}`.
//! Player indices are zero-based. Loading runs every check of
//! [`PolymatrixGame::new`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Edge, GameError, Matrix, PolymatrixGame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    pub n: usize,
    pub action_counts: Vec<usize>,
    pub zero_sum: bool,
    pub edges: Vec<EdgeFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFile {
    pub i: usize,
    pub j: usize,
    pub matrix: Vec<Vec<f64>>,
}

impl TryFrom<GameFile> for PolymatrixGame {
    type Error = GameError;

    fn try_from(file: GameFile) -> Result<Self, Self::Error> {
        if file.n != file.action_counts.len() {
            return Err(GameError::InvalidParameter(format!(
                "n = {} but {} action counts given",
                file.n,
                file.action_counts.len()
            )));
        }
        let edges = file
            .edges
            .into_iter()
            .map(|e| {
                Ok(Edge {
                    from: e.i,
                    to: e.j,
                    matrix: Matrix::from_rows(&e.matrix)?,
                })
            })
            .collect::<Result<Vec<_>, GameError>>()?;
        PolymatrixGame::new(file.action_counts, edges, file.zero_sum)
    }
}

impl From<&PolymatrixGame> for GameFile {
    fn from(game: &PolymatrixGame) -> Self {
        Self {
            n: game.num_players(),
            action_counts: game.action_counts().to_vec(),
            zero_sum: game.is_zero_sum(),
            edges: game
                .edges()
                .iter()
                .map(|e| EdgeFile {
                    i: e.from,
                    j: e.to,
                    matrix: e.matrix.to_rows(),
                })
                .collect(),
        }
    }
}

impl PolymatrixGame {
    pub fn from_json(text: &str) -> Result<Self, GameError> {
        let file: GameFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&GameFile::from(self)).expect("game serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GameError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GameError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{generate_game, GameKind, GraphSpec};

    #[test]
    fn json_round_trip_is_exact() {
        let g = generate_game(GameKind::RandomZeroSum, 3, 3, GraphSpec::Cycle, 11).unwrap();
        let back = PolymatrixGame::from_json(&g.to_json()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn loader_rejects_invalid_files() {
        let missing_reverse = r#"{"n":2,"action_counts":[2,2],"zero_sum":false,
            "edges":[{"i":0,"j":1,"matrix":[[1,0],[0,1]]}]}"#;
        assert!(PolymatrixGame::from_json(missing_reverse).is_err());
        let wrong_n = r#"{"n":3,"action_counts":[2,2],"zero_sum":false,"edges":[]}"#;
        assert!(PolymatrixGame::from_json(wrong_n).is_err());
        let not_zero_sum = r#"{"n":2,"action_counts":[1,1],"zero_sum":true,
            "edges":[{"i":0,"j":1,"matrix":[[1]]},{"i":1,"j":0,"matrix":[[1]]}]}"#;
        assert!(matches!(
            PolymatrixGame::from_json(not_zero_sum),
            Err(GameError::NotZeroSum { .. })
        ));
        let ragged = r#"{"n":2,"action_counts":[2,2],"zero_sum":false,
            "edges":[{"i":0,"j":1,"matrix":[[1,0],[0]]},{"i":1,"j":0,"matrix":[[1,0],[0,1]]}]}"#;
        assert!(PolymatrixGame::from_json(ragged).is_err());
    }
}
