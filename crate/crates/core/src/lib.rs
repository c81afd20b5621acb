//! Simulation library for uncoupled learning dynamics in games with linear
//! utilities, built around the average-to-last-iterate (A2L) reduction.
//!
//! - [`game`]: polymatrix games, strategies, utility vectors, total gap.
//! - [`learners`]: MWU / OMWU under a pull-strategy, push-utility contract.
//! - [`a2l`]: the wrapper that plays the running average of any learner.
//! - [`dynamics`]: full-feedback self-play, regret accounting, robustness monitor.
//! - [`bandit`]: epoch-based bandit variant with estimation audits.
//! - [`fisher`]: proportional response dynamics in linear Fisher markets.
//! - [`harness`]: configs, persisted runs, rate fitting, verification suites.

pub mod a2l;
pub mod bandit;
pub mod dynamics;
pub mod fisher;
pub mod game;
pub mod harness;
pub mod learners;
pub mod rng;

pub use a2l::{A2l, WeightRule};
pub use game::{MixedStrategy, PolymatrixGame, StrategyProfile, UtilityVector};
pub use learners::{BaseAlgorithm, Learner, LearnerError};
