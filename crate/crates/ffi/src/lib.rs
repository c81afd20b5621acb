//! C ABI over `a2l-core`. Games and learners are opaque handles owned by the
//! caller and released with their `_free` function. Every fallible call
//! returns an [`A2lStatus`]; on failure [`a2l_last_error_message`] describes
//! the problem. Strings returned through out-pointers are released with
//! [`a2l_string_free`].
//!
//! Strategy profiles cross the boundary as one flat array: player 0's
//! probabilities, then player 1's, and so on.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use a2l_core::dynamics::AlgorithmName;
use a2l_core::game::{generate_game, GraphSpec};
use a2l_core::harness::{self, ExperimentConfig, Mode, VerifyOptions};
use a2l_core::learners::MultiplicativeWeights;
use a2l_core::{A2l, Learner, MixedStrategy, PolymatrixGame, StrategyProfile, UtilityVector, WeightRule};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum A2lStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    /// Output buffer length does not match.
    BufferSize = 4,
    Game = 5,
    Learner = 6,
    Harness = 7,
    /// A verification suite or run completed with failing checks.
    ChecksFailed = 8,
    Panic = 9,
}

/// Opaque game handle.
pub struct A2lGame(PolymatrixGame);

/// Opaque learner handle.
pub struct A2lLearner(Box<dyn Learner + Send>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(A2lStatus, String);

impl Failure {
    fn new(status: A2lStatus, msg: impl std::fmt::Display) -> Self {
        Self(status, msg.to_string())
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<A2lStatus, Failure>) -> A2lStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            A2lStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(A2lStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(A2lStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(Failure::new(A2lStatus::NullPointer, format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(Failure::new(A2lStatus::NullPointer, format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::new(A2lStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn game_arg<'a>(game: *const A2lGame) -> Result<&'a PolymatrixGame, Failure> {
    game.as_ref()
        .map(|g| &g.0)
        .ok_or_else(|| Failure::new(A2lStatus::NullPointer, "`game` is null"))
}

fn game_err(e: impl std::fmt::Display) -> Failure {
    Failure::new(A2lStatus::Game, e)
}

fn harness_err(e: impl std::fmt::Display) -> Failure {
    Failure::new(A2lStatus::Harness, e)
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s).expect("JSON has no NUL").into_raw()
}

fn profile_from(game: &PolymatrixGame, flat: &[f64]) -> Result<StrategyProfile, Failure> {
    let total: usize = game.action_counts().iter().sum();
    if flat.len() != total {
        return Err(Failure::new(
            A2lStatus::BufferSize,
            format!("profile has {} entries, game needs {total}", flat.len()),
        ));
    }
    let mut k = 0;
    let mut strategies = Vec::with_capacity(game.num_players());
    for &d in game.action_counts() {
        strategies.push(MixedStrategy::new(flat[k..k + d].to_vec()).map_err(game_err)?);
        k += d;
    }
    Ok(strategies.into())
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn a2l_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn a2l_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a built-in game: `kind` is `matching_pennies`, `rps`, `random_zs`
/// or `random_gs`; random games use a complete graph.
///
/// # Safety
/// `kind` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn a2l_game_generate(
    kind: *const c_char,
    n: usize,
    d: usize,
    seed: u64,
    out: *mut *mut A2lGame,
) -> A2lStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let kind = str_arg(kind, "kind")?.parse().map_err(|e| Failure::new(A2lStatus::InvalidArgument, e))?;
        let game = generate_game(kind, n, d, GraphSpec::Complete, seed).map_err(game_err)?;
        *out = Box::into_raw(Box::new(A2lGame(game)));
        Ok(A2lStatus::Ok)
    })
}

/// Parses a game in the JSON game-file format.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn a2l_game_from_json(json: *const c_char, out: *mut *mut A2lGame) -> A2lStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let game = PolymatrixGame::from_json(str_arg(json, "json")?).map_err(game_err)?;
        *out = Box::into_raw(Box::new(A2lGame(game)));
        Ok(A2lStatus::Ok)
    })
}

/// # Safety
/// `game` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn a2l_game_free(game: *mut A2lGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Number of players; 0 for a NULL handle.
///
/// # Safety
/// `game` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn a2l_game_num_players(game: *const A2lGame) -> usize {
    game.as_ref().map_or(0, |g| g.0.num_players())
}

/// # Safety
/// `game` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn a2l_game_action_count(game: *const A2lGame, player: usize, out: *mut usize) -> A2lStatus {
    guard(|| {
        let game = game_arg(game)?;
        let out = out_arg(out, "out")?;
        *out = *game
            .action_counts()
            .get(player)
            .ok_or_else(|| Failure::new(A2lStatus::InvalidArgument, format!("no player {player}")))?;
        Ok(A2lStatus::Ok)
    })
}

/// Writes u_player(·, x_{-player}) into `out` (length d_player).
///
/// # Safety
/// `profile` must hold `profile_len` doubles and `out` `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn a2l_game_utility_vector(
    game: *const A2lGame,
    profile: *const f64,
    profile_len: usize,
    player: usize,
    out: *mut f64,
    out_len: usize,
) -> A2lStatus {
    guard(|| {
        let game = game_arg(game)?;
        let x = profile_from(game, slice_arg(profile, profile_len, "profile")?)?;
        let u = game.utility_vector(player, &x).map_err(game_err)?;
        let out = slice_out(out, out_len, "out")?;
        if out.len() != u.dim() {
            return Err(Failure::new(A2lStatus::BufferSize, format!("out has {} entries, need {}", out.len(), u.dim())));
        }
        out.copy_from_slice(u.values());
        Ok(A2lStatus::Ok)
    })
}

/// # Safety
/// `profile` must hold `profile_len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn a2l_game_total_gap(
    game: *const A2lGame,
    profile: *const f64,
    profile_len: usize,
    out: *mut f64,
) -> A2lStatus {
    guard(|| {
        let game = game_arg(game)?;
        let x = profile_from(game, slice_arg(profile, profile_len, "profile")?)?;
        *out_arg(out, "out")? = game.total_gap(&x).map_err(game_err)?;
        Ok(A2lStatus::Ok)
    })
}

/// Creates a learner over `d` actions. `algorithm` is `mwu`, `omwu`,
/// `a2l-mwu` or `a2l-omwu`; `weights` is `uniform`, `linear` or NULL
/// (uniform) and only affects `a2l-` learners.
///
/// # Safety
/// String arguments must be NUL-terminated (or NULL for `weights`); `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn a2l_learner_new(
    algorithm: *const c_char,
    d: usize,
    eta: f64,
    weights: *const c_char,
    out: *mut *mut A2lLearner,
) -> A2lStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let invalid = |e: String| Failure::new(A2lStatus::InvalidArgument, e);
        let algorithm: AlgorithmName = str_arg(algorithm, "algorithm")?.parse().map_err(invalid)?;
        let rule: WeightRule = if weights.is_null() {
            WeightRule::Uniform
        } else {
            str_arg(weights, "weights")?.parse().map_err(invalid)?
        };
        let base = MultiplicativeWeights::new(algorithm.base, d, eta)
            .map_err(|e| Failure::new(A2lStatus::Learner, e))?;
        let learner: Box<dyn Learner + Send> =
            if algorithm.reduced { Box::new(A2l::new(base, rule)) } else { Box::new(base) };
        *out = Box::into_raw(Box::new(A2lLearner(learner)));
        Ok(A2lStatus::Ok)
    })
}

/// Writes the strategy for the coming round into `out` (length d). Calls
/// must alternate with [`a2l_learner_observe`].
///
/// # Safety
/// `learner` must be a live handle; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn a2l_learner_next(learner: *mut A2lLearner, out: *mut f64, out_len: usize) -> A2lStatus {
    guard(|| {
        let learner = out_arg(learner, "learner")?;
        let out = slice_out(out, out_len, "out")?;
        if out.len() != learner.0.dim() {
            return Err(Failure::new(
                A2lStatus::BufferSize,
                format!("out has {} entries, learner has {} actions", out.len(), learner.0.dim()),
            ));
        }
        let x = learner.0.next_strategy().map_err(|e| Failure::new(A2lStatus::Learner, e))?;
        out.copy_from_slice(x.probs());
        Ok(A2lStatus::Ok)
    })
}

/// Feeds the utility vector of the round just played.
///
/// # Safety
/// `learner` must be a live handle; `utility` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn a2l_learner_observe(learner: *mut A2lLearner, utility: *const f64, len: usize) -> A2lStatus {
    guard(|| {
        let learner = out_arg(learner, "learner")?;
        let u = UtilityVector::new(slice_arg(utility, len, "utility")?.to_vec())
            .map_err(|e| Failure::new(A2lStatus::InvalidArgument, e))?;
        learner.0.observe(&u).map_err(|e| Failure::new(A2lStatus::Learner, e))?;
        Ok(A2lStatus::Ok)
    })
}

/// # Safety
/// `learner` must be NULL or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn a2l_learner_free(learner: *mut A2lLearner) {
    if !learner.is_null() {
        drop(Box::from_raw(learner));
    }
}

/// Runs a gradient-mode experiment config (JSON), writing its CSVs and
/// summary to the config's output directory. The summary JSON is returned
/// through `summary_out` when it is not NULL. Returns
/// `A2L_STATUS_CHECKS_FAILED` if any per-run check failed.
///
/// # Safety
/// `config_json` must be NUL-terminated; `summary_out` must be NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn a2l_run_gradient(config_json: *const c_char, summary_out: *mut *mut c_char) -> A2lStatus {
    guard(|| {
        let config = ExperimentConfig::from_json(str_arg(config_json, "config_json")?).map_err(harness_err)?;
        if config.mode != Mode::Gradient {
            return Err(Failure::new(A2lStatus::InvalidArgument, format!("config mode is {}, not gradient", config.mode)));
        }
        let summary = harness::run(&config).map_err(harness_err)?;
        if let Some(out) = summary_out.as_mut() {
            *out = into_c_string(serde_json::to_string_pretty(&summary).map_err(harness_err)?);
        }
        Ok(if summary.all_checks_pass { A2lStatus::Ok } else { A2lStatus::ChecksFailed })
    })
}

/// Runs a named verification suite; `seeds` of 0 keeps the default count.
/// The JSON report is returned through `report_out` when it is not NULL.
///
/// # Safety
/// `suite` must be NUL-terminated; `report_out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn a2l_verify(suite: *const c_char, seeds: u64, report_out: *mut *mut c_char) -> A2lStatus {
    guard(|| {
        let mut opts = VerifyOptions::default();
        if seeds > 0 {
            opts.seeds = seeds;
        }
        let report = harness::verify(str_arg(suite, "suite")?, &opts).map_err(|e| match e {
            harness::HarnessError::UnknownSuite { .. } => Failure::new(A2lStatus::InvalidArgument, e),
            e => harness_err(e),
        })?;
        if let Some(out) = report_out.as_mut() {
            *out = into_c_string(serde_json::to_string_pretty(&report).map_err(harness_err)?);
        }
        Ok(if report.pass { A2lStatus::Ok } else { A2lStatus::ChecksFailed })
    })
}
