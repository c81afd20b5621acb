use std::ffi::{c_char, CStr, CString};
use std::ptr;

use a2l_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = a2l_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned()
}

fn take_string(p: *mut c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_owned();
    unsafe { a2l_string_free(p) };
    s
}

#[test]
fn pennies_utilities_and_gap() {
    let mut game = ptr::null_mut();
    unsafe {
        assert_eq!(a2l_game_generate(c("matching_pennies").as_ptr(), 2, 2, 0, &mut game), A2lStatus::Ok);
        assert_eq!(a2l_game_num_players(game), 2);
        let mut d = 0;
        assert_eq!(a2l_game_action_count(game, 1, &mut d), A2lStatus::Ok);
        assert_eq!(d, 2);
        let profile = [0.3, 0.7, 0.5, 0.5];
        let mut u = [0.0; 2];
        assert_eq!(a2l_game_utility_vector(game, profile.as_ptr(), 4, 0, u.as_mut_ptr(), 2), A2lStatus::Ok);
        assert_eq!(u, [0.5, 0.5]);
        let mut gap = f64::NAN;
        assert_eq!(a2l_game_total_gap(game, profile.as_ptr(), 4, &mut gap), A2lStatus::Ok);
        // Player 1 gains 0.2 by best-responding to (0.3, 0.7); player 0 is indifferent.
        assert!((gap - 0.2).abs() < 1e-15);
        assert_eq!(a2l_game_utility_vector(game, profile.as_ptr(), 4, 0, u.as_mut_ptr(), 1), A2lStatus::BufferSize);
        assert_eq!(a2l_game_total_gap(game, profile.as_ptr(), 3, &mut gap), A2lStatus::BufferSize);
        a2l_game_free(game);
    }
}

#[test]
fn errors_set_the_last_message() {
    let mut game = ptr::null_mut();
    unsafe {
        assert_eq!(a2l_game_generate(c("chess").as_ptr(), 2, 2, 0, &mut game), A2lStatus::InvalidArgument);
        assert!(last_error().contains("chess"));
        assert_eq!(a2l_game_generate(ptr::null(), 2, 2, 0, &mut game), A2lStatus::NullPointer);
        assert!(game.is_null());
        assert_eq!(a2l_game_from_json(c("{\"n\": 1}").as_ptr(), &mut game), A2lStatus::Game);
        let mut d = 0;
        assert_eq!(a2l_game_action_count(ptr::null(), 0, &mut d), A2lStatus::NullPointer);
        assert_eq!(a2l_game_num_players(ptr::null()), 0);
        a2l_game_free(ptr::null_mut());
        a2l_learner_free(ptr::null_mut());
        a2l_string_free(ptr::null_mut());
    }
}

#[test]
fn json_games_round_trip_through_the_handle() {
    let json = r#"{"n": 2, "action_counts": [2, 2], "zero_sum": true,
        "edges": [{"i": 0, "j": 1, "matrix": [[1, 0], [0, 1]]}, {"i": 1, "j": 0, "matrix": [[-1, 0], [0, -1]]}]}"#;
    let mut game = ptr::null_mut();
    unsafe {
        assert_eq!(a2l_game_from_json(c(json).as_ptr(), &mut game), A2lStatus::Ok);
        let mut u = [0.0; 2];
        let profile = [1.0, 0.0, 0.25, 0.75];
        assert_eq!(a2l_game_utility_vector(game, profile.as_ptr(), 4, 1, u.as_mut_ptr(), 2), A2lStatus::Ok);
        assert_eq!(u, [-1.0, 0.0]);
        a2l_game_free(game);
    }
}

/// Self-play through the C interface equals self-play through the library.
#[test]
fn learner_self_play_matches_the_library() {
    use a2l_core::dynamics::{run_full_feedback, AlgorithmName, LearnerSpec, PlayerSpec};
    use a2l_core::game::{generate_game, GameKind, GraphSpec};

    let eta = 0.5;
    let mut game = ptr::null_mut();
    let mut learners = [ptr::null_mut(), ptr::null_mut()];
    unsafe {
        assert_eq!(a2l_game_generate(c("rps").as_ptr(), 2, 3, 0, &mut game), A2lStatus::Ok);
        for l in &mut learners {
            assert_eq!(a2l_learner_new(c("a2l-omwu").as_ptr(), 3, eta, c("linear").as_ptr(), l), A2lStatus::Ok);
        }
    }
    let lib_game = generate_game(GameKind::RockPaperScissors, 2, 3, GraphSpec::Complete, 0).unwrap();
    let spec: PlayerSpec = LearnerSpec::new(AlgorithmName::A2L_OMWU)
        .with_eta(eta)
        .with_weights(a2l_core::WeightRule::Linear)
        .into();
    let traj = run_full_feedback(&lib_game, &[spec.clone(), spec], 200, 0).unwrap();
    for r in &traj.rounds {
        let mut profile = [0.0; 6];
        unsafe {
            for (i, l) in learners.iter().enumerate() {
                assert_eq!(a2l_learner_next(*l, profile[3 * i..].as_mut_ptr(), 3), A2lStatus::Ok);
            }
            for (i, l) in learners.iter().enumerate() {
                assert_eq!(profile[3 * i..3 * i + 3], *r.profile[i].probs());
                let mut u = [0.0; 3];
                assert_eq!(a2l_game_utility_vector(game, profile.as_ptr(), 6, i, u.as_mut_ptr(), 3), A2lStatus::Ok);
                assert_eq!(a2l_learner_observe(*l, u.as_ptr(), 3), A2lStatus::Ok);
            }
        }
    }
    unsafe {
        let mut x = [0.0; 3];
        assert_eq!(a2l_learner_next(learners[0], x.as_mut_ptr(), 3), A2lStatus::Ok);
        assert_eq!(a2l_learner_next(learners[0], x.as_mut_ptr(), 3), A2lStatus::Learner);
        assert!(last_error().contains("twice"));
        for l in learners {
            a2l_learner_free(l);
        }
        a2l_game_free(game);
    }
}

#[test]
fn learner_arguments_are_validated() {
    let mut l = ptr::null_mut();
    unsafe {
        assert_eq!(a2l_learner_new(c("sgd").as_ptr(), 3, 0.1, ptr::null(), &mut l), A2lStatus::InvalidArgument);
        assert_eq!(a2l_learner_new(c("mwu").as_ptr(), 3, -0.1, ptr::null(), &mut l), A2lStatus::Learner);
        assert_eq!(a2l_learner_new(c("mwu").as_ptr(), 3, 0.1, c("cubic").as_ptr(), &mut l), A2lStatus::InvalidArgument);
        assert!(l.is_null());
        assert_eq!(a2l_learner_new(c("mwu").as_ptr(), 3, 0.1, ptr::null(), &mut l), A2lStatus::Ok);
        let u = [1.0, f64::NAN, 0.0];
        assert_eq!(a2l_learner_observe(l, u.as_ptr(), 3), A2lStatus::InvalidArgument);
        a2l_learner_free(l);
    }
}

#[test]
fn verify_and_run_return_json() {
    let mut report = ptr::null_mut();
    unsafe {
        assert_eq!(a2l_verify(c("contrast").as_ptr(), 0, &mut report), A2lStatus::Ok);
        let json: serde_json::Value = serde_json::from_str(&take_string(report)).unwrap();
        assert_eq!(json["suite"], "contrast");
        assert_eq!(a2l_verify(c("nonexistent").as_ptr(), 0, ptr::null_mut()), A2lStatus::InvalidArgument);
        assert!(last_error().contains("average_equivalence"));
    }

    let dir = std::env::temp_dir().join(format!("a2l-ffi-run-{}", std::process::id()));
    let config = serde_json::json!({
        "mode": "gradient",
        "game": {"generate": {"kind": "rps"}},
        "rounds": 100,
        "seeds": [0, 1],
        "out_dir": dir,
    });
    let mut summary = ptr::null_mut();
    unsafe {
        assert_eq!(a2l_run_gradient(c(&config.to_string()).as_ptr(), &mut summary), A2lStatus::Ok);
        let json: serde_json::Value = serde_json::from_str(&take_string(summary)).unwrap();
        assert_eq!(json["schema_version"], 1);
        assert_eq!(json["runs"].as_array().unwrap().len(), 2);
    }
    assert!(dir.join("gradient_seed1.csv").is_file());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/a2l.h")).unwrap();
    for name in [
        "a2l_last_error_message",
        "a2l_string_free",
        "a2l_game_generate",
        "a2l_game_from_json",
        "a2l_game_free",
        "a2l_game_num_players",
        "a2l_game_action_count",
        "a2l_game_utility_vector",
        "a2l_game_total_gap",
        "a2l_learner_new",
        "a2l_learner_next",
        "a2l_learner_observe",
        "a2l_learner_free",
        "a2l_run_gradient",
        "a2l_verify",
        "typedef struct A2lGame A2lGame",
        "A2L_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "{name} missing from a2l.h");
    }
}

/// Compiles and runs a C program against the generated header and the
/// static library built alongside this test.
#[test]
fn c_program_links_against_the_static_library() {
    let exe = std::env::current_exe().unwrap();
    let lib = exe.with_file_name("liba2l_ffi.a");
    assert!(lib.is_file(), "{} not built", lib.display());
    let manifest = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = std::env::temp_dir().join(format!("a2l-smoke-{}", std::process::id()));
    let status = std::process::Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let run = std::process::Command::new(&out).output().unwrap();
    std::fs::remove_file(&out).unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "exit {:?}: {stdout}", run.status.code());
    assert!(stdout.contains("chess"));
}
