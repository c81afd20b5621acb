#ifndef A2L_H
#define A2L_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum A2lStatus {
  A2L_STATUS_OK = 0,
  A2L_STATUS_NULL_POINTER = 1,
  A2L_STATUS_INVALID_UTF8 = 2,
  A2L_STATUS_INVALID_ARGUMENT = 3,
  // Output buffer length does not match.
  A2L_STATUS_BUFFER_SIZE = 4,
  A2L_STATUS_GAME = 5,
  A2L_STATUS_LEARNER = 6,
  A2L_STATUS_HARNESS = 7,
  // A verification suite or run completed with failing checks.
  A2L_STATUS_CHECKS_FAILED = 8,
  A2L_STATUS_PANIC = 9,
} A2lStatus;

// Opaque game handle.
typedef struct A2lGame A2lGame;

// Opaque learner handle.
typedef struct A2lLearner A2lLearner;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *a2l_last_error_message(void);

// # Safety
// `s` must be NULL or a string returned by this library.
void a2l_string_free(char *s);

// Builds a built-in game: `kind` is `matching_pennies`, `rps`, `random_zs`
// or `random_gs`; random games use a complete graph.
//
// # Safety
// `kind` must be a NUL-terminated string; `out` must be writable.
enum A2lStatus a2l_game_generate(const char *kind,
                                 size_t n,
                                 size_t d,
                                 uint64_t seed,
                                 struct A2lGame **out);

// Parses a game in the JSON game-file format.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum A2lStatus a2l_game_from_json(const char *json, struct A2lGame **out);

// # Safety
// `game` must be NULL or a handle from this library, not yet freed.
void a2l_game_free(struct A2lGame *game);

// Number of players; 0 for a NULL handle.
//
// # Safety
// `game` must be NULL or a live handle.
size_t a2l_game_num_players(const struct A2lGame *game);

// # Safety
// `game` must be a live handle; `out` must be writable.
enum A2lStatus a2l_game_action_count(const struct A2lGame *game, size_t player, size_t *out);

// Writes u_player(·, x_{-player}) into `out` (length d_player).
//
// # Safety
// `profile` must hold `profile_len` doubles and `out` `out_len` doubles.
enum A2lStatus a2l_game_utility_vector(const struct A2lGame *game,
                                       const double *profile,
                                       size_t profile_len,
                                       size_t player,
                                       double *out,
                                       size_t out_len);

// # Safety
// `profile` must hold `profile_len` doubles; `out` must be writable.
enum A2lStatus a2l_game_total_gap(const struct A2lGame *game,
                                  const double *profile,
                                  size_t profile_len,
                                  double *out);

// Creates a learner over `d` actions. `algorithm` is `mwu`, `omwu`,
// `a2l-mwu` or `a2l-omwu`; `weights` is `uniform`, `linear` or NULL
// (uniform) and only affects `a2l-` learners.
//
// # Safety
// String arguments must be NUL-terminated (or NULL for `weights`); `out`
// must be writable.
enum A2lStatus a2l_learner_new(const char *algorithm,
                               size_t d,
                               double eta,
                               const char *weights,
                               struct A2lLearner **out);

// Writes the strategy for the coming round into `out` (length d). Calls
// must alternate with [`a2l_learner_observe`].
//
// # Safety
// `learner` must be a live handle; `out` must hold `out_len` doubles.
enum A2lStatus a2l_learner_next(struct A2lLearner *learner, double *out, size_t out_len);

// Feeds the utility vector of the round just played.
//
// # Safety
// `learner` must be a live handle; `utility` must hold `len` doubles.
enum A2lStatus a2l_learner_observe(struct A2lLearner *learner, const double *utility, size_t len);

// # Safety
// `learner` must be NULL or a handle from this library, not yet freed.
void a2l_learner_free(struct A2lLearner *learner);

// Runs a gradient-mode experiment config (JSON), writing its CSVs and
// summary to the config's output directory. The summary JSON is returned
// through `summary_out` when it is not NULL. Returns
// `A2L_STATUS_CHECKS_FAILED` if any per-run check failed.
//
// # Safety
// `config_json` must be NUL-terminated; `summary_out` must be NULL or
// writable.
enum A2lStatus a2l_run_gradient(const char *config_json, char **summary_out);

// Runs a named verification suite; `seeds` of 0 keeps the default count.
// The JSON report is returned through `report_out` when it is not NULL.
//
// # Safety
// `suite` must be NUL-terminated; `report_out` must be NULL or writable.
enum A2lStatus a2l_verify(const char *suite, uint64_t seeds, char **report_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* A2L_H */
