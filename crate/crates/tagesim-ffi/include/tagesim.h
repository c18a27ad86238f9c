#ifndef TAGESIM_H
#define TAGESIM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TsBranchKind {
  TS_BRANCH_KIND_CONDITIONAL_TAKEN = 0,
  TS_BRANCH_KIND_CONDITIONAL_NOT_TAKEN = 1,
  TS_BRANCH_KIND_INDIRECT_TAKEN = 2,
  TS_BRANCH_KIND_DIRECT_UNCONDITIONAL = 3,
} TsBranchKind;

// Core type whose history model or predictor sizing is used.
typedef enum TsPreset {
  TS_PRESET_FIRESTORM = 0,
  TS_PRESET_ICESTORM = 1,
} TsPreset;

// Result code of every call.
typedef enum TsStatus {
  TS_STATUS_OK = 0,
  TS_STATUS_NULL_POINTER = 1,
  TS_STATUS_INVALID_ARGUMENT = 2,
  TS_STATUS_INVALID_CONFIG = 3,
  TS_STATUS_WIDTH_MISMATCH = 4,
  TS_STATUS_UPDATE_WITHOUT_PREDICT = 5,
  TS_STATUS_PANIC = 6,
} TsStatus;

// Opaque branch history register handle.
typedef struct TsHistory TsHistory;

// Opaque predictor handle.
typedef struct TsPredictor TsPredictor;

// Execution context used for security tags.
typedef struct TsContext {
  // 0 for user mode, 1 for kernel mode.
  uint8_t exception_level;
  uint32_t process_id;
} TsContext;

typedef struct TsPrediction {
  bool taken;
  // 0 for the base predictor, 1..=T for tagged tables.
  uint32_t provider;
  bool alt_taken;
  uint32_t alt_provider;
} TsPrediction;

// One executed branch. `imm` is the signed word offset of a conditional;
// `target` is used by indirect and direct branches.
typedef struct TsBranchEvent {
  enum TsBranchKind kind;
  uint64_t pc;
  uint64_t target;
  int32_t imm;
} TsBranchEvent;

typedef struct TsEstimate {
  int32_t exponent;
  // Natural log of the Chernoff bound at `exponent`.
  double chernoff_log_bound;
  // Set when no success was observed; `exponent` is then a lower bound.
  bool lower_bound_only;
} TsEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread, or null.
//
// The pointer stays valid until the next failing call on this thread.
const char *ts_last_error_message(void);

// Creates a predictor with the preset's sizing.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum TsStatus ts_predictor_new(enum TsPreset preset, uint64_t seed, struct TsPredictor **out);

// Creates a predictor from a JSON predictor config.
//
// # Safety
// `json` must be a valid NUL-terminated string and `out` a valid pointer
// to writable storage for one handle.
enum TsStatus ts_predictor_from_json(const char *json, uint64_t seed, struct TsPredictor **out);

// Releases a predictor. Null is ignored.
//
// # Safety
// `p` must be null or a handle returned by this library and not yet freed.
void ts_predictor_free(struct TsPredictor *p);

// Clears every table and the base predictor.
//
// # Safety
// `p` must be null or a live predictor handle.
enum TsStatus ts_predictor_reset(struct TsPredictor *p);

// Number of tagged tables.
//
// # Safety
// `p` must be null or a live predictor handle; `out` must be null or valid.
enum TsStatus ts_predictor_num_tables(const struct TsPredictor *p, uint32_t *out);

// Predicts the branch at `pc` under the history; the next
// [`ts_predictor_update`] must be for the same branch, history and context.
//
// # Safety
// Handles must be null or live; `out` must be null or valid.
enum TsStatus ts_predictor_predict(struct TsPredictor *p,
                                   uint64_t pc,
                                   const struct TsHistory *h,
                                   struct TsContext ctx,
                                   struct TsPrediction *out);

// Trains the predictor with the resolved outcome of the last predicted
// branch. `mispredicted` may be null.
//
// # Safety
// Handles must be null or live; `mispredicted` must be null or valid.
enum TsStatus ts_predictor_update(struct TsPredictor *p,
                                  uint64_t pc,
                                  const struct TsHistory *h,
                                  bool taken,
                                  struct TsContext ctx,
                                  bool *mispredicted);

// Table that would provide the prediction, without changing state.
//
// # Safety
// Handles must be null or live; `out` must be null or valid.
enum TsStatus ts_predictor_provider_of(const struct TsPredictor *p,
                                       uint64_t pc,
                                       const struct TsHistory *h,
                                       struct TsContext ctx,
                                       uint32_t *out);

// Creates an all-zero history register for the preset's model.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum TsStatus ts_history_new(enum TsPreset preset, struct TsHistory **out);

// Releases a history. Null is ignored.
//
// # Safety
// `h` must be null or a handle returned by this library and not yet freed.
void ts_history_free(struct TsHistory *h);

// Applies one executed branch to the history.
//
// # Safety
// `h` must be null or a live history handle.
enum TsStatus ts_history_push(struct TsHistory *h, struct TsBranchEvent e);

// Resets the history to all zeros.
//
// # Safety
// `h` must be null or a live history handle.
enum TsStatus ts_history_clear(struct TsHistory *h);

// History width in bits.
//
// # Safety
// `h` must be null or a live history handle; `out` must be null or valid.
enum TsStatus ts_history_width(const struct TsHistory *h, uint32_t *out);

// Value of history bit `i`; bit 0 is the youngest.
//
// # Safety
// `h` must be null or a live history handle; `out` must be null or valid.
enum TsStatus ts_history_bit(const struct TsHistory *h, uint32_t i, bool *out);

// Search-space exponent from `successes` out of `trials`.
//
// # Safety
// `out` must be null or a valid pointer.
enum TsStatus ts_estimate_search_space(uint64_t trials, uint64_t successes, struct TsEstimate *out);

// Success probability of one brute-force trial against a victim served
// by table `i` of `t`, with per-table aliasing probability `p`.
//
// # Safety
// `out` must be null or a valid pointer.
enum TsStatus ts_p_succ(double p, uint32_t i, uint32_t t, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAGESIM_H */
