#ifndef PETC_H
#define PETC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PetcStatus {
  PETC_STATUS_OK = 0,
  PETC_STATUS_NULL_POINTER = 1,
  PETC_STATUS_INVALID_INPUT = 2,
  PETC_STATUS_CONFIG = 3,
  PETC_STATUS_DESIGN = 4,
  PETC_STATUS_NUMERIC = 5,
  PETC_STATUS_ABSTRACTION = 6,
  // Some initial state is losing; the partial strategy is still returned.
  PETC_STATUS_SYNTHESIS_FAILED = 7,
  // The queried state is outside the winning set.
  PETC_STATUS_NOT_WINNING = 8,
  PETC_STATUS_IO = 9,
  // The output buffer is too small; the required length was written.
  PETC_STATUS_BUFFER_TOO_SMALL = 10,
  // The project must be abstracted first.
  PETC_STATUS_NOT_ABSTRACTED = 11,
  PETC_STATUS_INTERNAL = 12,
} PetcStatus;

// A loaded project configuration and, once computed, its abstraction.
typedef struct PetcProject PetcProject;

// A scheduler strategy: the allowed moves of every winning state.
typedef struct PetcStrategy PetcStrategy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated)
// and stores its length, without the terminator, in `len`.
//
// # Safety
// `buf` must point to `cap` writable bytes or be null with `cap == 0`;
// `len` must be valid for writes.
enum PetcStatus petc_last_error(char *buf, size_t cap, size_t *len);

// Parses a project configuration from TOML text.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be valid for writes.
enum PetcStatus petc_project_from_toml(const char *toml, struct PetcProject **out);

// Loads a project configuration file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writes.
enum PetcStatus petc_project_load(const char *path, struct PetcProject **out);

// # Safety
// `project` must come from this library and not be used afterwards.
void petc_project_free(struct PetcProject *project);

// # Safety
// `project` must be a live handle and `n` valid for writes.
enum PetcStatus petc_project_num_loops(const struct PetcProject *project, size_t *n);

// Computes regions, transition relations and traffic models of every loop.
//
// # Safety
// `project` must be a live handle.
enum PetcStatus petc_project_abstract(struct PetcProject *project);

// Region range `[k_min, k_max]` of loop `loop_id` (1-based).
//
// # Safety
// `project` must be a live handle; `k_min` and `k_max` valid for writes.
enum PetcStatus petc_project_region_bounds(const struct PetcProject *project,
                                           size_t loop_id,
                                           size_t *k_min,
                                           size_t *k_max);

// Trigger and early edge counts of loop `loop_id` (1-based).
//
// # Safety
// `project` must be a live handle; `trigger` and `early` valid for writes.
enum PetcStatus petc_project_edge_counts(const struct PetcProject *project,
                                         size_t loop_id,
                                         size_t *trigger,
                                         size_t *early);

// Region index of the held state `x` (length `n`) for loop `loop_id`.
//
// # Safety
// `project` must be a live handle, `x` must point to `n` doubles and
// `region` must be valid for writes.
enum PetcStatus petc_region_of_state(const struct PetcProject *project,
                                     size_t loop_id,
                                     const double *x,
                                     size_t n,
                                     size_t *region);

// Builds and solves the scheduling game. On `SynthesisFailed` the strategy
// over the winning states is still stored in `out`.
//
// # Safety
// `project` must be a live handle and `out` valid for writes.
enum PetcStatus petc_project_synthesize(const struct PetcProject *project,
                                        struct PetcStrategy **out);

// # Safety
// `strategy` must come from this library and not be used afterwards.
void petc_strategy_free(struct PetcStrategy *strategy);

// Number of winning states.
//
// # Safety
// `strategy` must be a live handle and `n` valid for writes.
enum PetcStatus petc_strategy_winning_len(const struct PetcStrategy *strategy, size_t *n);

// Writes the strategy in its line format.
//
// # Safety
// `strategy` must be a live handle and `path` a NUL-terminated string.
enum PetcStatus petc_strategy_write(const struct PetcStrategy *strategy, const char *path);

// Reads a strategy file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for writes.
enum PetcStatus petc_strategy_read(const char *path, struct PetcStrategy **out);

// Allowed moves at `state`, given in the strategy file syntax
// (`"6,4 5,1 idle:0 0"`). Moves are encoded as `0` for waiting and `l` for
// an early communication of loop `l` (1-based). At most `cap` moves are
// written to `moves`; `n` receives the total count.
//
// # Safety
// `strategy` must be a live handle, `state` a NUL-terminated string,
// `moves` must point to `cap` writable slots (or be null with `cap == 0`)
// and `n` must be valid for writes.
enum PetcStatus petc_strategy_query(const struct PetcStrategy *strategy,
                                    const char *state,
                                    uint32_t *moves,
                                    size_t cap,
                                    size_t *n);

// `e' = clamp(e + r(i − k) − e_ref, 0, bound)`.
//
// # Safety
// `out` must be valid for writes.
enum PetcStatus petc_earliness_update(uint32_t e,
                                      size_t i,
                                      size_t k,
                                      uint32_t r,
                                      uint32_t e_ref,
                                      uint32_t bound,
                                      uint32_t *out);

// Library version as a static NUL-terminated string.
const char *petc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PETC_H */
