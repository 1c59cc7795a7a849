#ifndef D2C_H
#define D2C_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum D2cStatus {
  D2C_STATUS_OK = 0,
  D2C_STATUS_NULL_ARGUMENT = 1,
  D2C_STATUS_INVALID_UTF8 = 2,
  D2C_STATUS_INVALID_INPUT = 3,
  D2C_STATUS_INVALID_GEOMETRY = 4,
  D2C_STATUS_CHECKPOINT = 5,
  D2C_STATUS_INTERNAL = 6,
  D2C_STATUS_PANIC = 7,
} D2cStatus;

// Loaded model.
typedef struct D2cModel D2cModel;

// Fixed-length CAD command sequence.
typedef struct D2cSequence D2cSequence;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *d2c_last_error_message(void);

// Loads a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum D2cStatus d2c_model_load(const char *path, struct D2cModel **out);

// # Safety
// `model` must come from [`d2c_model_load`] and not be used afterwards.
void d2c_model_free(struct D2cModel *model);

// Number of drawings the model expects (1, 3 or 4); 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t d2c_model_view_count(const struct D2cModel *model);

// Predicts a sequence from SVG documents given in the model's view order
// (front, top, right, isometric, restricted to its view mode).
//
// # Safety
// `svgs` must point to `count` NUL-terminated strings; `out` must be writable.
enum D2cStatus d2c_infer_svg(const struct D2cModel *model,
                             const char *const *svgs,
                             size_t count,
                             struct D2cSequence **out);

// Parses the line-per-command text form.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum D2cStatus d2c_sequence_from_text(const char *text, struct D2cSequence **out);

// # Safety
// `seq` must be null or a live handle, not used afterwards.
void d2c_sequence_free(struct D2cSequence *seq);

// Total commands including padding; 0 for a null handle.
//
// # Safety
// `seq` must be null or a live handle.
size_t d2c_sequence_len(const struct D2cSequence *seq);

// Kind index (SOL 0, Line 1, Arc 2, Circle 3, Extrude 4, EOS 5) and the 15
// argument bins of command `index`; unused slots hold 256.
//
// # Safety
// `kind` must be writable; `params` must hold 15 values.
enum D2cStatus d2c_sequence_command(const struct D2cSequence *seq,
                                    size_t index,
                                    uint32_t *kind,
                                    uint16_t *params);

// Text form of the sequence; release with [`d2c_string_free`].
//
// # Safety
// `out` must be writable.
enum D2cStatus d2c_sequence_to_text(const struct D2cSequence *seq, char **out);

// Number of grammar violations (0 means well-formed); `usize::MAX` for null.
//
// # Safety
// `seq` must be null or a live handle.
size_t d2c_sequence_violations(const struct D2cSequence *seq);

// Reconstructs the solid and writes `k` surface points as `x y z` triples
// into `xyz` (room for `3·k` doubles).
//
// # Safety
// `xyz` must have room for `3·k` doubles.
enum D2cStatus d2c_sample_surface(const struct D2cSequence *seq,
                                  size_t k,
                                  uint64_t seed,
                                  double *xyz);

// # Safety
// `s` must be null or come from this library.
void d2c_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* D2C_H */
