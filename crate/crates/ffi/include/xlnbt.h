#ifndef XLNBT_H
#define XLNBT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum XlnbtStatus {
  XLNBT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  XLNBT_STATUS_NULL_ARGUMENT = 1,
  /**
   * Bad input: not UTF-8, malformed acts, unknown terms, mismatched sizes.
   */
  XLNBT_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A file could not be read.
   */
  XLNBT_STATUS_IO = 3,
  /**
   * A file was read but its contents are malformed.
   */
  XLNBT_STATUS_FORMAT = 4,
  /**
   * Any other failure inside the tracker.
   */
  XLNBT_STATUS_RUNTIME = 5,
  /**
   * A bug: the library panicked. The handle involved should be dropped.
   */
  XLNBT_STATUS_PANIC = 6,
} XlnbtStatus;

/**
 * A loaded model with its embeddings and ontology.
 */
typedef struct XlnbtModel XlnbtModel;

/**
 * Tracking state of one dialog. Keeps its model alive on its own.
 */
typedef struct XlnbtTracker XlnbtTracker;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *xlnbt_version(void);

/**
 * Message of the last failed call on this thread, or null if none failed.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *xlnbt_last_error_message(void);

/**
 * Loads a checkpoint together with the embeddings and ontology of the
 * language it will track. On success `*out` owns a new handle.
 *
 * # Safety
 * The path arguments are NUL-terminated strings; `out` is writable.
 */
enum XlnbtStatus xlnbt_model_load(const char *checkpoint,
                                  const char *embeddings,
                                  const char *ontology,
                                  struct XlnbtModel **out);

/**
 * Releases a model. Trackers created from it stay usable.
 *
 * # Safety
 * `model` is null or a handle from [`xlnbt_model_load`] not yet freed.
 */
void xlnbt_model_free(struct XlnbtModel *model);

/**
 * Starts a dialog on `model`.
 *
 * # Safety
 * `model` is a live model handle; `out` is writable.
 */
enum XlnbtStatus xlnbt_tracker_new(const struct XlnbtModel *model, struct XlnbtTracker **out);

/**
 * Tracks one turn. `acts` is empty, `-` or `none`, or `request(slot)`
 * and/or `confirm(slot=value)` joined by `;`. On success `*state_json`
 * receives the belief state as JSON, `{"goals":{...},"requests":[...]}`,
 * to be released with [`xlnbt_string_free`]. A failed turn leaves the
 * dialog history unchanged.
 *
 * # Safety
 * `tracker` is a live tracker handle; strings are NUL-terminated;
 * `state_json` is writable.
 */
enum XlnbtStatus xlnbt_tracker_step(struct XlnbtTracker *tracker,
                                    const char *acts,
                                    const char *utterance,
                                    char **state_json);

/**
 * Forgets the dialog history.
 *
 * # Safety
 * `tracker` is null or a live tracker handle.
 */
enum XlnbtStatus xlnbt_tracker_reset(struct XlnbtTracker *tracker);

/**
 * # Safety
 * `tracker` is null or a handle from [`xlnbt_tracker_new`] not yet freed.
 */
void xlnbt_tracker_free(struct XlnbtTracker *tracker);

/**
 * # Safety
 * `s` is null or a string returned by this library not yet freed.
 */
void xlnbt_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* XLNBT_H */
