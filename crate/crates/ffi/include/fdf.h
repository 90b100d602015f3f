#ifndef FDF_H
#define FDF_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FdfStatus {
  FDF_STATUS_OK = 0,
  FDF_STATUS_NULL_POINTER = 1,
  FDF_STATUS_INVALID_UTF8 = 2,
  FDF_STATUS_INVALID_ARGUMENT = 3,
  FDF_STATUS_PARSE = 4,
  FDF_STATUS_CHECK = 5,
  FDF_STATUS_IO = 6,
  FDF_STATUS_SHAPE = 7,
  FDF_STATUS_RUN = 8,
  FDF_STATUS_BUFFER_TOO_SMALL = 9,
  FDF_STATUS_PANIC = 10,
} FdfStatus;

/**
 * An `n × width` batch of samples.
 */
typedef struct FdfBatch FdfBatch;

/**
 * A learned function.
 */
typedef struct FdfFunction FdfFunction;

/**
 * A pipeline that passed all static checks (warnings allowed).
 */
typedef struct FdfPipeline FdfPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread; empty if none.
 * The pointer stays valid until the next failing call on this thread.
 */
const char *fdf_last_error_message(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void fdf_string_free(char *s);

/**
 * Parse and check pipeline text. On success `*out` receives a new handle.
 *
 * # Safety
 * `source` must be a nul-terminated string; `out` must be writable.
 */
enum FdfStatus fdf_pipeline_parse(const char *source, struct FdfPipeline **out);

/**
 * Read, parse and check a pipeline file; `file=` arguments resolve next to it.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum FdfStatus fdf_pipeline_load(const char *path, struct FdfPipeline **out);

/**
 * Number of ports in the FDF graph, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live pipeline handle.
 */
size_t fdf_pipeline_port_count(const struct FdfPipeline *p);

/**
 * Number of warnings raised by the checks, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live pipeline handle.
 */
size_t fdf_pipeline_warning_count(const struct FdfPipeline *p);

/**
 * Graphviz text for the pipeline; free it with [`fdf_string_free`].
 *
 * # Safety
 * `p` must be a live pipeline handle; `out` must be writable.
 */
enum FdfStatus fdf_pipeline_to_dot(const struct FdfPipeline *p, char **out);

/**
 * # Safety
 * `p` must be null or a handle not yet freed.
 */
void fdf_pipeline_free(struct FdfPipeline *p);

/**
 * Run a pipeline file with a data manifest, writing sinks and exports to
 * `out_dir`, exactly as the `run` command does.
 *
 * # Safety
 * All strings must be nul-terminated.
 */
enum FdfStatus fdf_run_file(const char *path,
                            const char *manifest,
                            const char *out_dir,
                            uint64_t seed,
                            size_t jobs);

/**
 * Copy `n * width` row-major values into a new batch.
 *
 * # Safety
 * `values` must point to `n * width` doubles; `out` must be writable.
 */
enum FdfStatus fdf_batch_new(size_t n, size_t width, const double *values, struct FdfBatch **out);

/**
 * Read a CSV batch.
 *
 * # Safety
 * `path` must be nul-terminated; `out` must be writable.
 */
enum FdfStatus fdf_batch_load(const char *path, struct FdfBatch **out);

/**
 * # Safety
 * `b` must be null or a live batch handle.
 */
size_t fdf_batch_rows(const struct FdfBatch *b);

/**
 * # Safety
 * `b` must be null or a live batch handle.
 */
size_t fdf_batch_width(const struct FdfBatch *b);

/**
 * Copy the row-major values into `buffer`, which holds `capacity` doubles.
 *
 * # Safety
 * `b` must be a live batch handle; `buffer` must hold `capacity` doubles.
 */
enum FdfStatus fdf_batch_copy_values(const struct FdfBatch *b, double *buffer, size_t capacity);

/**
 * # Safety
 * `b` must be null or a handle not yet freed.
 */
void fdf_batch_free(struct FdfBatch *b);

/**
 * Load a saved function, verifying format version and checksum.
 *
 * # Safety
 * `path` must be nul-terminated; `out` must be writable.
 */
enum FdfStatus fdf_function_load(const char *path, struct FdfFunction **out);

/**
 * # Safety
 * `f` must be a live function handle; `path` must be nul-terminated.
 */
enum FdfStatus fdf_function_save(const struct FdfFunction *f, const char *path);

/**
 * Number of data inputs the function takes, or 0 for a null handle.
 *
 * # Safety
 * `f` must be null or a live function handle.
 */
size_t fdf_function_input_count(const struct FdfFunction *f);

/**
 * Number of data outputs the function produces, or 0 for a null handle.
 *
 * # Safety
 * `f` must be null or a live function handle.
 */
size_t fdf_function_output_count(const struct FdfFunction *f);

/**
 * Human-readable summary; free it with [`fdf_string_free`].
 *
 * # Safety
 * `f` must be a live function handle; `out` must be writable.
 */
enum FdfStatus fdf_function_describe(const struct FdfFunction *f, char **out);

/**
 * Apply `f` to `input_count` batches. `outputs` must have room for
 * [`fdf_function_output_count`] handles, each released with
 * [`fdf_batch_free`].
 *
 * # Safety
 * `inputs` must point to `input_count` live batch handles; `outputs` must
 * hold `output_capacity` writable slots.
 */
enum FdfStatus fdf_function_apply(const struct FdfFunction *f,
                                  const struct FdfBatch *const *inputs,
                                  size_t input_count,
                                  struct FdfBatch **outputs,
                                  size_t output_capacity);

/**
 * # Safety
 * `f` must be null or a handle not yet freed.
 */
void fdf_function_free(struct FdfFunction *f);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FDF_H */
