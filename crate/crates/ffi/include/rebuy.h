#ifndef REBUY_H
#define REBUY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum RebuyStatus {
  Ok = 0,
  NullArgument = 1,
  InvalidUtf8 = 2,
  LoadFailed = 3,
  PredictFailed = 4,
} RebuyStatus;

/**
 * Opaque handle to a loaded model.
 */
typedef struct RebuyModel RebuyModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. Valid until the next
 * failing call on the same thread; never null.
 */
const char *rebuy_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rebuy_version(void);

/**
 * Load a model JSON file. On success writes a handle to `out`; the caller
 * owns it and must release it with `rebuy_model_free`.
 */
enum RebuyStatus rebuy_model_load(const char *path, struct RebuyModel **out);

/**
 * Positive-class probability for one feature vector of `len` doubles.
 */
enum RebuyStatus rebuy_model_predict(const struct RebuyModel *model,
                                     const double *features,
                                     uintptr_t len,
                                     double *out_probability);

/**
 * Hard 0/1 label at the given threshold.
 */
enum RebuyStatus rebuy_model_classify(const struct RebuyModel *model,
                                      const double *features,
                                      uintptr_t len,
                                      double threshold,
                                      uint8_t *out_label);

/**
 * Release a handle returned by `rebuy_model_load`. Null is a no-op.
 */
void rebuy_model_free(struct RebuyModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REBUY_H */
