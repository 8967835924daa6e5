/*
 * lab — phantom-scale translation/screening laboratory, C API.
 *
 * The core is a C++ library; this header is its stable boundary. Handles are
 * opaque, every call returns a lab_status, and lab_last_error() carries the
 * message for the most recent failure on the calling thread.
 *
 * Status values double as the CLI exit codes:
 *   0 ok, 1 internal error, 2 configuration error, 3 missing input,
 *   4 numeric failure, 5 data invariant violation.
 */
#ifndef LAB_H
#define LAB_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define LAB_API __declspec(dllexport)
#else
#define LAB_API __attribute__((visibility("default")))
#endif

typedef enum lab_status {
  LAB_OK = 0,
  LAB_ERR_INTERNAL = 1,
  LAB_ERR_CONFIG = 2,
  LAB_ERR_MISSING_INPUT = 3,
  LAB_ERR_NUMERIC = 4,
  LAB_ERR_DATA = 5
} lab_status;

typedef struct lab_config lab_config;

/* command is one of: gen-data, train-gan, train-lsnet, eval, screen */
LAB_API lab_config* lab_config_new(const char* command);
LAB_API void lab_config_free(lab_config* cfg);

/* flat key=value file with # comments; later calls override earlier ones */
LAB_API lab_status lab_config_load_file(lab_config* cfg, const char* path);
LAB_API lab_status lab_config_set(lab_config* cfg, const char* key, const char* value);

/* runs the configured command; outputs land under the "out" directory */
LAB_API lab_status lab_run(const lab_config* cfg);

/* message for the last non-OK result on this thread; empty string if none */
LAB_API const char* lab_last_error(void);
LAB_API const char* lab_status_name(lab_status s);

/* screening indicator calculator (prevalence-parameterized test theory) */
typedef struct lab_screening_profile {
  double sensitivity, specificity, prevalence;
  double ppv, npv, lr_positive, screen_positive_rate, nns;
  int lr_positive_infinite; /* specificity == 1 */
  int nns_infinite;         /* prevalence * sensitivity == 0 */
} lab_screening_profile;

LAB_API lab_status lab_screening_indicators(double sensitivity, double specificity,
                                            double prevalence, lab_screening_profile* out);

#ifdef __cplusplus
}
#endif

#endif /* LAB_H */
