/* C interface to the turbex library.
 *
 * Every function returns a turbex_status. On failure the message is available
 * from turbex_last_error() until the next call on the same thread. Strings
 * returned through out-parameters are owned by the caller and released with
 * turbex_string_free(). */
#ifndef TURBEX_H
#define TURBEX_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TURBEX_API __declspec(dllexport)
#else
#define TURBEX_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum turbex_status {
  TURBEX_OK = 0,
  TURBEX_INVALID_ARGUMENT = 1,
  TURBEX_PARSE_ERROR = 2,
  TURBEX_SCHEMA_ERROR = 3,
  TURBEX_STRUCTURE_ERROR = 4,
  TURBEX_DIMENSION_ERROR = 5,
  TURBEX_NOT_FOUND = 6,
  TURBEX_CONFLICT = 7,
  TURBEX_REFERENCE_ERROR = 8,
  TURBEX_CONFIGURATION_ERROR = 9,
  TURBEX_IO_ERROR = 10,
  TURBEX_TRAINING_ERROR = 11,
  TURBEX_ORACLE_REFUSAL = 12,
  TURBEX_EMPTY_DISTRIBUTION = 13,
  TURBEX_INTERNAL_ERROR = 99
} turbex_status;

typedef struct turbex_model turbex_model;
typedef struct turbex_service turbex_service;

TURBEX_API const char* turbex_version(void);
TURBEX_API const char* turbex_last_error(void);
TURBEX_API const char* turbex_status_name(turbex_status status);
TURBEX_API void turbex_string_free(char* s);

/* Models. Missing feature values are passed as NaN. */
TURBEX_API turbex_status turbex_model_load_file(const char* path, turbex_model** out);
TURBEX_API turbex_status turbex_model_load_json(const char* json, turbex_model** out);
TURBEX_API void turbex_model_free(turbex_model* model);
TURBEX_API turbex_status turbex_model_n_features(const turbex_model* model, size_t* out);
TURBEX_API turbex_status turbex_model_predict_margin(const turbex_model* model, const double* row, size_t n,
                                                     double* out);
TURBEX_API turbex_status turbex_model_predict_proba(const turbex_model* model, const double* row, size_t n,
                                                    double* out);
TURBEX_API turbex_status turbex_model_save_json(const turbex_model* model, char** out);
/* Total split gain per feature; `out` must hold n_features values. */
TURBEX_API turbex_status turbex_model_gain_totals(const turbex_model* model, double* out, size_t n);
/* Interventional contributions of `row` against a row-major background of
 * `n_background` rows. `contributions` must hold n_features values. */
TURBEX_API turbex_status turbex_model_contributions(const turbex_model* model, const double* row, size_t n,
                                                    const double* background, size_t n_background,
                                                    double* base_value, double* contributions);

/* File-driven jobs; `summary` (optional) receives a JSON summary. */
TURBEX_API turbex_status turbex_generate_synthetic(const char* params_path, char** summary);
TURBEX_API turbex_status turbex_train(const char* job_path, char** summary);

/* KPI report over an NDJSON event log. `baselines` is "s:e[,s:e...]" or NULL. */
TURBEX_API turbex_status turbex_kpi_report(const char* event_log_path, int64_t start, int64_t end,
                                           const char* baselines, char** report_json);

/* Service. turbex_service_handle runs one request in-process. */
TURBEX_API turbex_status turbex_service_create(const char* config_path, turbex_service** out);
TURBEX_API void turbex_service_free(turbex_service* service);
TURBEX_API turbex_status turbex_service_handle(turbex_service* service, const char* method, const char* target,
                                               const char* body, int* http_status, char** response_body);
TURBEX_API turbex_status turbex_service_config_port(const turbex_service* service, int* port);
TURBEX_API turbex_status turbex_service_config_address(const turbex_service* service, char** address);
/* Binds host:port (port 0 picks a free one) and reports the bound port. */
TURBEX_API turbex_status turbex_service_bind(turbex_service* service, const char* host, int port, int* bound_port);
/* Blocks until turbex_service_stop() is called from another thread. */
TURBEX_API turbex_status turbex_service_run(turbex_service* service);
TURBEX_API turbex_status turbex_service_stop(turbex_service* service);

#ifdef __cplusplus
}
#endif

#endif
