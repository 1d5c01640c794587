#ifndef SACE_SACE_H
#define SACE_SACE_H

#include <stddef.h>
#include <stdint.h>

#if defined(SACE_BUILDING)
#define SACE_API __attribute__((visibility("default")))
#else
#define SACE_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sace_status {
  SACE_OK = 0,
  SACE_E_INVALID_ARG = 1,
  SACE_E_IO = 2,
  SACE_E_PARSE = 3,
  SACE_E_VALIDATION = 4,
  SACE_E_RUNTIME = 5,
  SACE_E_MISMATCH = 6
} sace_status;

typedef struct sace_dataset sace_dataset;
typedef struct sace_config sace_config;
typedef struct sace_dgp sace_dgp;
typedef struct sace_stack sace_stack;
typedef struct sace_result sace_result;

/* Message of the last failed call on this thread; empty after success. */
SACE_API const char* sace_last_error(void);
SACE_API const char* sace_version(void);
/* Strings returned through char** out-parameters are owned by the caller. */
SACE_API void sace_string_free(char* s);

/* Datasets: CSV with columns id,wave,y,z,w,r,s,x0 plus a ".schema" sidecar. */
SACE_API sace_status sace_dataset_read(const char* csv_path, const char* schema_path, sace_dataset** out);
SACE_API sace_status sace_dataset_write(const sace_dataset* d, const char* csv_path);
/* SACE_OK with n_violations = 0 when valid; report lists id,wave,rule lines. */
SACE_API sace_status sace_dataset_validate(const sace_dataset* d, size_t* n_violations, char** report);
SACE_API sace_status sace_dataset_info(const sace_dataset* d, size_t* n_people, int* n_waves, int* n_cells);
SACE_API sace_status sace_dataset_hash(const sace_dataset* d, uint64_t* out);
SACE_API void sace_dataset_free(sace_dataset* d);

/* Run configuration: key=value text. */
SACE_API sace_status sace_config_new(sace_config** out);
SACE_API sace_status sace_config_read(const char* path, sace_config** out);
SACE_API sace_status sace_config_parse(const char* text, sace_config** out);
SACE_API sace_status sace_config_set(sace_config* c, const char* key, const char* value);
SACE_API sace_status sace_config_get(const sace_config* c, const char* key, char** value);
SACE_API sace_status sace_config_text(const sace_config* c, char** text);
SACE_API sace_status sace_config_validate(const sace_config* c);
SACE_API void sace_config_free(sace_config* c);

/* Synthetic cohorts with known truth. */
SACE_API sace_status sace_dgp_preset(const char* name, sace_dgp** out);
SACE_API sace_status sace_dgp_read(const char* path, sace_dgp** out);
SACE_API sace_status sace_dgp_text(const sace_dgp* g, char** text);
/* oracle_m: Monte Carlo size of the truth oracle (ignored in discrete mode, which is exact). */
SACE_API sace_status sace_dgp_simulate(const sace_dgp* g, size_t n, uint64_t seed, size_t oracle_m, sace_dataset** data,
                                       char** truth_json);
SACE_API sace_status sace_dgp_truth(const sace_dgp* g, size_t oracle_m, uint64_t seed, double* tau, double* se);
SACE_API void sace_dgp_free(sace_dgp* g);

/* Observed-data model stack. */
SACE_API sace_status sace_fit(const sace_dataset* d, const sace_config* c, sace_stack** out);
SACE_API sace_status sace_stack_save(const sace_stack* s, const sace_dataset* d, const sace_config* c, const char* dir);
/* Fails with SACE_E_MISMATCH when the stack was fitted on other data or settings. */
SACE_API sace_status sace_stack_load(const char* dir, const sace_dataset* d, const sace_config* c, sace_stack** out);
SACE_API void sace_stack_free(sace_stack* s);

/* Estimation; stack may be NULL (fitted on the fly). */
SACE_API sace_status sace_estimate(const sace_dataset* d, const sace_config* c, const sace_stack* s, sace_result** out);
SACE_API sace_status sace_result_write(const sace_result* r, const sace_dataset* d, const sace_config* c, const char* dir);
SACE_API sace_status sace_result_count(const sace_result* r, size_t* n);
SACE_API sace_status sace_result_taus(const sace_result* r, double* out, size_t n);
SACE_API sace_status sace_result_summary(const sace_result* r, double* mean, double* sd, double* lo, double* hi);
SACE_API sace_status sace_result_elapsed(const sace_result* r, double* seconds);
SACE_API void sace_result_free(sace_result* r);

/* Method comparison table (method,estimate,lo,hi); out_dir may be NULL. */
SACE_API sace_status sace_compare(const sace_dataset* d, const sace_config* c, const char* out_dir, char** csv);
/* LPML of the enabled model families; stack may be NULL; out_dir may be NULL. */
SACE_API sace_status sace_lpml(const sace_dataset* d, const sace_config* c, const sace_stack* s, const char* out_dir,
                               char** json);
/* Posterior summary of a tau_samples.csv file. */
SACE_API sace_status sace_summary_file(const char* tau_csv, char** json);

#ifdef __cplusplus
}
#endif

#endif
