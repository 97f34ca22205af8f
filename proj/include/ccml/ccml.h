#ifndef CCML_CCML_H
#define CCML_CCML_H

#include <stddef.h>

#if defined(_WIN32)
#if defined(CCML_BUILDING)
#define CCML_API __declspec(dllexport)
#else
#define CCML_API __declspec(dllimport)
#endif
#else
#define CCML_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. The first four match the CLI exit codes. */
typedef enum ccml_status {
  CCML_OK = 0,
  CCML_ERR_CONFIG = 1,    /* invalid configuration or argument */
  CCML_ERR_PROPERTY = 2,  /* a checked property failed */
  CCML_ERR_NUMERICAL = 3, /* solver failure, trajectory left the box */
  CCML_ERR_DIMENSION = 4, /* vector length does not match the structure */
  CCML_ERR_INTERNAL = 5
} ccml_status;

typedef struct ccml_structure ccml_structure;
typedef struct ccml_sequence ccml_sequence;

CCML_API const char* ccml_version(void);

/* Message of the last failing call on this thread; empty after success. */
CCML_API const char* ccml_last_error(void);

/* Structures. Free with ccml_structure_free. */
CCML_API ccml_status ccml_structure_builtin(const char* name, ccml_structure** out);
/* {"builtin": name} or a custom spec, as in the "structure" config field. */
CCML_API ccml_status ccml_structure_from_json(const char* json, ccml_structure** out);
CCML_API void ccml_structure_free(ccml_structure* s);
CCML_API ccml_status ccml_structure_dims(const ccml_structure* s, int* n, int* d);

/* rho(x, v); *finite is 0 and *value is +inf when v is not horizontal. */
CCML_API ccml_status ccml_horizontal_norm(const ccml_structure* s, const double* x, const double* v, double* value,
                                          int* finite);
CCML_API ccml_status ccml_rank(const ccml_structure* s, const double* x, int* rank);
/* Minimal bracket step at x, 0 when step_max does not suffice. */
CCML_API ccml_status ccml_hormander_step(const ccml_structure* s, const double* x, int step_max, int* step);

/* Upper bound of the CC distance; options_json may be NULL or an object with
   the fields of the "cc" config section plus "seed" and "jobs". */
CCML_API ccml_status ccml_cc_distance(const ccml_structure* s, const double* x, const double* y,
                                      const char* options_json, double* value, double* endpoint_error);

/* Finsler sequence F_1..F_N. params_json may be NULL or an object with the
   fields of the "sequence" config section. */
CCML_API ccml_status ccml_sequence_new(const ccml_structure* s, const char* params_json, ccml_sequence** out);
CCML_API void ccml_sequence_free(ccml_sequence* q);
CCML_API ccml_status ccml_sequence_levels(const ccml_sequence* q, int* levels);
CCML_API ccml_status ccml_sequence_value(const ccml_sequence* q, int level, const double* x, const double* v,
                                         double* value);
/* Lattice distance for F_level with spacing h and the given stencil radius. */
CCML_API ccml_status ccml_grid_distance(const ccml_sequence* q, int level, const double* x, const double* y, double h,
                                        int stencil, double* value, double* error_bar);

/* Runs a CLI command. config_json is the config document text. Progress is
   written to stdout. *exit_code receives 0..3 as documented for the CLI;
   the return value is CCML_OK unless the arguments themselves are invalid. */
CCML_API ccml_status ccml_run(const char* command, const char* config_json, const char* out_dir,
                              unsigned long long seed, int jobs, int* exit_code);
/* Same, reading the config from a file. */
CCML_API ccml_status ccml_run_file(const char* command, const char* config_path, const char* out_dir,
                                   unsigned long long seed, int jobs, int* exit_code);

#ifdef __cplusplus
}
#endif

#endif
