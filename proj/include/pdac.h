#ifndef PDAC_H
#define PDAC_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pdac_status {
  PDAC_OK = 0,
  PDAC_ERR_INVALID_ARGUMENT = 1,
  PDAC_ERR_STATE = 2,
  PDAC_ERR_DATA = 3,
  PDAC_ERR_NUMERIC = 4,
  PDAC_ERR_IO = 5
} pdac_status;

/* Message for the most recent failure on this thread. */
const char* pdac_last_error(void);

typedef struct pdac_rng pdac_rng;
pdac_rng* pdac_rng_create(uint64_t seed);
void pdac_rng_destroy(pdac_rng* rng);

/* ---- feature files ------------------------------------------------- */

typedef struct pdac_reader pdac_reader;
pdac_status pdac_reader_open(const char* path, pdac_reader** out);
void pdac_reader_close(pdac_reader* reader);
uint32_t pdac_reader_dim(const pdac_reader* reader);
uint64_t pdac_reader_count(const pdac_reader* reader);
/* Reads up to cap records into the parallel arrays; *read_out is 0 at EOF.
   features must hold cap * dim doubles. */
pdac_status pdac_reader_next(pdac_reader* reader, uint32_t* task_ids, uint32_t* labels,
                             double* features, size_t cap, size_t* read_out);

pdac_status pdac_write_features(const char* path, uint32_t dim, const uint32_t* task_ids,
                                const uint32_t* labels, const float* features, uint64_t count);

/* ---- density registry ----------------------------------------------- */

typedef struct pdac_registry pdac_registry;
pdac_status pdac_registry_create(pdac_registry** out);
void pdac_registry_destroy(pdac_registry* registry);
pdac_status pdac_registry_load(const char* path, pdac_registry** out);
pdac_status pdac_registry_save(const pdac_registry* registry, const char* path);

/* Offline fit over the whole dataset (features row-major count x dim). */
pdac_status pdac_registry_fit(pdac_registry* registry, const double* features,
                              const uint32_t* labels, size_t count, size_t dim, uint32_t d,
                              uint32_t components, uint32_t iterations, pdac_rng* rng);

/* Streaming update for one batch. */
pdac_status pdac_registry_ingest(pdac_registry* registry, const double* features,
                                 const uint32_t* labels, size_t count, size_t dim, double beta,
                                 uint32_t d, uint32_t components, pdac_rng* rng);

pdac_status pdac_registry_class_count(const pdac_registry* registry, size_t* out);
pdac_status pdac_registry_class_info(const pdac_registry* registry, size_t index, uint32_t* label,
                                     uint64_t* count, int* initialized);
pdac_status pdac_registry_joint_log_density(const pdac_registry* registry, const double* feature,
                                            size_t dim, uint32_t label, double* out);
pdac_status pdac_registry_mean_log_likelihood(const pdac_registry* registry, uint32_t label,
                                              const double* features, size_t count, size_t dim,
                                              double* out);

/* ---- memory buffer --------------------------------------------------- */

typedef struct pdac_buffer pdac_buffer;
pdac_status pdac_buffer_create(uint64_t capacity, pdac_buffer** out);
void pdac_buffer_destroy(pdac_buffer* buffer);
pdac_status pdac_buffer_load(const char* path, pdac_buffer** out);
pdac_status pdac_buffer_save(const pdac_buffer* buffer, const char* path);
/* Delimited rows (sample_id,task_id,label,log_density) with a header line. */
pdac_status pdac_buffer_export_rows(const pdac_buffer* buffer, char** out_text);
void pdac_free_text(char* text);

uint64_t pdac_buffer_capacity(const pdac_buffer* buffer);
size_t pdac_buffer_size(const pdac_buffer* buffer);
pdac_status pdac_buffer_task_count(const pdac_buffer* buffer, uint32_t task, size_t* out);
pdac_status pdac_buffer_entry(const pdac_buffer* buffer, size_t index, uint64_t* sample_id,
                              uint32_t* task_id, uint32_t* label, double* log_density);

/* Offline density-aware update for one task. Shortfall (quota minus available
   samples) is reported through *shortfall_out when non-null. */
pdac_status pdac_buffer_update(pdac_buffer* buffer, const pdac_registry* registry,
                               const uint64_t* sample_ids, const double* features,
                               const uint32_t* labels, size_t count, size_t dim, uint32_t task,
                               pdac_rng* rng, size_t* shortfall_out);

/* Streaming density-tilted reservoir update for one batch. */
pdac_status pdac_buffer_stream_batch(pdac_buffer* buffer, const pdac_registry* registry,
                                     const uint64_t* sample_ids, const double* features,
                                     const uint32_t* labels, size_t count, size_t dim,
                                     pdac_rng* rng);

/* ---- experiments ------------------------------------------------------ */

/* config_json: the experiment configuration document (see README). Writes
   the report tables into out_dir. */
pdac_status pdac_valex_run(const char* config_json, const char* out_dir);

/* Region-wise variance bound. With region_prob null and regions == 1 the
   single-region form; with region_prob set, the probability-weighted sum. */
pdac_status pdac_variance_bound(const double* p, const double* l, const double* region_prob,
                                size_t regions, uint64_t n, double c0, double c1, double c2,
                                double gamma, double* out);

/* accuracy: T x T row-major; row i holds accuracies after training task i. */
pdac_status pdac_acc_fm(const double* accuracy, size_t t, double* acc_out, double* fm_out);

#ifdef __cplusplus
}
#endif

#endif /* PDAC_H */
