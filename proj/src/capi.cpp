#include "pdac.h"

#include <cstring>
#include <exception>
#include <json.hpp>
#include <new>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pdac/coreset.hpp"
#include "pdac/dataio.hpp"
#include "pdac/errors.hpp"
#include "pdac/pgm.hpp"
#include "pdac/rng.hpp"
#include "pdac/valex.hpp"

struct pdac_rng {
  pdac::Rng rng;
};

struct pdac_reader {
  pdac::FeatureReader reader;
};

struct pdac_registry {
  pdac::PGMRegistry registry;
};

struct pdac_buffer {
  pdac::MemoryBuffer buffer;
};

namespace {

thread_local std::string g_last_error;

pdac_status status_of(pdac::ErrorKind kind) {
  switch (kind) {
    case pdac::ErrorKind::invalid_argument: return PDAC_ERR_INVALID_ARGUMENT;
    case pdac::ErrorKind::state: return PDAC_ERR_STATE;
    case pdac::ErrorKind::data: return PDAC_ERR_DATA;
    case pdac::ErrorKind::numeric: return PDAC_ERR_NUMERIC;
    case pdac::ErrorKind::io: return PDAC_ERR_IO;
  }
  return PDAC_ERR_STATE;
}

template <typename Fn>
pdac_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return PDAC_OK;
  } catch (const pdac::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PDAC_ERR_STATE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PDAC_ERR_STATE;
  }
}

pdac_status reject(const char* message) {
  g_last_error = message;
  return PDAC_ERR_INVALID_ARGUMENT;
}

Eigen::MatrixXd wrap_features(const double* features, size_t count, size_t dim) {
  if (count == 0 || dim == 0)
    pdac::fail(pdac::ErrorKind::invalid_argument, "empty feature block");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  for (size_t i = 0; i < count; ++i)
    for (size_t j = 0; j < dim; ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = features[i * dim + j];
  return out;
}

std::vector<std::uint32_t> wrap_labels(const uint32_t* labels, size_t count) {
  return std::vector<std::uint32_t>(labels, labels + count);
}

std::vector<pdac::TaskSample> wrap_samples(const uint64_t* sample_ids, const double* features,
                                           const uint32_t* labels, size_t count, size_t dim,
                                           std::optional<uint32_t> task) {
  if (count == 0) pdac::fail(pdac::ErrorKind::invalid_argument, "empty sample block");
  std::vector<pdac::TaskSample> samples(count);
  for (size_t i = 0; i < count; ++i) {
    samples[i].sample_id = sample_ids[i];
    samples[i].task_id = task ? *task : 0;
    samples[i].label = labels[i];
    samples[i].feature.resize(static_cast<Eigen::Index>(dim));
    for (size_t j = 0; j < dim; ++j)
      samples[i].feature(static_cast<Eigen::Index>(j)) = features[i * dim + j];
  }
  return samples;
}

pdac::ValexConfig parse_valex_config(const char* config_json) {
  pdac::ValexConfig config;
  if (config_json == nullptr || config_json[0] == '\0') return config;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(config_json);
  } catch (const nlohmann::json::exception& e) {
    pdac::fail(pdac::ErrorKind::invalid_argument, std::string("config: ") + e.what());
  }
  if (!doc.is_object()) pdac::fail(pdac::ErrorKind::invalid_argument, "config must be an object");
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "n-train") {
        config.n_train = value.get<std::size_t>();
      } else if (key == "n-test") {
        config.n_test = value.get<std::size_t>();
      } else if (key == "trials") {
        config.trials = value.get<int>();
      } else if (key == "N-list") {
        config.buffer_sizes = value.get<std::vector<std::size_t>>();
      } else if (key == "strategies") {
        config.strategies.clear();
        for (const auto& name : value)
          config.strategies.push_back(pdac::parse_strategy(name.get<std::string>()));
      } else if (key == "m") {
        config.partition.cell = value.get<double>();
      } else if (key == "side") {
        config.partition.side = value.get<double>();
      } else if (key == "epochs") {
        config.train.epochs = value.get<int>();
      } else if (key == "warmup-epochs") {
        config.train.warmup_epochs = value.get<int>();
      } else if (key == "batch-size") {
        config.train.batch_size = value.get<int>();
      } else if (key == "hidden") {
        config.train.hidden = value.get<int>();
      } else if (key == "peak-lr") {
        config.train.peak_lr = value.get<double>();
      } else if (key == "proxy-components") {
        config.proxy_components = value.get<int>();
      } else if (key == "proxy-dim") {
        config.proxy_dim = value.get<int>();
      } else if (key == "proxy-iterations") {
        config.proxy_iterations = value.get<int>();
      } else if (key == "seed") {
        config.seed = value.get<std::uint64_t>();
      } else {
        pdac::fail(pdac::ErrorKind::invalid_argument, "config: unknown key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      pdac::fail(pdac::ErrorKind::invalid_argument,
                 "config key '" + key + "': " + e.what());
    }
  }
  return config;
}

}  // namespace

extern "C" {

const char* pdac_last_error(void) { return g_last_error.c_str(); }

pdac_rng* pdac_rng_create(uint64_t seed) {
  return new (std::nothrow) pdac_rng{pdac::Rng(seed)};
}

void pdac_rng_destroy(pdac_rng* rng) { delete rng; }

/* ---- feature files ------------------------------------------------- */

pdac_status pdac_reader_open(const char* path, pdac_reader** out) {
  if (path == nullptr || out == nullptr) return reject("null argument");
  *out = nullptr;
  return guarded([&] { *out = new pdac_reader{pdac::FeatureReader(path)}; });
}

void pdac_reader_close(pdac_reader* reader) { delete reader; }

uint32_t pdac_reader_dim(const pdac_reader* reader) {
  return reader == nullptr ? 0 : reader->reader.dim();
}

uint64_t pdac_reader_count(const pdac_reader* reader) {
  return reader == nullptr ? 0 : reader->reader.count();
}

pdac_status pdac_reader_next(pdac_reader* reader, uint32_t* task_ids, uint32_t* labels,
                             double* features, size_t cap, size_t* read_out) {
  if (reader == nullptr || task_ids == nullptr || labels == nullptr || features == nullptr ||
      read_out == nullptr)
    return reject("null argument");
  *read_out = 0;
  return guarded([&] {
    const size_t dim = reader->reader.dim();
    pdac::FeatureRecord record;
    size_t n = 0;
    while (n < cap && reader->reader.next(record)) {
      task_ids[n] = record.task_id;
      labels[n] = record.label;
      for (size_t j = 0; j < dim; ++j)
        features[n * dim + j] = static_cast<double>(record.feature[j]);
      ++n;
    }
    *read_out = n;
  });
}

pdac_status pdac_write_features(const char* path, uint32_t dim, const uint32_t* task_ids,
                                const uint32_t* labels, const float* features, uint64_t count) {
  if (path == nullptr || (count > 0 && (task_ids == nullptr || labels == nullptr ||
                                        features == nullptr)))
    return reject("null argument");
  return guarded([&] {
    std::vector<pdac::FeatureRecord> records(count);
    for (uint64_t i = 0; i < count; ++i) {
      records[i].task_id = task_ids[i];
      records[i].label = labels[i];
      records[i].feature.assign(features + i * dim, features + (i + 1) * dim);
    }
    pdac::write_features(path, dim, records);
  });
}

/* ---- density registry ----------------------------------------------- */

pdac_status pdac_registry_create(pdac_registry** out) {
  if (out == nullptr) return reject("null argument");
  *out = nullptr;
  return guarded([&] { *out = new pdac_registry{}; });
}

void pdac_registry_destroy(pdac_registry* registry) { delete registry; }

pdac_status pdac_registry_load(const char* path, pdac_registry** out) {
  if (path == nullptr || out == nullptr) return reject("null argument");
  *out = nullptr;
  return guarded([&] { *out = new pdac_registry{pdac::load_registry(path)}; });
}

pdac_status pdac_registry_save(const pdac_registry* registry, const char* path) {
  if (registry == nullptr || path == nullptr) return reject("null argument");
  return guarded([&] { pdac::save_registry(registry->registry, path); });
}

pdac_status pdac_registry_fit(pdac_registry* registry, const double* features,
                              const uint32_t* labels, size_t count, size_t dim, uint32_t d,
                              uint32_t components, uint32_t iterations, pdac_rng* rng) {
  if (registry == nullptr || features == nullptr || labels == nullptr || rng == nullptr)
    return reject("null argument");
  return guarded([&] {
    registry->registry =
        pdac::fit_registry(wrap_features(features, count, dim), wrap_labels(labels, count),
                           static_cast<int>(d), static_cast<int>(components),
                           static_cast<int>(iterations), rng->rng);
  });
}

pdac_status pdac_registry_ingest(pdac_registry* registry, const double* features,
                                 const uint32_t* labels, size_t count, size_t dim, double beta,
                                 uint32_t d, uint32_t components, pdac_rng* rng) {
  if (registry == nullptr || features == nullptr || labels == nullptr || rng == nullptr)
    return reject("null argument");
  return guarded([&] {
    pdac::ingest_batch(registry->registry, wrap_features(features, count, dim),
                       wrap_labels(labels, count), beta, static_cast<int>(d),
                       static_cast<int>(components), rng->rng);
  });
}

pdac_status pdac_registry_class_count(const pdac_registry* registry, size_t* out) {
  if (registry == nullptr || out == nullptr) return reject("null argument");
  *out = registry->registry.classes.size();
  g_last_error.clear();
  return PDAC_OK;
}

pdac_status pdac_registry_class_info(const pdac_registry* registry, size_t index, uint32_t* label,
                                     uint64_t* count, int* initialized) {
  if (registry == nullptr || label == nullptr || count == nullptr || initialized == nullptr)
    return reject("null argument");
  return guarded([&] {
    if (index >= registry->registry.classes.size())
      pdac::fail(pdac::ErrorKind::invalid_argument, "class index out of range");
    auto it = registry->registry.classes.begin();
    std::advance(it, static_cast<std::ptrdiff_t>(index));
    *label = it->first;
    *count = it->second.count;
    *initialized = it->second.initialized ? 1 : 0;
  });
}

pdac_status pdac_registry_joint_log_density(const pdac_registry* registry, const double* feature,
                                            size_t dim, uint32_t label, double* out) {
  if (registry == nullptr || feature == nullptr || out == nullptr)
    return reject("null argument");
  return guarded([&] {
    Eigen::VectorXd h(static_cast<Eigen::Index>(dim));
    for (size_t j = 0; j < dim; ++j) h(static_cast<Eigen::Index>(j)) = feature[j];
    *out = pdac::joint_log_density(registry->registry, label, h);
  });
}

pdac_status pdac_registry_mean_log_likelihood(const pdac_registry* registry, uint32_t label,
                                              const double* features, size_t count, size_t dim,
                                              double* out) {
  if (registry == nullptr || features == nullptr || out == nullptr)
    return reject("null argument");
  return guarded([&] {
    *out = pdac::registry_mean_log_likelihood(registry->registry, label,
                                              wrap_features(features, count, dim));
  });
}

/* ---- memory buffer --------------------------------------------------- */

pdac_status pdac_buffer_create(uint64_t capacity, pdac_buffer** out) {
  if (out == nullptr) return reject("null argument");
  *out = nullptr;
  return guarded([&] {
    auto* handle = new pdac_buffer{};
    handle->buffer.capacity = capacity;
    *out = handle;
  });
}

void pdac_buffer_destroy(pdac_buffer* buffer) { delete buffer; }

pdac_status pdac_buffer_load(const char* path, pdac_buffer** out) {
  if (path == nullptr || out == nullptr) return reject("null argument");
  *out = nullptr;
  return guarded([&] { *out = new pdac_buffer{pdac::load_buffer(path)}; });
}

pdac_status pdac_buffer_save(const pdac_buffer* buffer, const char* path) {
  if (buffer == nullptr || path == nullptr) return reject("null argument");
  return guarded([&] { pdac::save_buffer(buffer->buffer, path); });
}

pdac_status pdac_buffer_export_rows(const pdac_buffer* buffer, char** out_text) {
  if (buffer == nullptr || out_text == nullptr) return reject("null argument");
  *out_text = nullptr;
  return guarded([&] {
    std::ostringstream out;
    pdac::export_buffer_csv(buffer->buffer, out);
    const std::string text = out.str();
    char* copy = new char[text.size() + 1];
    std::memcpy(copy, text.c_str(), text.size() + 1);
    *out_text = copy;
  });
}

void pdac_free_text(char* text) { delete[] text; }

uint64_t pdac_buffer_capacity(const pdac_buffer* buffer) {
  return buffer == nullptr ? 0 : buffer->buffer.capacity;
}

size_t pdac_buffer_size(const pdac_buffer* buffer) {
  return buffer == nullptr ? 0 : buffer->buffer.size();
}

pdac_status pdac_buffer_task_count(const pdac_buffer* buffer, uint32_t task, size_t* out) {
  if (buffer == nullptr || out == nullptr) return reject("null argument");
  *out = buffer->buffer.task_count(task);
  g_last_error.clear();
  return PDAC_OK;
}

pdac_status pdac_buffer_entry(const pdac_buffer* buffer, size_t index, uint64_t* sample_id,
                              uint32_t* task_id, uint32_t* label, double* log_density) {
  if (buffer == nullptr || sample_id == nullptr || task_id == nullptr || label == nullptr ||
      log_density == nullptr)
    return reject("null argument");
  return guarded([&] {
    if (index >= buffer->buffer.entries.size())
      pdac::fail(pdac::ErrorKind::invalid_argument, "entry index out of range");
    const pdac::BufferEntry& entry = buffer->buffer.entries[index];
    *sample_id = entry.sample_id;
    *task_id = entry.task_id;
    *label = entry.label;
    *log_density = entry.log_density;
  });
}

pdac_status pdac_buffer_update(pdac_buffer* buffer, const pdac_registry* registry,
                               const uint64_t* sample_ids, const double* features,
                               const uint32_t* labels, size_t count, size_t dim, uint32_t task,
                               pdac_rng* rng, size_t* shortfall_out) {
  if (buffer == nullptr || registry == nullptr || sample_ids == nullptr || features == nullptr ||
      labels == nullptr || rng == nullptr)
    return reject("null argument");
  return guarded([&] {
    const pdac::PdacReport report =
        pdac::pdac_update(buffer->buffer, registry->registry,
                          wrap_samples(sample_ids, features, labels, count, dim, task), task,
                          rng->rng);
    if (shortfall_out != nullptr) *shortfall_out = report.shortfall;
  });
}

pdac_status pdac_buffer_stream_batch(pdac_buffer* buffer, const pdac_registry* registry,
                                     const uint64_t* sample_ids, const double* features,
                                     const uint32_t* labels, size_t count, size_t dim,
                                     pdac_rng* rng) {
  if (buffer == nullptr || registry == nullptr || sample_ids == nullptr || features == nullptr ||
      labels == nullptr || rng == nullptr)
    return reject("null argument");
  return guarded([&] {
    std::vector<pdac::TaskSample> samples =
        wrap_samples(sample_ids, features, labels, count, dim, std::nullopt);
    pdac::spdac_process_batch(buffer->buffer, registry->registry, samples, rng->rng);
  });
}

/* ---- experiments ------------------------------------------------------ */

pdac_status pdac_valex_run(const char* config_json, const char* out_dir) {
  if (out_dir == nullptr) return reject("null argument");
  return guarded([&] {
    const pdac::ValexConfig config = parse_valex_config(config_json);
    const pdac::ValexReport report = pdac::run_valex(config);
    pdac::write_valex_report(report, out_dir);
  });
}

pdac_status pdac_variance_bound(const double* p, const double* l, const double* region_prob,
                                size_t regions, uint64_t n, double c0, double c1, double c2,
                                double gamma, double* out) {
  if (p == nullptr || l == nullptr || out == nullptr) return reject("null argument");
  return guarded([&] {
    pdac::BoundParams params;
    params.c0 = c0;
    params.c1 = c1;
    params.c2 = c2;
    params.gamma = gamma;
    params.n = n;
    params.p.assign(p, p + regions);
    params.l.assign(l, l + regions);
    if (region_prob != nullptr) params.region_prob.assign(region_prob, region_prob + regions);
    *out = pdac::variance_bound(params);
  });
}

pdac_status pdac_acc_fm(const double* accuracy, size_t t, double* acc_out, double* fm_out) {
  if (accuracy == nullptr || acc_out == nullptr || fm_out == nullptr)
    return reject("null argument");
  return guarded([&] {
    Eigen::MatrixXd a(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(t));
    for (size_t i = 0; i < t; ++i)
      for (size_t j = 0; j < t; ++j)
        a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = accuracy[i * t + j];
    const auto [acc, fm] = pdac::acc_fm_metrics(a);
    *acc_out = acc;
    *fm_out = fm;
  });
}

}  // extern "C"
