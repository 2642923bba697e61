#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "pdac/pgm.hpp"
#include "pdac/rng.hpp"

namespace pdac {

struct BufferEntry {
  std::uint64_t sample_id = 0;
  std::uint32_t task_id = 0;
  std::uint32_t label = 0;
  double log_density = 0.0;                 // as of selection time
  std::optional<Eigen::VectorXd> feature;   // retained when the caller has it
};

struct MemoryBuffer {
  std::uint64_t capacity = 0;
  std::vector<BufferEntry> entries;
  std::map<std::uint32_t, std::uint64_t> allocation;  // task -> quota

  std::size_t size() const { return entries.size(); }
  std::size_t task_count(std::uint32_t task) const;
};

struct SelectionWeights {
  std::vector<std::uint64_t> ids;
  std::vector<double> probabilities;
};

// Quotas floor(N/t) each, with the N mod t remainder going to the
// highest-numbered (newest) tasks. Requires N >= t.
std::map<std::uint32_t, std::uint64_t> allocate_quotas(std::uint64_t capacity, std::uint32_t tasks);

// Weights proportional to exp(log_density), normalized in log space. All -inf
// falls back to uniform.
SelectionWeights density_weights(const std::vector<std::uint64_t>& ids,
                                 const std::vector<double>& log_densities);

// Eviction weights proportional to max(1 - exp(log_density), 0); densities at
// or above 1 clamp to weight 0. All-clamped input falls back to uniform.
SelectionWeights inverse_density_weights(const std::vector<std::uint64_t>& ids,
                                         const std::vector<double>& log_densities);

// k distinct ids by sequential weighted draws with renormalization. If fewer
// than k ids have positive weight, the positive ones are taken and the rest
// filled uniformly from the remainder.
std::vector<std::uint64_t> weighted_sample_without_replacement(const SelectionWeights& weights,
                                                               std::size_t k, Rng& rng);

struct TaskSample {
  std::uint64_t sample_id = 0;
  std::uint32_t task_id = 0;  // used by the streaming path; offline updates take the task argument
  std::uint32_t label = 0;
  Eigen::VectorXd feature;
};

struct PdacReport {
  std::size_t selected = 0;
  std::size_t shortfall = 0;                         // quota minus available samples
  std::map<std::uint32_t, std::size_t> evicted;      // prior task -> evicted count
};

// Offline buffer update for task t: scores the task samples under the
// registry, reserves quotas for tasks 1..t, evicts prior-task overflow by
// inverse-density weighting (recomputing densities when features were
// retained), then inserts the density-weighted selection. Eviction runs
// before insertion so the buffer never exceeds capacity.
PdacReport pdac_update(MemoryBuffer& buffer, const PGMRegistry& registry,
                       const std::vector<TaskSample>& task_samples, std::uint32_t task, Rng& rng);

// Streaming (reservoir-style) update for one batch. Batch weights blend
// density weights over scorable samples with uniform mass for samples whose
// class is still staged; a full buffer replaces a uniform slot when
// c <= N * eps(z) for c uniform on {1..total observed}.
void spdac_process_batch(MemoryBuffer& buffer, const PGMRegistry& registry,
                         const std::vector<TaskSample>& batch, Rng& rng);

}  // namespace pdac
