#include "pdac/coreset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <string>

#include "pdac/errors.hpp"
#include "pdac/stats.hpp"

namespace pdac {

std::size_t MemoryBuffer::task_count(std::uint32_t task) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(),
      [task](const BufferEntry& e) { return e.task_id == task; }));
}

std::map<std::uint32_t, std::uint64_t> allocate_quotas(std::uint64_t capacity,
                                                       std::uint32_t tasks) {
  if (tasks < 1) fail(ErrorKind::invalid_argument, "task count must be positive");
  if (capacity < tasks)
    fail(ErrorKind::invalid_argument,
         "infeasible allocation: capacity " + std::to_string(capacity) + " below task count " +
             std::to_string(tasks));
  const std::uint64_t base = capacity / tasks;
  const std::uint64_t remainder = capacity % tasks;
  std::map<std::uint32_t, std::uint64_t> quotas;
  for (std::uint32_t t = 1; t <= tasks; ++t) {
    const bool extra = t > tasks - remainder;
    quotas[t] = base + (extra ? 1 : 0);
  }
  return quotas;
}

namespace {

SelectionWeights normalized(std::vector<std::uint64_t> ids, std::vector<double> raw) {
  double total = 0.0;
  for (double w : raw) total += w;
  if (total <= 0.0) {
    const double u = 1.0 / static_cast<double>(raw.size());
    std::fill(raw.begin(), raw.end(), u);
  } else {
    for (double& w : raw) w /= total;
  }
  return SelectionWeights{std::move(ids), std::move(raw)};
}

void check_weight_input(const std::vector<std::uint64_t>& ids,
                        const std::vector<double>& log_densities) {
  if (ids.empty()) fail(ErrorKind::invalid_argument, "empty weight input");
  if (ids.size() != log_densities.size())
    fail(ErrorKind::invalid_argument, "id/density length mismatch");
}

}  // namespace

SelectionWeights density_weights(const std::vector<std::uint64_t>& ids,
                                 const std::vector<double>& log_densities) {
  check_weight_input(ids, log_densities);
  const double lse = log_sum_exp(log_densities);
  std::vector<double> w(log_densities.size());
  if (!std::isfinite(lse)) {
    // Total underflow: every density vanished, fall back to uniform.
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
    return SelectionWeights{ids, std::move(w)};
  }
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_densities[i] - lse);
  return normalized(ids, std::move(w));
}

SelectionWeights inverse_density_weights(const std::vector<std::uint64_t>& ids,
                                         const std::vector<double>& log_densities) {
  check_weight_input(ids, log_densities);
  std::vector<double> w(log_densities.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    // Densities at or above 1 clamp to zero eviction weight.
    w[i] = log_densities[i] >= 0.0 ? 0.0 : 1.0 - std::exp(log_densities[i]);
  }
  return normalized(ids, std::move(w));
}

std::vector<std::uint64_t> weighted_sample_without_replacement(const SelectionWeights& weights,
                                                               std::size_t k, Rng& rng) {
  if (weights.ids.size() != weights.probabilities.size())
    fail(ErrorKind::invalid_argument, "malformed selection weights");
  if (k > weights.ids.size())
    fail(ErrorKind::invalid_argument, "cannot draw more distinct ids than provided");
  std::vector<std::uint64_t> pool_ids = weights.ids;
  std::vector<double> pool_w = weights.probabilities;
  std::vector<std::uint64_t> out;
  out.reserve(k);
  for (std::size_t draw = 0; draw < k; ++draw) {
    double total = 0.0;
    for (double w : pool_w) total += w;
    std::size_t pick;
    if (total > 0.0) {
      std::uniform_real_distribution<double> dist(0.0, total);
      const double u = dist(rng);
      double acc = 0.0;
      pick = pool_w.size() - 1;
      for (std::size_t i = 0; i < pool_w.size(); ++i) {
        acc += pool_w[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
      if (pool_w[pick] <= 0.0) {
        // Rounding pushed the draw past the last positive weight.
        for (std::size_t i = pool_w.size(); i-- > 0;) {
          if (pool_w[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // Positive weights exhausted: fill uniformly from the remainder.
      std::uniform_int_distribution<std::size_t> dist(0, pool_ids.size() - 1);
      pick = dist(rng);
    }
    out.push_back(pool_ids[pick]);
    pool_ids.erase(pool_ids.begin() + static_cast<std::ptrdiff_t>(pick));
    pool_w.erase(pool_w.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

namespace {

double entry_eviction_log_density(const BufferEntry& entry, const PGMRegistry& registry) {
  if (entry.feature.has_value() && registry.class_initialized(entry.label))
    return joint_log_density(registry, entry.label, *entry.feature);
  return entry.log_density;
}

// Incoming ids must be fresh: unique within the batch and absent from the
// buffer. Rejecting up front keeps the failure independent of which samples
// the selection or replacement draws happen to pick.
void check_fresh_ids(const MemoryBuffer& buffer, const std::vector<TaskSample>& samples) {
  std::set<std::uint64_t> seen;
  for (const BufferEntry& e : buffer.entries) seen.insert(e.sample_id);
  for (const TaskSample& s : samples) {
    if (!seen.insert(s.sample_id).second)
      fail(ErrorKind::invalid_argument, "duplicate sample id " + std::to_string(s.sample_id));
  }
}

}  // namespace

PdacReport pdac_update(MemoryBuffer& buffer, const PGMRegistry& registry,
                       const std::vector<TaskSample>& task_samples, std::uint32_t task,
                       Rng& rng) {
  if (task < 1) fail(ErrorKind::invalid_argument, "task index must be positive");
  check_fresh_ids(buffer, task_samples);
  const auto quotas = allocate_quotas(buffer.capacity, task);

  std::vector<std::uint64_t> ids;
  std::vector<double> logs;
  ids.reserve(task_samples.size());
  logs.reserve(task_samples.size());
  for (const TaskSample& s : task_samples) {
    ids.push_back(s.sample_id);
    logs.push_back(joint_log_density(registry, s.label, s.feature));
  }

  PdacReport report;
  const std::uint64_t quota = quotas.at(task);
  const std::size_t take = std::min<std::size_t>(quota, task_samples.size());
  report.shortfall = static_cast<std::size_t>(quota) - take;

  std::vector<std::uint64_t> selected;
  if (take > 0) {
    selected = weighted_sample_without_replacement(density_weights(ids, logs), take, rng);
  }
  report.selected = selected.size();

  if (buffer.size() + selected.size() > buffer.capacity) {
    for (std::uint32_t prior = 1; prior < task; ++prior) {
      const std::size_t held = buffer.task_count(prior);
      const std::uint64_t new_quota = quotas.at(prior);
      if (held <= new_quota) continue;
      const std::size_t evict_n = held - static_cast<std::size_t>(new_quota);
      std::vector<std::uint64_t> cand_ids;
      std::vector<double> cand_logs;
      for (const BufferEntry& e : buffer.entries) {
        if (e.task_id != prior) continue;
        cand_ids.push_back(e.sample_id);
        cand_logs.push_back(entry_eviction_log_density(e, registry));
      }
      const std::vector<std::uint64_t> victims = weighted_sample_without_replacement(
          inverse_density_weights(cand_ids, cand_logs), evict_n, rng);
      const std::set<std::uint64_t> victim_set(victims.begin(), victims.end());
      std::erase_if(buffer.entries, [&](const BufferEntry& e) {
        return e.task_id == prior && victim_set.count(e.sample_id) > 0;
      });
      report.evicted[prior] = victims.size();
    }
  }

  std::map<std::uint64_t, std::size_t> sample_index;
  for (std::size_t i = 0; i < task_samples.size(); ++i)
    sample_index.emplace(task_samples[i].sample_id, i);
  for (const std::uint64_t id : selected) {
    if (buffer.size() >= buffer.capacity) break;
    const std::size_t i = sample_index.at(id);
    BufferEntry entry;
    entry.sample_id = id;
    entry.task_id = task;
    entry.label = task_samples[i].label;
    entry.log_density = logs[i];
    entry.feature = task_samples[i].feature;
    buffer.entries.push_back(std::move(entry));
  }

  buffer.allocation = quotas;
  return report;
}

void spdac_process_batch(MemoryBuffer& buffer, const PGMRegistry& registry,
                         const std::vector<TaskSample>& batch, Rng& rng) {
  if (batch.empty()) return;
  check_fresh_ids(buffer, batch);
  const std::size_t b = batch.size();

  // Blend density weights over scorable samples (classes already initialized)
  // with uniform mass for staged ones, so batch probabilities sum to one.
  std::vector<std::size_t> scorable;
  std::vector<std::uint64_t> scorable_ids;
  std::vector<double> scorable_logs;
  std::vector<double> pi(b, 1.0 / static_cast<double>(b));
  std::vector<double> sample_log(b, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < b; ++i) {
    if (registry.class_initialized(batch[i].label)) {
      scorable.push_back(i);
      scorable_ids.push_back(batch[i].sample_id);
      scorable_logs.push_back(joint_log_density(registry, batch[i].label, batch[i].feature));
    }
  }
  if (!scorable.empty()) {
    const bool any_finite =
        std::any_of(scorable_logs.begin(), scorable_logs.end(),
                    [](double v) { return std::isfinite(v); });
    const double mass = static_cast<double>(scorable.size()) / static_cast<double>(b);
    for (std::size_t j = 0; j < scorable.size(); ++j) {
      // Zero-density samples keep pi = 0 so a full buffer never admits them;
      // the uniform underflow fallback applies to selection, not acceptance.
      pi[scorable[j]] = 0.0;
      sample_log[scorable[j]] = scorable_logs[j];
    }
    if (any_finite) {
      const SelectionWeights dw = density_weights(scorable_ids, scorable_logs);
      for (std::size_t j = 0; j < scorable.size(); ++j) {
        pi[scorable[j]] = dw.probabilities[j] * mass;
      }
    }
  }

  const std::uint64_t observed = std::max<std::uint64_t>(registry.total_count(), 1);
  const double capacity = static_cast<double>(buffer.capacity);
  for (std::size_t i = 0; i < b; ++i) {
    if (buffer.capacity == 0) break;
    BufferEntry entry;
    entry.sample_id = batch[i].sample_id;
    entry.task_id = batch[i].task_id;
    entry.label = batch[i].label;
    entry.log_density = sample_log[i];
    entry.feature = batch[i].feature;
    if (buffer.size() < buffer.capacity) {
      buffer.entries.push_back(std::move(entry));
      continue;
    }
    std::uniform_int_distribution<std::uint64_t> draw_c(1, observed);
    const std::uint64_t c = draw_c(rng);
    const double eps = pi[i] * static_cast<double>(b);
    if (eps > 0.0 && static_cast<double>(c) <= capacity * eps) {
      std::uniform_int_distribution<std::size_t> draw_slot(0, buffer.size() - 1);
      buffer.entries[draw_slot(rng)] = std::move(entry);
    }
  }
}

}  // namespace pdac
