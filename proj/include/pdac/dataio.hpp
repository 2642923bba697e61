#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "pdac/coreset.hpp"
#include "pdac/pgm.hpp"

namespace pdac {

struct FeatureRecord {
  std::uint32_t task_id;
  std::uint32_t label;
  std::vector<float> feature;
};

// Binary layout: "PDACFEAT" magic, u32 version (=1), u32 feature dimension,
// u64 record count, then count * (u32 task, u32 label, dim * f32), all
// little-endian. Fixed record size, streamable.
class FeatureReader {
 public:
  explicit FeatureReader(const std::string& path);

  std::uint32_t dim() const { return dim_; }
  std::uint64_t count() const { return count_; }

  // False once the stream is exhausted.
  bool next(FeatureRecord& record);

 private:
  std::ifstream in_;
  std::string path_;
  std::uint32_t dim_ = 0;
  std::uint64_t count_ = 0;
  std::uint64_t read_ = 0;
};

void write_features(const std::string& path, std::uint32_t dim,
                    const std::vector<FeatureRecord>& records);

struct Dataset {
  std::uint32_t dim = 0;
  std::vector<std::uint32_t> task_ids;
  std::vector<std::uint32_t> labels;
  Eigen::MatrixXd features;  // rows are samples
};

Dataset read_all_features(const std::string& path);

void save_registry(const PGMRegistry& registry, const std::string& path);
PGMRegistry load_registry(const std::string& path);

void save_buffer(const MemoryBuffer& buffer, const std::string& path);
MemoryBuffer load_buffer(const std::string& path);

// One row per entry: sample_id,task_id,label,log_density.
void export_buffer_csv(const MemoryBuffer& buffer, std::ostream& out);

// Serialize a double with enough digits to round-trip exactly.
std::string format_double(double v);

}  // namespace pdac
