#include "pdac/dataio.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <json.hpp>
#include <ostream>

#include "pdac/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "feature-file IO assumes a little-endian host");

namespace pdac {

namespace {

constexpr char kMagic[8] = {'P', 'D', 'A', 'C', 'F', 'E', 'A', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::uint64_t kHeaderSize = 24;

std::uint64_t record_size(std::uint32_t dim) {
  return 8 + 4ULL * dim;
}

template <typename T>
T read_pod(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

FeatureReader::FeatureReader(const std::string& path) : path_(path) {
  in_.open(path, std::ios::binary);
  if (!in_) fail(ErrorKind::io, path + ": cannot open");
  in_.seekg(0, std::ios::end);
  const std::uint64_t file_size = static_cast<std::uint64_t>(in_.tellg());
  in_.seekg(0, std::ios::beg);
  if (file_size < kHeaderSize)
    fail(ErrorKind::data, path + ": truncated header (file size " + std::to_string(file_size) +
                              ", header needs " + std::to_string(kHeaderSize) + " bytes)");
  char magic[8];
  in_.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) fail(ErrorKind::data, path + ": bad magic at offset 0");
  const auto version = read_pod<std::uint32_t>(in_);
  if (version != kFeatureVersion)
    fail(ErrorKind::data, path + ": unsupported version " + std::to_string(version) +
                              " at offset 8");
  dim_ = read_pod<std::uint32_t>(in_);
  if (dim_ == 0) fail(ErrorKind::data, path + ": zero feature dimension at offset 12");
  count_ = read_pod<std::uint64_t>(in_);
  const std::uint64_t expected = kHeaderSize + count_ * record_size(dim_);
  if (file_size != expected) {
    const std::uint64_t whole = (file_size - kHeaderSize) / record_size(dim_);
    const std::uint64_t boundary = kHeaderSize + whole * record_size(dim_);
    fail(ErrorKind::data, path + ": truncated or oversized payload; expected " +
                              std::to_string(expected) + " bytes for " + std::to_string(count_) +
                              " records, found " + std::to_string(file_size) +
                              " (last whole record boundary at offset " +
                              std::to_string(boundary) + ")");
  }
}

bool FeatureReader::next(FeatureRecord& record) {
  if (read_ >= count_) return false;
  record.task_id = read_pod<std::uint32_t>(in_);
  record.label = read_pod<std::uint32_t>(in_);
  record.feature.resize(dim_);
  in_.read(reinterpret_cast<char*>(record.feature.data()),
           static_cast<std::streamsize>(4ULL * dim_));
  if (!in_)
    fail(ErrorKind::io, path_ + ": read failed at record " + std::to_string(read_));
  ++read_;
  return true;
}

void write_features(const std::string& path, std::uint32_t dim,
                    const std::vector<FeatureRecord>& records) {
  if (dim == 0) fail(ErrorKind::invalid_argument, "feature dimension must be positive");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, path + ": cannot open for writing");
  out.write(kMagic, 8);
  write_pod(out, kFeatureVersion);
  write_pod(out, dim);
  write_pod(out, static_cast<std::uint64_t>(records.size()));
  for (const FeatureRecord& r : records) {
    if (r.feature.size() != dim)
      fail(ErrorKind::invalid_argument, path + ": record dimension mismatch");
    write_pod(out, r.task_id);
    write_pod(out, r.label);
    out.write(reinterpret_cast<const char*>(r.feature.data()),
              static_cast<std::streamsize>(4ULL * dim));
  }
  if (!out) fail(ErrorKind::io, path + ": write failed");
}

Dataset read_all_features(const std::string& path) {
  FeatureReader reader(path);
  Dataset ds;
  ds.dim = reader.dim();
  const auto count = static_cast<Eigen::Index>(reader.count());
  ds.features.resize(count, reader.dim());
  ds.task_ids.reserve(reader.count());
  ds.labels.reserve(reader.count());
  FeatureRecord rec;
  Eigen::Index row = 0;
  while (reader.next(rec)) {
    ds.task_ids.push_back(rec.task_id);
    ds.labels.push_back(rec.label);
    for (std::uint32_t j = 0; j < ds.dim; ++j)
      ds.features(row, static_cast<Eigen::Index>(j)) = static_cast<double>(rec.feature[j]);
    ++row;
  }
  return ds;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "\"nan\"";
  if (std::isinf(v)) return v > 0 ? "\"inf\"" : "\"-inf\"";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

void append_vector(std::string& out, const Eigen::VectorXd& v) {
  out += '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v(i));
  }
  out += ']';
}

void append_matrix_row_major(std::string& out, const Eigen::MatrixXd& m) {
  out += '[';
  bool first = true;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!first) out += ',';
      first = false;
      out += format_double(m(i, j));
    }
  }
  out += ']';
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, path + ": cannot open for writing");
  out << text;
  if (!out) fail(ErrorKind::io, path + ": write failed");
}

nlohmann::json parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, path + ": cannot open");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, path + ": " + e.what());
  }
}

const nlohmann::json& require(const nlohmann::json& obj, const char* key,
                              const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end()) fail(ErrorKind::data, where + ": missing key '" + key + "'");
  return *it;
}

double to_double(const nlohmann::json& v, const std::string& where) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  fail(ErrorKind::data, where + ": expected a real number");
}

Eigen::VectorXd to_vector(const nlohmann::json& v, Eigen::Index size, const std::string& where) {
  if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != size)
    fail(ErrorKind::data, where + ": expected an array of length " + std::to_string(size));
  Eigen::VectorXd out(size);
  for (Eigen::Index i = 0; i < size; ++i) out(i) = to_double(v[static_cast<std::size_t>(i)], where);
  return out;
}

Eigen::MatrixXd to_matrix(const nlohmann::json& v, Eigen::Index rows, Eigen::Index cols,
                          const std::string& where) {
  if (!v.is_array() || static_cast<Eigen::Index>(v.size()) != rows * cols)
    fail(ErrorKind::data,
         where + ": expected a row-major array of length " + std::to_string(rows * cols));
  Eigen::MatrixXd out(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = to_double(v[k++], where);
  return out;
}

}  // namespace

void save_registry(const PGMRegistry& registry, const std::string& path) {
  std::string out;
  out.reserve(1 << 16);
  out += "{\"format\":\"pdac-registry\",\"version\":1,\"feature_dim\":";
  out += std::to_string(registry.feature_dim);
  out += ",\"classes\":[";
  bool first_class = true;
  for (const auto& [label, model] : registry.classes) {
    if (!first_class) out += ',';
    first_class = false;
    out += "{\"label\":" + std::to_string(label);
    out += ",\"count\":" + std::to_string(model.count);
    out += ",\"initialized\":";
    out += model.initialized ? "true" : "false";
    if (model.initialized) {
      out += ",\"d\":" + std::to_string(model.projection.basis.cols());
      out += ",\"L\":" + std::to_string(model.gmm.components.size());
      out += ",\"mean\":";
      append_vector(out, model.stats.mean);
      out += ",\"cov\":";
      append_matrix_row_major(out, model.stats.cov);
      out += ",\"basis\":";
      append_matrix_row_major(out, model.projection.basis);
      out += ",\"components\":[";
      bool first_comp = true;
      for (const auto& comp : model.gmm.components) {
        if (!first_comp) out += ',';
        first_comp = false;
        out += "{\"weight\":" + format_double(comp.weight);
        out += ",\"mean\":";
        append_vector(out, comp.mean);
        out += ",\"cov\":";
        append_matrix_row_major(out, comp.cov);
        out += '}';
      }
      out += ']';
    } else {
      out += ",\"staging\":[";
      bool first_row = true;
      for (const auto& row : model.staging) {
        if (!first_row) out += ',';
        first_row = false;
        append_vector(out, row);
      }
      out += ']';
    }
    out += '}';
  }
  out += "]}\n";
  write_text(path, out);
}

PGMRegistry load_registry(const std::string& path) {
  const nlohmann::json doc = parse_file(path);
  if (!doc.is_object() || require(doc, "format", path) != "pdac-registry")
    fail(ErrorKind::data, path + ": not a registry document");
  if (require(doc, "version", path).get<int>() != 1)
    fail(ErrorKind::data, path + ": unsupported registry version");
  PGMRegistry registry;
  registry.feature_dim = require(doc, "feature_dim", path).get<int>();
  const nlohmann::json& classes = require(doc, "classes", path);
  if (registry.feature_dim < 0 || (registry.feature_dim == 0 && !classes.empty()))
    fail(ErrorKind::data, path + ": invalid feature_dim");
  const Eigen::Index dim = registry.feature_dim;
  for (const auto& cls : classes) {
    const auto label = require(cls, "label", path).get<std::uint32_t>();
    const std::string where = path + ": class " + std::to_string(label);
    ClassModel model;
    model.count = require(cls, "count", where).get<std::uint64_t>();
    model.initialized = require(cls, "initialized", where).get<bool>();
    if (model.initialized) {
      const auto d = require(cls, "d", where).get<Eigen::Index>();
      if (d < 1 || d > dim) fail(ErrorKind::data, where + ": invalid projection dimension");
      model.stats.count = model.count;
      model.stats.mean = to_vector(require(cls, "mean", where), dim, where + " mean");
      model.stats.cov = to_matrix(require(cls, "cov", where), dim, dim, where + " cov");
      model.projection.basis =
          to_matrix(require(cls, "basis", where), dim, d, where + " basis");
      model.projection.center = model.stats.mean;
      for (const auto& comp : require(cls, "components", where)) {
        GaussianComponent g;
        g.weight = to_double(require(comp, "weight", where), where + " weight");
        g.mean = to_vector(require(comp, "mean", where), d, where + " component mean");
        g.cov = to_matrix(require(comp, "cov", where), d, d, where + " component cov");
        model.gmm.components.push_back(std::move(g));
      }
      if (model.gmm.components.empty())
        fail(ErrorKind::data, where + ": initialized class without components");
      const auto declared = require(cls, "L", where).get<std::size_t>();
      if (declared != model.gmm.components.size())
        fail(ErrorKind::data, where + ": component count disagrees with L");
      model.effective_components = static_cast<int>(declared);
    } else {
      model.stats = make_class_stats(registry.feature_dim);
      for (const auto& row : require(cls, "staging", where))
        model.staging.push_back(to_vector(row, dim, where + " staging"));
    }
    registry.classes.emplace(label, std::move(model));
  }
  return registry;
}

void save_buffer(const MemoryBuffer& buffer, const std::string& path) {
  std::string out;
  out.reserve(1 << 16);
  out += "{\"format\":\"pdac-buffer\",\"version\":1,\"capacity\":";
  out += std::to_string(buffer.capacity);
  out += ",\"allocation\":[";
  bool first = true;
  for (const auto& [task, quota] : buffer.allocation) {
    if (!first) out += ',';
    first = false;
    out += "{\"task\":" + std::to_string(task) + ",\"quota\":" + std::to_string(quota) + '}';
  }
  out += "],\"entries\":[";
  first = true;
  for (const BufferEntry& e : buffer.entries) {
    if (!first) out += ',';
    first = false;
    out += "{\"sample_id\":" + std::to_string(e.sample_id);
    out += ",\"task_id\":" + std::to_string(e.task_id);
    out += ",\"label\":" + std::to_string(e.label);
    out += ",\"log_density\":" + format_double(e.log_density);
    if (e.feature.has_value()) {
      out += ",\"feature\":";
      append_vector(out, *e.feature);
    }
    out += '}';
  }
  out += "]}\n";
  write_text(path, out);
}

MemoryBuffer load_buffer(const std::string& path) {
  const nlohmann::json doc = parse_file(path);
  if (!doc.is_object() || require(doc, "format", path) != "pdac-buffer")
    fail(ErrorKind::data, path + ": not a buffer document");
  if (require(doc, "version", path).get<int>() != 1)
    fail(ErrorKind::data, path + ": unsupported buffer version");
  MemoryBuffer buffer;
  buffer.capacity = require(doc, "capacity", path).get<std::uint64_t>();
  for (const auto& row : require(doc, "allocation", path)) {
    buffer.allocation[require(row, "task", path).get<std::uint32_t>()] =
        require(row, "quota", path).get<std::uint64_t>();
  }
  for (const auto& row : require(doc, "entries", path)) {
    BufferEntry e;
    e.sample_id = require(row, "sample_id", path).get<std::uint64_t>();
    e.task_id = require(row, "task_id", path).get<std::uint32_t>();
    e.label = require(row, "label", path).get<std::uint32_t>();
    e.log_density = to_double(require(row, "log_density", path), path + " log_density");
    if (row.contains("feature")) {
      const auto& f = row["feature"];
      if (!f.is_array() || f.empty()) fail(ErrorKind::data, path + ": malformed feature");
      e.feature = to_vector(f, static_cast<Eigen::Index>(f.size()), path + " feature");
    }
    buffer.entries.push_back(std::move(e));
  }
  if (buffer.entries.size() > buffer.capacity)
    fail(ErrorKind::data, path + ": entry count exceeds capacity");
  return buffer;
}

void export_buffer_csv(const MemoryBuffer& buffer, std::ostream& out) {
  out << "sample_id,task_id,label,log_density\n";
  for (const BufferEntry& e : buffer.entries) {
    std::string density = format_double(e.log_density);
    if (!density.empty() && density.front() == '"')  // CSV keeps the bare token
      density = density.substr(1, density.size() - 2);
    out << e.sample_id << ',' << e.task_id << ',' << e.label << ',' << density << '\n';
  }
}

}  // namespace pdac
