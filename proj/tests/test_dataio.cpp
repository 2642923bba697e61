#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <vector>

#include <doctest.h>

#include "oracles.hpp"
#include "pdac/dataio.hpp"
#include "pdac/errors.hpp"
#include "pdac/pgm.hpp"

using namespace pdac;

namespace {

std::vector<FeatureRecord> random_records(std::size_t n, std::uint32_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> value(-50.0f, 50.0f);
  std::uniform_int_distribution<std::uint32_t> small(0, 9);
  std::vector<FeatureRecord> records(n);
  for (auto& r : records) {
    r.task_id = small(rng);
    r.label = small(rng);
    r.feature.resize(dim);
    for (auto& f : r.feature) f = value(rng);
  }
  return records;
}

std::string error_message(const std::function<void()>& body) {
  try {
    body();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("feature files round trip one thousand records bit for bit") {
  oracle::TempDir dir;
  const auto path = dir.file("big.feat");
  const std::uint32_t dim = 16;
  const auto records = random_records(1000, dim, 91);
  write_features(path, dim, records);

  FeatureReader reader(path);
  CHECK(reader.dim() == dim);
  CHECK(reader.count() == 1000);
  FeatureRecord rec;
  std::size_t i = 0;
  while (reader.next(rec)) {
    REQUIRE(i < records.size());
    CHECK(rec.task_id == records[i].task_id);
    CHECK(rec.label == records[i].label);
    REQUIRE(rec.feature.size() == dim);
    for (std::uint32_t j = 0; j < dim; ++j)
      CHECK(std::bit_cast<std::uint32_t>(rec.feature[j]) ==
            std::bit_cast<std::uint32_t>(records[i].feature[j]));
    ++i;
  }
  CHECK(i == 1000);
  CHECK_FALSE(reader.next(rec));

  const Dataset ds = read_all_features(path);
  CHECK(ds.dim == dim);
  CHECK(ds.features.rows() == 1000);
  CHECK(ds.features.cols() == dim);
  CHECK(ds.labels[17] == records[17].label);
  CHECK(ds.task_ids[17] == records[17].task_id);
  CHECK(ds.features(17, 3) == double(records[17].feature[3]));
}

TEST_CASE("a zero-record file yields an empty stream with a validated header") {
  oracle::TempDir dir;
  const auto path = dir.file("empty.feat");
  write_features(path, 8, {});
  FeatureReader reader(path);
  CHECK(reader.dim() == 8);
  CHECK(reader.count() == 0);
  FeatureRecord rec;
  CHECK_FALSE(reader.next(rec));
  const Dataset ds = read_all_features(path);
  CHECK(ds.features.rows() == 0);
  CHECK(ds.dim == 8);
}

TEST_CASE("header corruption is rejected with the byte offset") {
  oracle::TempDir dir;
  const std::vector<oracle::RawRecord> rows = {
      {1, 0, {1.0f, 2.0f}},
      {1, 1, {3.0f, 4.0f}},
  };

  SUBCASE("bad magic names offset 0") {
    const auto path = dir.file("magic.feat");
    oracle::write_raw_feature_file(path, 1, 2, rows.size(), rows, "NOTPDACF");
    const std::string msg = error_message([&] { FeatureReader r(path); });
    CHECK(msg.find("bad magic") != std::string::npos);
    CHECK(msg.find("offset 0") != std::string::npos);
    CHECK(msg.find(path) != std::string::npos);
  }

  SUBCASE("unsupported version names offset 8") {
    const auto path = dir.file("version.feat");
    oracle::write_raw_feature_file(path, 7, 2, rows.size(), rows);
    const std::string msg = error_message([&] { FeatureReader r(path); });
    CHECK(msg.find("version 7") != std::string::npos);
    CHECK(msg.find("offset 8") != std::string::npos);
  }

  SUBCASE("zero dimension names offset 12") {
    const auto path = dir.file("dim.feat");
    oracle::write_raw_feature_file(path, 1, 0, 0, {});
    const std::string msg = error_message([&] { FeatureReader r(path); });
    CHECK(msg.find("offset 12") != std::string::npos);
  }

  SUBCASE("file shorter than the header") {
    const auto path = dir.file("short.feat");
    oracle::write_raw_feature_file(path, 1, 2, rows.size(), rows);
    oracle::truncate_file(path, 10);
    const std::string msg = error_message([&] { FeatureReader r(path); });
    CHECK(msg.find("truncated header") != std::string::npos);
  }
}

TEST_CASE("mid-record truncation reports the last whole-record boundary") {
  oracle::TempDir dir;
  const auto path = dir.file("cut.feat");
  const std::uint32_t dim = 4;
  write_features(path, dim, random_records(10, dim, 7));
  // header 24 bytes, record 8 + 4*4 = 24: cut inside record index 3
  const std::uint64_t record = 8 + 4ULL * dim;
  const std::uint64_t boundary = 24 + 3 * record;
  oracle::truncate_file(path, boundary + 7);
  const std::string msg = error_message([&] { FeatureReader r(path); });
  CHECK(msg.find("offset " + std::to_string(boundary)) != std::string::npos);
  CHECK(msg.find(std::to_string(boundary + 7)) != std::string::npos);
}

TEST_CASE("a fitted registry survives save and load within 1e-12 on probes") {
  Rng rng(523);
  const int n = 160;
  const int dim = 6;
  Eigen::MatrixXd features(n, dim);
  std::vector<std::uint32_t> labels(n);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    labels[i] = i % 2;
    for (int j = 0; j < dim; ++j)
      features(i, j) = (labels[i] ? 3.0 : -3.0) + normal(rng);
  }
  const PGMRegistry fitted = fit_registry(features, labels, 3, 2, 15, rng);

  oracle::TempDir dir;
  const auto path = dir.file("registry.json");
  save_registry(fitted, path);
  const PGMRegistry loaded = load_registry(path);

  CHECK(loaded.feature_dim == fitted.feature_dim);
  REQUIRE(loaded.classes.size() == fitted.classes.size());
  for (const auto& [label, model] : fitted.classes) {
    const auto& other = loaded.classes.at(label);
    CHECK(other.count == model.count);
    CHECK(other.initialized == model.initialized);
    CHECK(other.gmm.components.size() == model.gmm.components.size());
  }
  for (int k = 0; k < 100; ++k) {
    Eigen::VectorXd probe(dim);
    for (int j = 0; j < dim; ++j) probe(j) = 6.0 * normal(rng);
    const std::uint32_t label = k % 2;
    const double a = joint_log_density(fitted, label, probe);
    const double b = joint_log_density(loaded, label, probe);
    CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
  }
}

TEST_CASE("an empty registry round trips to an empty registry") {
  oracle::TempDir dir;
  const auto path = dir.file("empty.json");
  PGMRegistry registry;
  save_registry(registry, path);
  const PGMRegistry loaded = load_registry(path);
  CHECK(loaded.feature_dim == 0);
  CHECK(loaded.classes.empty());
  CHECK(loaded.total_count() == 0);
}

TEST_CASE("a staged class round trips with its staging pool intact") {
  Rng rng(17);
  Eigen::MatrixXd features(2, 3);
  features << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
  std::vector<std::uint32_t> labels = {5, 5};
  PGMRegistry registry;
  ingest_batch(registry, features, labels, 0.5, 10, 7, rng);
  REQUIRE_FALSE(registry.class_initialized(5));

  oracle::TempDir dir;
  const auto path = dir.file("staged.json");
  save_registry(registry, path);
  const PGMRegistry loaded = load_registry(path);
  REQUIRE(loaded.classes.count(5) == 1);
  const auto& model = loaded.classes.at(5);
  CHECK_FALSE(model.initialized);
  CHECK(model.count == 2);
  REQUIRE(model.staging.size() == 2);
  CHECK(model.staging[0].isApprox(features.row(0).transpose(), 0.0));
  CHECK(model.staging[1].isApprox(features.row(1).transpose(), 0.0));
}

TEST_CASE("a three-entry buffer round trips with entries and allocation intact") {
  MemoryBuffer buffer;
  buffer.capacity = 10;
  buffer.allocation = {{1, 2}, {2, 1}};
  Eigen::VectorXd feat(3);
  feat << 0.25, -1.5, 3.75;
  buffer.entries.push_back(BufferEntry{11, 1, 0, -2.25, feat});
  buffer.entries.push_back(
      BufferEntry{12, 1, 1, -std::numeric_limits<double>::infinity(), std::nullopt});
  buffer.entries.push_back(
      BufferEntry{13, 2, 0, std::numeric_limits<double>::quiet_NaN(), std::nullopt});

  oracle::TempDir dir;
  const auto path = dir.file("buffer.json");
  save_buffer(buffer, path);
  const MemoryBuffer loaded = load_buffer(path);

  CHECK(loaded.capacity == 10);
  CHECK(loaded.allocation == buffer.allocation);
  REQUIRE(loaded.size() == 3);
  CHECK(loaded.entries[0].sample_id == 11);
  CHECK(loaded.entries[0].task_id == 1);
  CHECK(loaded.entries[0].label == 0);
  CHECK(loaded.entries[0].log_density == -2.25);
  REQUIRE(loaded.entries[0].feature.has_value());
  CHECK(loaded.entries[0].feature->isApprox(feat, 0.0));
  CHECK(loaded.entries[1].log_density == -std::numeric_limits<double>::infinity());
  CHECK_FALSE(loaded.entries[1].feature.has_value());
  CHECK(std::isnan(loaded.entries[2].log_density));
}

TEST_CASE("buffer export emits one labelled row per entry") {
  MemoryBuffer buffer;
  buffer.capacity = 4;
  buffer.entries.push_back(BufferEntry{7, 1, 2, -0.5, std::nullopt});
  buffer.entries.push_back(
      BufferEntry{8, 2, 0, -std::numeric_limits<double>::infinity(), std::nullopt});
  std::ostringstream out;
  export_buffer_csv(buffer, out);
  CHECK(out.str() ==
        "sample_id,task_id,label,log_density\n"
        "7,1,2,-0.5\n"
        "8,2,0,-inf\n");
}

TEST_CASE("doubles serialize with full round-trip precision") {
  CHECK(format_double(0.0) == "0");
  CHECK(format_double(-2.25) == "-2.25");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "\"inf\"");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "\"-inf\"");
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "\"nan\"");
  for (const double v : {0.1, 1.0 / 3.0, 6.02214076e23, -5e-324}) {
    CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  }
}

TEST_CASE("malformed persisted documents are rejected with path context") {
  oracle::TempDir dir;

  SUBCASE("unparseable text") {
    const auto path = dir.file("broken.json");
    std::ofstream(path) << "{\"format\":";
    const std::string msg = error_message([&] { load_registry(path); });
    CHECK(msg.find(path) != std::string::npos);
  }

  SUBCASE("wrong document format tag") {
    const auto path = dir.file("tag.json");
    std::ofstream(path) << "{\"format\":\"pdac-buffer\",\"version\":1,\"feature_dim\":2,"
                           "\"classes\":[]}";
    CHECK_THROWS_AS(load_registry(path), Error);
  }

  SUBCASE("missing key") {
    const auto path = dir.file("missing.json");
    std::ofstream(path) << "{\"format\":\"pdac-registry\",\"version\":1}";
    const std::string msg = error_message([&] { load_registry(path); });
    CHECK(msg.find("feature_dim") != std::string::npos);
  }

  SUBCASE("entries beyond capacity") {
    const auto path = dir.file("over.json");
    std::ofstream(path)
        << "{\"format\":\"pdac-buffer\",\"version\":1,\"capacity\":1,\"allocation\":[],"
           "\"entries\":[{\"sample_id\":1,\"task_id\":1,\"label\":0,\"log_density\":-1},"
           "{\"sample_id\":2,\"task_id\":1,\"label\":0,\"log_density\":-2}]}";
    const std::string msg = error_message([&] { load_buffer(path); });
    CHECK(msg.find("capacity") != std::string::npos);
  }

  SUBCASE("nonfinite tokens load back as the values they name") {
    const auto path = dir.file("tokens.json");
    std::ofstream(path)
        << "{\"format\":\"pdac-buffer\",\"version\":1,\"capacity\":3,\"allocation\":[],"
           "\"entries\":[{\"sample_id\":1,\"task_id\":1,\"label\":0,\"log_density\":\"-inf\"}]}";
    const MemoryBuffer loaded = load_buffer(path);
    REQUIRE(loaded.size() == 1);
    CHECK(loaded.entries[0].log_density == -std::numeric_limits<double>::infinity());
  }
}
