#include <CLI11.hpp>
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "pdac.h"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(pdac_status status) {
  switch (status) {
    case PDAC_OK: return 0;
    case PDAC_ERR_INVALID_ARGUMENT: return kExitUsage;
    case PDAC_ERR_NUMERIC: return kExitNumeric;
    case PDAC_ERR_STATE:
    case PDAC_ERR_DATA:
    case PDAC_ERR_IO:
    default: return kExitData;
  }
}

struct CliError {
  int code;
};

void check(pdac_status status) {
  if (status != PDAC_OK) {
    std::cerr << "error: " << pdac_last_error() << '\n';
    throw CliError{exit_code_for(status)};
  }
}

[[noreturn]] void usage_error(const std::string& message) {
  std::cerr << "error: " << message << '\n';
  throw CliError{kExitUsage};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct RngClose {
  void operator()(pdac_rng* p) const { pdac_rng_destroy(p); }
};
struct ReaderClose {
  void operator()(pdac_reader* p) const { pdac_reader_close(p); }
};
struct RegistryClose {
  void operator()(pdac_registry* p) const { pdac_registry_destroy(p); }
};
struct BufferClose {
  void operator()(pdac_buffer* p) const { pdac_buffer_destroy(p); }
};
using RngPtr = std::unique_ptr<pdac_rng, RngClose>;
using ReaderPtr = std::unique_ptr<pdac_reader, ReaderClose>;
using RegistryPtr = std::unique_ptr<pdac_registry, RegistryClose>;
using BufferPtr = std::unique_ptr<pdac_buffer, BufferClose>;

RngPtr make_rng(uint64_t seed) {
  RngPtr rng(pdac_rng_create(seed));
  if (!rng) {
    std::cerr << "error: out of memory\n";
    throw CliError{kExitData};
  }
  return rng;
}

struct Features {
  uint32_t dim = 0;
  std::vector<uint32_t> tasks;
  std::vector<uint32_t> labels;
  std::vector<double> values;

  size_t count() const { return labels.size(); }
};

Features read_features_file(const std::string& path) {
  pdac_reader* raw = nullptr;
  check(pdac_reader_open(path.c_str(), &raw));
  ReaderPtr reader(raw);
  Features out;
  out.dim = pdac_reader_dim(raw);
  constexpr size_t kChunk = 8192;
  std::vector<uint32_t> tasks(kChunk), labels(kChunk);
  std::vector<double> values(kChunk * out.dim);
  for (;;) {
    size_t got = 0;
    check(pdac_reader_next(raw, tasks.data(), labels.data(), values.data(), kChunk, &got));
    if (got == 0) break;
    out.tasks.insert(out.tasks.end(), tasks.begin(), tasks.begin() + got);
    out.labels.insert(out.labels.end(), labels.begin(), labels.begin() + got);
    out.values.insert(out.values.end(), values.begin(), values.begin() + got * out.dim);
  }
  return out;
}

/* Config file merge: a key fills its flag only when the flag was not given on
   the command line. Unknown keys are usage errors. */
class ConfigBinder {
 public:
  explicit ConfigBinder(const nlohmann::json* doc) : doc_(doc) {}

  template <typename T>
  void bind(const char* key, const CLI::Option* opt, T& target) {
    if (doc_ == nullptr || !doc_->contains(key)) return;
    used_.insert(key);
    if (opt != nullptr && opt->count() > 0) return;
    try {
      target = doc_->at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      usage_error(std::string("config key '") + key + "': " + e.what());
    }
  }

  void mark_used(const std::string& key) { used_.insert(key); }

  void finish() const {
    if (doc_ == nullptr) return;
    for (const auto& item : doc_->items())
      if (used_.find(item.key()) == used_.end())
        usage_error("config: unknown key '" + item.key() + "'");
  }

 private:
  const nlohmann::json* doc_;
  std::set<std::string> used_;
};

size_t initialized_classes(const pdac_registry* registry) {
  size_t total = 0;
  check(pdac_registry_class_count(registry, &total));
  size_t ready = 0;
  for (size_t i = 0; i < total; ++i) {
    uint32_t label = 0;
    uint64_t count = 0;
    int init = 0;
    check(pdac_registry_class_info(registry, i, &label, &count, &init));
    if (init) ++ready;
  }
  return ready;
}

/* ---- fit-pgm --------------------------------------------------------- */

struct FitArgs {
  std::string features;
  std::string out;
  uint32_t d = 10;
  uint32_t components = 7;
  uint32_t iterations = 20;
  uint64_t seed = 0;
  const CLI::Option* features_opt = nullptr;
  const CLI::Option* out_opt = nullptr;
  const CLI::Option* d_opt = nullptr;
  const CLI::Option* components_opt = nullptr;
  const CLI::Option* iterations_opt = nullptr;
  const CLI::Option* seed_opt = nullptr;
};

int run_fit(FitArgs& args, const nlohmann::json* config) {
  ConfigBinder binder(config);
  binder.bind("features", args.features_opt, args.features);
  binder.bind("out", args.out_opt, args.out);
  binder.bind("d", args.d_opt, args.d);
  binder.bind("L", args.components_opt, args.components);
  binder.bind("G", args.iterations_opt, args.iterations);
  binder.bind("seed", args.seed_opt, args.seed);
  binder.finish();
  if (args.features.empty()) usage_error("fit-pgm: --features is required");
  if (args.out.empty()) usage_error("fit-pgm: --out is required");

  const Features data = read_features_file(args.features);
  RngPtr rng = make_rng(args.seed);
  pdac_registry* raw = nullptr;
  check(pdac_registry_create(&raw));
  RegistryPtr registry(raw);
  check(pdac_registry_fit(raw, data.values.data(), data.labels.data(), data.count(), data.dim,
                          args.d, args.components, args.iterations, rng.get()));
  check(pdac_registry_save(raw, args.out.c_str()));

  std::map<uint32_t, std::vector<size_t>> by_label;
  for (size_t i = 0; i < data.count(); ++i) by_label[data.labels[i]].push_back(i);
  size_t classes = 0;
  check(pdac_registry_class_count(raw, &classes));
  std::cout << "label,count,mean_log_likelihood\n";
  for (size_t i = 0; i < classes; ++i) {
    uint32_t label = 0;
    uint64_t count = 0;
    int init = 0;
    check(pdac_registry_class_info(raw, i, &label, &count, &init));
    const std::vector<size_t>& rows = by_label[label];
    std::vector<double> block(rows.size() * data.dim);
    for (size_t r = 0; r < rows.size(); ++r)
      std::copy_n(data.values.data() + rows[r] * data.dim, data.dim,
                  block.data() + r * data.dim);
    double ll = 0.0;
    check(pdac_registry_mean_log_likelihood(raw, label, block.data(), rows.size(), data.dim,
                                            &ll));
    std::cout << label << ',' << count << ',' << fmt(ll) << '\n';
  }
  return 0;
}

/* ---- select ----------------------------------------------------------- */

struct SelectArgs {
  std::string features;
  std::string model;
  std::string buffer_in;
  std::string buffer_out;
  uint64_t buffer_size = 0;
  uint32_t task = 1;
  uint64_t seed = 0;
  const CLI::Option* features_opt = nullptr;
  const CLI::Option* model_opt = nullptr;
  const CLI::Option* buffer_in_opt = nullptr;
  const CLI::Option* buffer_out_opt = nullptr;
  const CLI::Option* buffer_size_opt = nullptr;
  const CLI::Option* task_opt = nullptr;
  const CLI::Option* seed_opt = nullptr;
};

int run_select(SelectArgs& args, const nlohmann::json* config) {
  ConfigBinder binder(config);
  binder.bind("features", args.features_opt, args.features);
  binder.bind("model", args.model_opt, args.model);
  binder.bind("buffer-in", args.buffer_in_opt, args.buffer_in);
  binder.bind("buffer-out", args.buffer_out_opt, args.buffer_out);
  binder.bind("buffer-size", args.buffer_size_opt, args.buffer_size);
  binder.bind("task", args.task_opt, args.task);
  binder.bind("seed", args.seed_opt, args.seed);
  binder.finish();
  if (args.features.empty()) usage_error("select: --features is required");
  if (args.model.empty()) usage_error("select: --model is required");
  const bool size_given =
      (args.buffer_size_opt != nullptr && args.buffer_size_opt->count() > 0) ||
      (config != nullptr && config->contains("buffer-size"));

  const Features data = read_features_file(args.features);
  pdac_registry* raw_registry = nullptr;
  check(pdac_registry_load(args.model.c_str(), &raw_registry));
  RegistryPtr registry(raw_registry);

  pdac_buffer* raw_buffer = nullptr;
  if (!args.buffer_in.empty()) {
    check(pdac_buffer_load(args.buffer_in.c_str(), &raw_buffer));
  } else {
    if (!size_given) usage_error("select: --buffer-size is required without --buffer-in");
    check(pdac_buffer_create(args.buffer_size, &raw_buffer));
  }
  BufferPtr buffer(raw_buffer);
  if (!args.buffer_in.empty() && size_given &&
      pdac_buffer_capacity(raw_buffer) != args.buffer_size)
    usage_error("select: --buffer-size disagrees with the loaded buffer's capacity");

  uint64_t next_id = 0;
  const size_t held = pdac_buffer_size(raw_buffer);
  for (size_t i = 0; i < held; ++i) {
    uint64_t sample_id = 0;
    uint32_t task_id = 0, label = 0;
    double log_density = 0.0;
    check(pdac_buffer_entry(raw_buffer, i, &sample_id, &task_id, &label, &log_density));
    next_id = std::max(next_id, sample_id + 1);
  }
  std::vector<uint64_t> ids(data.count());
  for (size_t i = 0; i < ids.size(); ++i) ids[i] = next_id + i;

  RngPtr rng = make_rng(args.seed);
  size_t shortfall = 0;
  check(pdac_buffer_update(raw_buffer, raw_registry, ids.data(), data.values.data(),
                           data.labels.data(), data.count(), data.dim, args.task, rng.get(),
                           &shortfall));
  if (shortfall > 0)
    std::cerr << "select: task " << args.task << " short by " << shortfall << " samples\n";

  if (!args.buffer_out.empty()) check(pdac_buffer_save(raw_buffer, args.buffer_out.c_str()));
  char* text = nullptr;
  check(pdac_buffer_export_rows(raw_buffer, &text));
  std::cout << text;
  pdac_free_text(text);
  return 0;
}

/* ---- stream ----------------------------------------------------------- */

struct StreamArgs {
  std::string features;
  std::string out;
  std::string model_out;
  uint64_t buffer_size = 0;
  uint32_t batch_size = 32;
  double beta = 0.5;
  uint32_t d = 10;
  uint32_t components = 7;
  uint64_t seed = 0;
  const CLI::Option* features_opt = nullptr;
  const CLI::Option* out_opt = nullptr;
  const CLI::Option* model_out_opt = nullptr;
  const CLI::Option* buffer_size_opt = nullptr;
  const CLI::Option* batch_size_opt = nullptr;
  const CLI::Option* beta_opt = nullptr;
  const CLI::Option* d_opt = nullptr;
  const CLI::Option* components_opt = nullptr;
  const CLI::Option* seed_opt = nullptr;
};

int run_stream(StreamArgs& args, const nlohmann::json* config) {
  ConfigBinder binder(config);
  binder.bind("features", args.features_opt, args.features);
  binder.bind("out", args.out_opt, args.out);
  binder.bind("model-out", args.model_out_opt, args.model_out);
  binder.bind("buffer-size", args.buffer_size_opt, args.buffer_size);
  binder.bind("batch-size", args.batch_size_opt, args.batch_size);
  binder.bind("beta", args.beta_opt, args.beta);
  binder.bind("d", args.d_opt, args.d);
  binder.bind("L", args.components_opt, args.components);
  binder.bind("seed", args.seed_opt, args.seed);
  binder.finish();
  if (args.features.empty()) usage_error("stream: --features is required");
  if (args.out.empty()) usage_error("stream: --out is required");
  if (args.batch_size == 0) usage_error("stream: --batch-size must be positive");

  pdac_reader* raw_reader = nullptr;
  check(pdac_reader_open(args.features.c_str(), &raw_reader));
  ReaderPtr reader(raw_reader);
  const uint32_t dim = pdac_reader_dim(raw_reader);

  pdac_registry* raw_registry = nullptr;
  check(pdac_registry_create(&raw_registry));
  RegistryPtr registry(raw_registry);
  pdac_buffer* raw_buffer = nullptr;
  check(pdac_buffer_create(args.buffer_size, &raw_buffer));
  BufferPtr buffer(raw_buffer);

  RngPtr model_rng = make_rng(args.seed);
  RngPtr select_rng = make_rng(args.seed ^ 0x9E3779B97F4A7C15ULL);

  std::vector<uint32_t> tasks(args.batch_size), labels(args.batch_size);
  std::vector<double> values(static_cast<size_t>(args.batch_size) * dim);
  std::vector<uint64_t> ids(args.batch_size);
  uint64_t next_id = 0;
  size_t batch_index = 0;
  std::cout << "batch,records,buffer_size,classes_initialized\n";
  for (;;) {
    size_t got = 0;
    check(pdac_reader_next(raw_reader, tasks.data(), labels.data(), values.data(),
                           args.batch_size, &got));
    if (got == 0) break;
    check(pdac_registry_ingest(raw_registry, values.data(), labels.data(), got, dim, args.beta,
                               args.d, args.components, model_rng.get()));
    for (size_t i = 0; i < got; ++i) ids[i] = next_id + i;
    next_id += got;
    check(pdac_buffer_stream_batch(raw_buffer, raw_registry, ids.data(), values.data(),
                                   labels.data(), got, dim, select_rng.get()));
    std::cout << batch_index << ',' << got << ',' << pdac_buffer_size(raw_buffer) << ','
              << initialized_classes(raw_registry) << '\n';
    ++batch_index;
  }

  check(pdac_buffer_save(raw_buffer, args.out.c_str()));
  if (!args.model_out.empty()) check(pdac_registry_save(raw_registry, args.model_out.c_str()));
  return 0;
}

/* ---- valex ------------------------------------------------------------ */

struct ValexArgs {
  std::string out_dir;
  uint64_t n_train = 100000;
  uint64_t n_test = 100000;
  int trials = 10;
  std::vector<uint64_t> buffer_sizes{10, 100, 1000};
  std::vector<std::string> strategies{"uniform", "prop_p", "prop_inv_p", "model_proxy"};
  double cell = 0.4;
  double side = 20.0;
  int epochs = 50;
  uint64_t seed = 0;
  const CLI::Option* out_dir_opt = nullptr;
  const CLI::Option* n_train_opt = nullptr;
  const CLI::Option* n_test_opt = nullptr;
  const CLI::Option* trials_opt = nullptr;
  const CLI::Option* buffer_sizes_opt = nullptr;
  const CLI::Option* strategies_opt = nullptr;
  const CLI::Option* cell_opt = nullptr;
  const CLI::Option* side_opt = nullptr;
  const CLI::Option* epochs_opt = nullptr;
  const CLI::Option* seed_opt = nullptr;
};

int run_valex(ValexArgs& args, const nlohmann::json* config) {
  ConfigBinder binder(config);
  binder.bind("out-dir", args.out_dir_opt, args.out_dir);
  binder.bind("n-train", args.n_train_opt, args.n_train);
  binder.bind("n-test", args.n_test_opt, args.n_test);
  binder.bind("trials", args.trials_opt, args.trials);
  binder.bind("N-list", args.buffer_sizes_opt, args.buffer_sizes);
  binder.bind("strategies", args.strategies_opt, args.strategies);
  binder.bind("m", args.cell_opt, args.cell);
  binder.bind("side", args.side_opt, args.side);
  binder.bind("epochs", args.epochs_opt, args.epochs);
  binder.bind("seed", args.seed_opt, args.seed);
  // Extra experiment knobs pass straight through to the runner.
  static const char* kForwarded[] = {"warmup-epochs", "batch-size",      "hidden",
                                     "peak-lr",       "proxy-components", "proxy-dim",
                                     "proxy-iterations"};
  nlohmann::json doc;
  doc["n-train"] = args.n_train;
  doc["n-test"] = args.n_test;
  doc["trials"] = args.trials;
  doc["N-list"] = args.buffer_sizes;
  doc["strategies"] = args.strategies;
  doc["m"] = args.cell;
  doc["side"] = args.side;
  doc["epochs"] = args.epochs;
  doc["seed"] = args.seed;
  if (config != nullptr) {
    for (const char* key : kForwarded) {
      if (config->contains(key)) {
        doc[key] = config->at(key);
        binder.mark_used(key);
      }
    }
  }
  binder.finish();
  if (args.out_dir.empty()) usage_error("valex: --out-dir is required");
  check(pdac_valex_run(doc.dump().c_str(), args.out_dir.c_str()));
  return 0;
}

/* ---- bound ------------------------------------------------------------ */

struct BoundArgs {
  std::vector<double> p;
  std::vector<double> l;
  std::vector<double> region_prob;
  uint64_t n = 1;
  double c0 = 1.0;
  double c1 = 1.0;
  double c2 = 1.0;
  double gamma = 0.0;
  const CLI::Option* p_opt = nullptr;
  const CLI::Option* l_opt = nullptr;
  const CLI::Option* region_prob_opt = nullptr;
  const CLI::Option* n_opt = nullptr;
  const CLI::Option* c0_opt = nullptr;
  const CLI::Option* c1_opt = nullptr;
  const CLI::Option* c2_opt = nullptr;
  const CLI::Option* gamma_opt = nullptr;
};

int run_bound(BoundArgs& args, const nlohmann::json* config) {
  ConfigBinder binder(config);
  binder.bind("p", args.p_opt, args.p);
  binder.bind("l", args.l_opt, args.l);
  binder.bind("region-prob", args.region_prob_opt, args.region_prob);
  binder.bind("N", args.n_opt, args.n);
  binder.bind("C0", args.c0_opt, args.c0);
  binder.bind("C1", args.c1_opt, args.c1);
  binder.bind("C2", args.c2_opt, args.c2);
  binder.bind("gamma", args.gamma_opt, args.gamma);
  binder.finish();
  if (args.p.empty()) usage_error("bound: --p is required");
  if (args.l.empty()) usage_error("bound: --l is required");
  if (args.p.size() != args.l.size())
    usage_error("bound: --p and --l need the same number of entries");
  if (!args.region_prob.empty() && args.region_prob.size() != args.p.size())
    usage_error("bound: --region-prob length disagrees with --p");
  double out = 0.0;
  check(pdac_variance_bound(args.p.data(), args.l.data(),
                            args.region_prob.empty() ? nullptr : args.region_prob.data(),
                            args.p.size(), args.n, args.c0, args.c1, args.c2, args.gamma, &out));
  std::cout << fmt(out) << '\n';
  return 0;
}

/* ---- metrics ----------------------------------------------------------- */

struct MetricsArgs {
  std::string matrix;
  const CLI::Option* matrix_opt = nullptr;
};

std::vector<std::vector<double>> read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: " << path << ": cannot open\n";
    throw CliError{kExitData};
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    size_t start = 0;
    while (start <= line.size()) {
      const size_t comma = line.find(',', start);
      const std::string token =
          line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      try {
        size_t used = 0;
        row.push_back(std::stod(token, &used));
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        std::cerr << "error: " << path << ':' << line_no << ": bad number '" << token << "'\n";
        throw CliError{kExitData};
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

int run_metrics(MetricsArgs& args, const nlohmann::json* config) {
  ConfigBinder binder(config);
  binder.bind("matrix", args.matrix_opt, args.matrix);
  binder.finish();
  if (args.matrix.empty()) usage_error("metrics: --matrix is required");
  const std::vector<std::vector<double>> rows = read_matrix_csv(args.matrix);
  const size_t t = rows.size();
  for (const auto& row : rows)
    if (row.size() != t) {
      std::cerr << "error: " << args.matrix << ": accuracy matrix must be square\n";
      throw CliError{kExitData};
    }
  std::vector<double> flat;
  flat.reserve(t * t);
  for (const auto& row : rows) flat.insert(flat.end(), row.begin(), row.end());
  double acc = 0.0, fm = 0.0;
  check(pdac_acc_fm(flat.data(), t, &acc, &fm));
  std::cout << "acc,fm\n" << fmt(acc) << ',' << fmt(fm) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Density-aware coreset selection over projected Gaussian mixtures"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags given on the command line win")
      ->expected(1);

  FitArgs fit;
  CLI::App* fit_cmd = app.add_subcommand("fit-pgm", "Fit the density registry offline");
  fit.features_opt = fit_cmd->add_option("--features", fit.features, "Input feature file");
  fit.out_opt = fit_cmd->add_option("--out", fit.out, "Registry output path");
  fit.d_opt = fit_cmd->add_option("--d", fit.d, "Projection dimension");
  fit.components_opt = fit_cmd->add_option("--L", fit.components, "Mixture components per class");
  fit.iterations_opt = fit_cmd->add_option("--G", fit.iterations, "EM iterations");
  fit.seed_opt = fit_cmd->add_option("--seed", fit.seed, "RNG seed");

  SelectArgs select;
  CLI::App* select_cmd = app.add_subcommand("select", "Density-aware buffer update for one task");
  select.features_opt =
      select_cmd->add_option("--features", select.features, "Candidate feature file");
  select.model_opt = select_cmd->add_option("--model", select.model, "Fitted registry path");
  select.buffer_size_opt =
      select_cmd->add_option("--buffer-size", select.buffer_size, "Buffer capacity");
  select.task_opt = select_cmd->add_option("--task", select.task, "Task number (1-based)");
  select.buffer_in_opt =
      select_cmd->add_option("--buffer-in", select.buffer_in, "Existing buffer to update");
  select.buffer_out_opt =
      select_cmd->add_option("--buffer-out", select.buffer_out, "Updated buffer output path");
  select.seed_opt = select_cmd->add_option("--seed", select.seed, "RNG seed");

  StreamArgs stream;
  CLI::App* stream_cmd =
      app.add_subcommand("stream", "Replay a feature file as a stream of batches");
  stream.features_opt =
      stream_cmd->add_option("--features", stream.features, "Input feature file");
  stream.batch_size_opt =
      stream_cmd->add_option("--batch-size", stream.batch_size, "Records per batch");
  stream.beta_opt = stream_cmd->add_option("--beta", stream.beta, "EMA step size");
  stream.buffer_size_opt =
      stream_cmd->add_option("--buffer-size", stream.buffer_size, "Buffer capacity");
  stream.d_opt = stream_cmd->add_option("--d", stream.d, "Projection dimension");
  stream.components_opt =
      stream_cmd->add_option("--L", stream.components, "Mixture components per class");
  stream.seed_opt = stream_cmd->add_option("--seed", stream.seed, "RNG seed");
  stream.out_opt = stream_cmd->add_option("--out", stream.out, "Final buffer output path");
  stream.model_out_opt =
      stream_cmd->add_option("--model-out", stream.model_out, "Also save the final registry");

  ValexArgs valex;
  CLI::App* valex_cmd = app.add_subcommand("valex", "Synthetic validation experiment");
  valex.n_train_opt = valex_cmd->add_option("--n-train", valex.n_train, "Training samples");
  valex.n_test_opt = valex_cmd->add_option("--n-test", valex.n_test, "Test samples");
  valex.trials_opt = valex_cmd->add_option("--trials", valex.trials, "Trials per cell");
  valex.buffer_sizes_opt =
      valex_cmd->add_option("--N-list", valex.buffer_sizes, "Buffer sizes (comma separated)")
          ->delimiter(',');
  valex.strategies_opt =
      valex_cmd->add_option("--strategies", valex.strategies, "Strategies (comma separated)")
          ->delimiter(',');
  valex.cell_opt = valex_cmd->add_option("--m", valex.cell, "Region cell width");
  valex.side_opt = valex_cmd->add_option("--side", valex.side, "Region grid side length");
  valex.epochs_opt = valex_cmd->add_option("--epochs", valex.epochs, "Training epochs");
  valex.seed_opt = valex_cmd->add_option("--seed", valex.seed, "RNG seed");
  valex.out_dir_opt = valex_cmd->add_option("--out-dir", valex.out_dir, "Report directory");

  BoundArgs bound;
  CLI::App* bound_cmd = app.add_subcommand("bound", "Evaluate the region variance bound");
  bound.p_opt = bound_cmd->add_option("--p", bound.p, "Resampling mass per region")
                    ->delimiter(',');
  bound.l_opt = bound_cmd->add_option("--l", bound.l, "Sample count per region (0 = empty)")
                    ->delimiter(',');
  bound.region_prob_opt =
      bound_cmd->add_option("--region-prob", bound.region_prob, "Region probabilities")
          ->delimiter(',');
  bound.n_opt = bound_cmd->add_option("--N", bound.n, "Buffer size");
  bound.c0_opt = bound_cmd->add_option("--C0", bound.c0, "Constant C0");
  bound.c1_opt = bound_cmd->add_option("--C1", bound.c1, "Constant C1");
  bound.c2_opt = bound_cmd->add_option("--C2", bound.c2, "Constant C2");
  bound.gamma_opt = bound_cmd->add_option("--gamma", bound.gamma, "Approximation error term");

  MetricsArgs metrics;
  CLI::App* metrics_cmd =
      app.add_subcommand("metrics", "Average accuracy and forgetting from an accuracy matrix");
  metrics.matrix_opt =
      metrics_cmd->add_option("--matrix", metrics.matrix, "CSV file, row i = after task i");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  nlohmann::json config_doc;
  const nlohmann::json* config = nullptr;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "error: " << config_path << ": cannot open\n";
      return kExitUsage;
    }
    try {
      config_doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      std::cerr << "error: " << config_path << ": " << e.what() << '\n';
      return kExitUsage;
    }
    if (!config_doc.is_object()) {
      std::cerr << "error: " << config_path << ": config must be a JSON object\n";
      return kExitUsage;
    }
    config = &config_doc;
  }

  try {
    if (fit_cmd->parsed()) return run_fit(fit, config);
    if (select_cmd->parsed()) return run_select(select, config);
    if (stream_cmd->parsed()) return run_stream(stream, config);
    if (valex_cmd->parsed()) return run_valex(valex, config);
    if (bound_cmd->parsed()) return run_bound(bound, config);
    if (metrics_cmd->parsed()) return run_metrics(metrics, config);
  } catch (const CliError& e) {
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
