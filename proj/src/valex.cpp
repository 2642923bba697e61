#include "pdac/valex.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "pdac/dataio.hpp"
#include "pdac/errors.hpp"

namespace pdac {

MixtureSpec default_mixture() {
  MixtureSpec spec;
  constexpr int k = 10;
  constexpr double kTau = 6.28318530717958647692;
  for (int i = 0; i < k; ++i) {
    const double theta = kTau * static_cast<double>(i) / static_cast<double>(k);
    spec.means.emplace_back(3.0 * std::cos(theta), 3.0 * std::sin(theta));
    spec.covariances.push_back(2.0 * Eigen::Matrix2d::Identity());
    spec.priors.push_back(1.0 / static_cast<double>(k));
  }
  return spec;
}

namespace {

void check_spec(const MixtureSpec& spec) {
  const std::size_t k = spec.means.size();
  if (k == 0 || spec.covariances.size() != k || spec.priors.size() != k)
    fail(ErrorKind::invalid_argument, "malformed mixture specification");
  double total = 0.0;
  for (double p : spec.priors) {
    if (p < 0.0) fail(ErrorKind::invalid_argument, "negative class prior");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9) fail(ErrorKind::invalid_argument, "priors must sum to 1");
}

double component_log_pdf(const MixtureSpec& spec, const Eigen::Vector2d& x, std::size_t k) {
  const Eigen::Vector2d diff = x - spec.means[k];
  const Eigen::Matrix2d& cov = spec.covariances[k];
  const double det = cov.determinant();
  if (det <= 0.0) fail(ErrorKind::numeric, "mixture covariance not positive definite");
  const double quad = diff.dot(cov.inverse() * diff);
  constexpr double kLog2Pi = 1.8378770664093454836;
  return -0.5 * (2.0 * kLog2Pi + std::log(det) + quad);
}

}  // namespace

LabeledPoints sample_mixture(const MixtureSpec& spec, std::size_t n, Rng& rng) {
  check_spec(spec);
  if (n < 1) fail(ErrorKind::invalid_argument, "sample count must be positive");
  LabeledPoints out;
  out.x.resize(static_cast<Eigen::Index>(n), 2);
  out.y.resize(n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Eigen::Matrix2d> chol(spec.means.size());
  for (std::size_t k = 0; k < spec.means.size(); ++k) {
    Eigen::LLT<Eigen::Matrix2d> llt(spec.covariances[k]);
    if (llt.info() != Eigen::Success)
      fail(ErrorKind::numeric, "mixture covariance not positive definite");
    chol[k] = llt.matrixL();
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double u = unit(rng);
    std::size_t label = spec.means.size() - 1;
    double acc = 0.0;
    for (std::size_t k = 0; k < spec.priors.size(); ++k) {
      acc += spec.priors[k];
      if (u < acc) {
        label = k;
        break;
      }
    }
    const Eigen::Vector2d z(normal(rng), normal(rng));
    const Eigen::Vector2d x = spec.means[label] + chol[label] * z;
    out.x.row(static_cast<Eigen::Index>(i)) = x.transpose();
    out.y[i] = static_cast<std::uint32_t>(label);
  }
  return out;
}

double true_log_density(const MixtureSpec& spec, const Eigen::Vector2d& x, std::uint32_t y) {
  if (y >= spec.means.size()) fail(ErrorKind::invalid_argument, "label outside mixture");
  const double prior = spec.priors[y];
  if (prior <= 0.0) return -std::numeric_limits<double>::infinity();
  return std::log(prior) + component_log_pdf(spec, x, y);
}

double true_density(const MixtureSpec& spec, const Eigen::Vector2d& x, std::uint32_t y) {
  return std::exp(true_log_density(spec, x, y));
}

Eigen::VectorXd bayes_optimal(const MixtureSpec& spec, const Eigen::Vector2d& x) {
  check_spec(spec);
  const std::size_t k = spec.means.size();
  std::vector<double> logs(k);
  for (std::size_t j = 0; j < k; ++j) {
    logs[j] = spec.priors[j] > 0.0
                  ? std::log(spec.priors[j]) + component_log_pdf(spec, x, j)
                  : -std::numeric_limits<double>::infinity();
  }
  const double lse = log_sum_exp(logs);
  Eigen::VectorXd out(static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < k; ++j)
    out(static_cast<Eigen::Index>(j)) = std::exp(logs[j] - lse);
  return out;
}

int RegionPartition::cells_per_axis() const {
  if (!(side > 0.0) || !(cell > 0.0))
    fail(ErrorKind::invalid_argument, "partition dimensions must be positive");
  const double ratio = side / cell;
  const double rounded = std::round(ratio);
  if (std::fabs(ratio - rounded) > 1e-9 || rounded < 1.0)
    fail(ErrorKind::invalid_argument, "cell size must divide the side length exactly");
  return static_cast<int>(rounded);
}

int RegionPartition::region_count() const {
  const int c = cells_per_axis();
  return c * c;
}

int RegionPartition::region_index(const Eigen::Vector2d& x) const {
  const int cells = cells_per_axis();
  const double half = side / 2.0;
  auto axis = [&](double v) {
    const int idx = static_cast<int>(std::floor((v + half) / cell));
    return std::clamp(idx, 0, cells - 1);
  };
  return axis(x.y()) * cells + axis(x.x());
}

std::map<int, double> region_probabilities(const RegionPartition& part, const Eigen::MatrixXd& x,
                                           const std::vector<double>& weights) {
  if (x.rows() != static_cast<Eigen::Index>(weights.size()))
    fail(ErrorKind::invalid_argument, "point/weight count mismatch");
  std::map<int, double> mass;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    mass[part.region_index(x.row(i).transpose())] += weights[static_cast<std::size_t>(i)];
  return mass;
}

StrategyKind parse_strategy(const std::string& name) {
  if (name == "uniform") return StrategyKind::uniform;
  if (name == "prop_p") return StrategyKind::prop_p;
  if (name == "prop_inv_p") return StrategyKind::prop_inv_p;
  if (name == "model_proxy") return StrategyKind::model_proxy;
  fail(ErrorKind::invalid_argument, "unknown strategy '" + name + "'");
}

std::string strategy_name(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::uniform: return "uniform";
    case StrategyKind::prop_p: return "prop_p";
    case StrategyKind::prop_inv_p: return "prop_inv_p";
    case StrategyKind::model_proxy: return "model_proxy";
  }
  fail(ErrorKind::invalid_argument, "unknown strategy kind");
}

std::vector<double> make_strategy(StrategyKind kind, const MixtureSpec& spec,
                                  const LabeledPoints& data, const PGMRegistry* proxy) {
  const std::size_t n = data.y.size();
  if (n == 0) fail(ErrorKind::invalid_argument, "empty dataset");
  std::vector<double> w(n);
  switch (kind) {
    case StrategyKind::uniform: {
      std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
      return w;
    }
    case StrategyKind::prop_p: {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        w[i] = true_density(spec, data.x.row(static_cast<Eigen::Index>(i)).transpose(), data.y[i]);
        total += w[i];
      }
      if (total <= 0.0) fail(ErrorKind::numeric, "density mass vanished");
      for (double& v : w) v /= total;
      return w;
    }
    case StrategyKind::prop_inv_p: {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double p =
            true_density(spec, data.x.row(static_cast<Eigen::Index>(i)).transpose(), data.y[i]);
        w[i] = p > 0.0 ? 1.0 / p : 0.0;  // zero-density points are excluded
        total += w[i];
      }
      if (total <= 0.0) fail(ErrorKind::numeric, "inverse density mass vanished");
      for (double& v : w) v /= total;
      return w;
    }
    case StrategyKind::model_proxy: {
      if (proxy == nullptr)
        fail(ErrorKind::invalid_argument, "model_proxy strategy needs a fitted registry");
      std::vector<double> logs(n);
      for (std::size_t i = 0; i < n; ++i) {
        logs[i] = joint_log_density(*proxy, data.y[i],
                                    data.x.row(static_cast<Eigen::Index>(i)).transpose());
      }
      const double lse = log_sum_exp(logs);
      if (!std::isfinite(lse)) {
        std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(n));
        return w;
      }
      for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(logs[i] - lse);
      return w;
    }
  }
  fail(ErrorKind::invalid_argument, "unknown strategy kind");
}

double conditional_mse(const std::vector<Eigen::MatrixXd>& softmax_outputs,
                       const Eigen::MatrixXd& bayes_targets) {
  if (softmax_outputs.empty()) fail(ErrorKind::invalid_argument, "no trial outputs");
  if (bayes_targets.rows() < 1) fail(ErrorKind::invalid_argument, "empty test set");
  double total = 0.0;
  for (const Eigen::MatrixXd& probs : softmax_outputs) {
    if (probs.rows() != bayes_targets.rows() || probs.cols() != bayes_targets.cols())
      fail(ErrorKind::invalid_argument, "trial output shape mismatch");
    total += (probs - bayes_targets).rowwise().squaredNorm().mean();
  }
  return total / static_cast<double>(softmax_outputs.size());
}

std::map<int, double> local_variance(const std::vector<Eigen::MatrixXd>& softmax_outputs,
                                     const Eigen::MatrixXd& test_x, const RegionPartition& part) {
  const std::size_t trials = softmax_outputs.size();
  if (trials < 2)
    fail(ErrorKind::invalid_argument, "variance undefined with fewer than two trials");
  const Eigen::Index n = test_x.rows();
  for (const auto& probs : softmax_outputs)
    if (probs.rows() != n) fail(ErrorKind::invalid_argument, "trial output shape mismatch");
  std::map<int, std::pair<double, std::size_t>> acc;  // region -> (trace sum, points)
  Eigen::RowVectorXd mean_row;
  for (Eigen::Index i = 0; i < n; ++i) {
    mean_row = softmax_outputs[0].row(i);
    for (std::size_t t = 1; t < trials; ++t) mean_row += softmax_outputs[t].row(i);
    mean_row /= static_cast<double>(trials);
    double trace = 0.0;
    for (std::size_t t = 0; t < trials; ++t)
      trace += (softmax_outputs[t].row(i) - mean_row).squaredNorm();
    trace /= static_cast<double>(trials - 1);
    auto& slot = acc[part.region_index(test_x.row(i).transpose())];
    slot.first += trace;
    slot.second += 1;
  }
  std::map<int, double> out;
  for (const auto& [region, slot] : acc)
    out[region] = slot.first / static_cast<double>(slot.second);
  return out;
}

namespace {

// Extended precision keeps the (ql - q) cancellation well under 1e-12.
long double bound_bracket(double p, double l, std::uint64_t n, double c0, double c1, double c2) {
  if (l == 0.0) return 0.0L;  // empty region
  const long double nn = static_cast<long double>(n);
  const long double q = std::pow(1.0L - static_cast<long double>(p), nn);
  const long double ql = std::pow(1.0L - static_cast<long double>(p) / l, nn);
  return (1.0L - q) * (c0 + q * c1) + 2.0L * l * c2 * (ql - q) * (1.0L - ql);
}

}  // namespace

double variance_bound(const BoundParams& params) {
  if (params.p.empty() || params.p.size() != params.l.size())
    fail(ErrorKind::invalid_argument, "regions need matching p and l values");
  if (params.n < 1) fail(ErrorKind::invalid_argument, "buffer size must be positive");
  if (params.c0 < 0.0 || params.c1 < 0.0 || params.c2 < 0.0 || params.gamma < 0.0)
    fail(ErrorKind::invalid_argument, "bound constants must be nonnegative");
  for (std::size_t i = 0; i < params.p.size(); ++i) {
    if (!(params.p[i] >= 0.0 && params.p[i] <= 1.0))
      fail(ErrorKind::invalid_argument, "resampling probability outside [0,1]");
    if (params.l[i] != 0.0 && params.l[i] < 1.0)
      fail(ErrorKind::invalid_argument, "region sample count must be 0 (empty) or >= 1");
    if (params.l[i] == 0.0 && params.p[i] > 0.0)
      fail(ErrorKind::invalid_argument, "empty region cannot carry resampling mass");
  }
  const long double tail =
      4.0L * static_cast<long double>(params.gamma) * static_cast<long double>(params.gamma);
  if (params.region_prob.empty()) {
    if (params.p.size() != 1)
      fail(ErrorKind::invalid_argument, "multiple regions need region probabilities");
    return static_cast<double>(
        bound_bracket(params.p[0], params.l[0], params.n, params.c0, params.c1, params.c2) +
        tail);
  }
  if (params.region_prob.size() != params.p.size())
    fail(ErrorKind::invalid_argument, "region probability count mismatch");
  double total_prob = 0.0;
  long double sum = 0.0L;
  for (std::size_t i = 0; i < params.p.size(); ++i) {
    if (params.region_prob[i] < 0.0)
      fail(ErrorKind::invalid_argument, "region probabilities must be nonnegative");
    total_prob += params.region_prob[i];
    sum += static_cast<long double>(params.region_prob[i]) *
           bound_bracket(params.p[i], params.l[i], params.n, params.c0, params.c1, params.c2);
  }
  if (total_prob > 1.0 + 1e-9)
    fail(ErrorKind::invalid_argument, "region probabilities exceed 1");
  return static_cast<double>(sum + tail);
}

namespace {

std::string csv_double(double v) {
  std::string s = format_double(v);
  if (!s.empty() && s.front() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

struct CellOutputs {
  std::vector<Eigen::MatrixXd> softmax;
  std::vector<double> mse;
  std::vector<double> density;
};

}  // namespace

ValexReport run_valex(const ValexConfig& config) {
  check_spec(config.spec);
  if (config.trials < 1) fail(ErrorKind::invalid_argument, "trial count must be positive");
  if (config.buffer_sizes.empty()) fail(ErrorKind::invalid_argument, "no buffer sizes requested");
  if (config.strategies.empty()) fail(ErrorKind::invalid_argument, "no strategies requested");
  if (config.n_train < 1 || config.n_test < 1)
    fail(ErrorKind::invalid_argument, "dataset sizes must be positive");
  for (std::size_t n : config.buffer_sizes)
    if (n < 1 || n > config.n_train)
      fail(ErrorKind::invalid_argument, "buffer size must lie in [1, n_train]");
  config.partition.cells_per_axis();  // validates the grid

  ValexReport report;
  report.config = config;

  Rng train_rng(derive_seed(config.seed, {0xDA7AULL, 0}));
  Rng test_rng(derive_seed(config.seed, {0xDA7AULL, 1}));
  const LabeledPoints train = sample_mixture(config.spec, config.n_train, train_rng);
  const LabeledPoints test = sample_mixture(config.spec, config.n_test, test_rng);
  const int classes = config.spec.classes();

  Eigen::MatrixXd targets(test.x.rows(), classes);
  for (Eigen::Index i = 0; i < test.x.rows(); ++i)
    targets.row(i) = bayes_optimal(config.spec, test.x.row(i).transpose()).transpose();

  std::vector<double> train_density(config.n_train);
  for (std::size_t i = 0; i < config.n_train; ++i) {
    train_density[i] =
        true_density(config.spec, train.x.row(static_cast<Eigen::Index>(i)).transpose(),
                     train.y[i]);
  }

  std::map<int, std::uint64_t> train_counts;
  for (Eigen::Index i = 0; i < train.x.rows(); ++i)
    ++train_counts[config.partition.region_index(train.x.row(i).transpose())];
  std::map<int, std::uint64_t> test_counts;
  for (Eigen::Index i = 0; i < test.x.rows(); ++i)
    ++test_counts[config.partition.region_index(test.x.row(i).transpose())];

  const bool wants_proxy =
      std::any_of(config.strategies.begin(), config.strategies.end(),
                  [](StrategyKind k) { return k == StrategyKind::model_proxy; });
  PGMRegistry proxy;
  if (wants_proxy) {
    Rng proxy_rng(derive_seed(config.seed, {0xF17ULL}));
    proxy = fit_registry(train.x, train.y, config.proxy_dim, config.proxy_components,
                         config.proxy_iterations, proxy_rng);
  }

  std::vector<std::uint64_t> all_ids(config.n_train);
  std::iota(all_ids.begin(), all_ids.end(), 0);

  for (std::size_t si = 0; si < config.strategies.size(); ++si) {
    const StrategyKind kind = config.strategies[si];
    const std::string name = strategy_name(kind);
    const std::vector<double> weights =
        make_strategy(kind, config.spec, train, wants_proxy ? &proxy : nullptr);
    const std::map<int, double> region_mass =
        region_probabilities(config.partition, train.x, weights);

    for (std::size_t ni = 0; ni < config.buffer_sizes.size(); ++ni) {
      const std::size_t buffer_n = config.buffer_sizes[ni];
      CellOutputs cell;
      cell.softmax.reserve(static_cast<std::size_t>(config.trials));
      for (int trial = 0; trial < config.trials; ++trial) {
        Rng select_rng(derive_seed(
            config.seed, {1, si, ni, static_cast<std::uint64_t>(trial)}));
        const std::vector<std::uint64_t> picked = weighted_sample_without_replacement(
            SelectionWeights{all_ids, weights}, buffer_n, select_rng);

        Eigen::MatrixXd bx(static_cast<Eigen::Index>(buffer_n), 2);
        std::vector<std::uint32_t> by(buffer_n);
        double density_sum = 0.0;
        for (std::size_t i = 0; i < picked.size(); ++i) {
          const auto id = static_cast<Eigen::Index>(picked[i]);
          bx.row(static_cast<Eigen::Index>(i)) = train.x.row(id);
          by[i] = train.y[static_cast<std::size_t>(id)];
          density_sum += train_density[static_cast<std::size_t>(id)];
        }

        Rng fit_rng(derive_seed(config.seed, {2, si, ni, static_cast<std::uint64_t>(trial)}));
        const MlpModel model = train_mlp(bx, by, classes, config.train, fit_rng);
        Eigen::MatrixXd probs = mlp_softmax(model, test.x);
        const double mse = conditional_mse({probs}, targets);
        cell.mse.push_back(mse);
        cell.density.push_back(density_sum / static_cast<double>(buffer_n));
        cell.softmax.push_back(std::move(probs));
        report.mse.push_back(MseCell{name, buffer_n, trial, mse});
        report.density.push_back(
            DensityCell{name, buffer_n, trial,
                        cell.density.back()});
      }

      std::map<int, double> variance;
      if (config.trials >= 2) variance = local_variance(cell.softmax, test.x, config.partition);

      std::vector<double> trend_p;
      std::vector<double> trend_var;
      for (const auto& [region, count] : train_counts) {
        if (test_counts.find(region) == test_counts.end()) continue;
        const auto mass_it = region_mass.find(region);
        const double p = mass_it == region_mass.end() ? 0.0 : mass_it->second;
        double var = std::numeric_limits<double>::quiet_NaN();
        if (const auto var_it = variance.find(region); var_it != variance.end()) var = var_it->second;
        report.regions.push_back(RegionRow{name, buffer_n, region, p, count, var});
        if (std::isfinite(var)) {
          trend_p.push_back(p);
          trend_var.push_back(var);
        }
      }

      if (!trend_p.empty()) {
        const double lo = *std::min_element(trend_p.begin(), trend_p.end());
        const double hi = *std::max_element(trend_p.begin(), trend_p.end());
        const double width = (hi - lo) / 5.0;
        std::vector<std::vector<double>> bin_vars(5);
        for (std::size_t i = 0; i < trend_p.size(); ++i) {
          int bin = width > 0.0 ? static_cast<int>((trend_p[i] - lo) / width) : 0;
          bin = std::clamp(bin, 0, 4);  // the top edge closes the last bin
          bin_vars[static_cast<std::size_t>(bin)].push_back(trend_var[i]);
        }
        for (int b = 0; b < 5; ++b) {
          if (bin_vars[static_cast<std::size_t>(b)].empty()) continue;
          report.bins.push_back(BinRow{name, buffer_n, b, lo + width * b, lo + width * (b + 1),
                                       quartiles(bin_vars[static_cast<std::size_t>(b)])});
        }
      }

      SummaryCell summary;
      summary.strategy = name;
      summary.buffer_size = buffer_n;
      summary.mean_mse = mean(cell.mse);
      summary.sem_mse = sem(cell.mse);
      summary.mean_density = mean(cell.density);
      if (trend_p.size() >= 3) {
        summary.trend = spearman(trend_p, trend_var);
      } else {
        summary.trend = SpearmanResult{std::numeric_limits<double>::quiet_NaN(),
                                       std::numeric_limits<double>::quiet_NaN(), trend_p.size()};
      }
      report.summary.push_back(std::move(summary));
    }
  }
  return report;
}

void write_valex_report(const ValexReport& report, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorKind::io, out_dir + ": cannot create directory");

  auto open = [&](const std::string& file) {
    std::ofstream out(out_dir + "/" + file, std::ios::trunc);
    if (!out) fail(ErrorKind::io, out_dir + "/" + file + ": cannot open for writing");
    return out;
  };

  {
    std::ofstream out = open("mse.csv");
    out << "strategy,buffer_size,trial,mse\n";
    for (const auto& row : report.mse)
      out << row.strategy << ',' << row.buffer_size << ',' << row.trial << ','
          << csv_double(row.mse) << '\n';
  }
  {
    std::ofstream out = open("regions.csv");
    out << "strategy,buffer_size,region,p,train_count,variance\n";
    for (const auto& row : report.regions)
      out << row.strategy << ',' << row.buffer_size << ',' << row.region << ','
          << csv_double(row.p) << ',' << row.train_count << ',' << csv_double(row.variance)
          << '\n';
  }
  {
    std::ofstream out = open("bins.csv");
    out << "strategy,buffer_size,bin,p_low,p_high,var_min,var_q1,var_median,var_q3,var_max,"
           "regions\n";
    for (const auto& row : report.bins)
      out << row.strategy << ',' << row.buffer_size << ',' << row.bin << ','
          << csv_double(row.p_low) << ',' << csv_double(row.p_high) << ','
          << csv_double(row.variance.min) << ',' << csv_double(row.variance.q1) << ','
          << csv_double(row.variance.median) << ',' << csv_double(row.variance.q3) << ','
          << csv_double(row.variance.max) << ',' << row.variance.count << '\n';
  }
  {
    std::ofstream out = open("density.csv");
    out << "strategy,buffer_size,trial,mean_true_density\n";
    for (const auto& row : report.density)
      out << row.strategy << ',' << row.buffer_size << ',' << row.trial << ','
          << csv_double(row.mean_true_density) << '\n';
  }
  {
    std::ofstream out = open("summary.json");
    std::string text;
    text += "{\"config\":{";
    text += "\"n_train\":" + std::to_string(report.config.n_train);
    text += ",\"n_test\":" + std::to_string(report.config.n_test);
    text += ",\"trials\":" + std::to_string(report.config.trials);
    text += ",\"seed\":" + std::to_string(report.config.seed);
    text += ",\"side\":" + format_double(report.config.partition.side);
    text += ",\"m\":" + format_double(report.config.partition.cell);
    text += ",\"epochs\":" + std::to_string(report.config.train.epochs);
    text += ",\"warmup_epochs\":" + std::to_string(report.config.train.warmup_epochs);
    text += ",\"batch_size\":" + std::to_string(report.config.train.batch_size);
    text += ",\"hidden\":" + std::to_string(report.config.train.hidden);
    text += ",\"peak_lr\":" + format_double(report.config.train.peak_lr);
    text += ",\"proxy_components\":" + std::to_string(report.config.proxy_components);
    text += ",\"proxy_dim\":" + std::to_string(report.config.proxy_dim);
    text += ",\"proxy_iterations\":" + std::to_string(report.config.proxy_iterations);
    text += ",\"buffer_sizes\":[";
    for (std::size_t i = 0; i < report.config.buffer_sizes.size(); ++i) {
      if (i) text += ',';
      text += std::to_string(report.config.buffer_sizes[i]);
    }
    text += "],\"strategies\":[";
    for (std::size_t i = 0; i < report.config.strategies.size(); ++i) {
      if (i) text += ',';
      text += '"' + strategy_name(report.config.strategies[i]) + '"';
    }
    text += "]},\"cells\":[";
    for (std::size_t i = 0; i < report.summary.size(); ++i) {
      const SummaryCell& cell = report.summary[i];
      if (i) text += ',';
      text += "{\"strategy\":\"" + cell.strategy + '"';
      text += ",\"buffer_size\":" + std::to_string(cell.buffer_size);
      text += ",\"mean_mse\":" + format_double(cell.mean_mse);
      text += ",\"sem_mse\":" + format_double(cell.sem_mse);
      text += ",\"mean_density\":" + format_double(cell.mean_density);
      text += ",\"spearman_rho\":" + format_double(cell.trend.rho);
      text += ",\"spearman_p\":" + format_double(cell.trend.p_value);
      text += ",\"regions\":" + std::to_string(cell.trend.n);
      text += '}';
    }
    text += "]}\n";
    out << text;
  }
}

std::pair<double, double> acc_fm_metrics(const Eigen::MatrixXd& accuracy) {
  const Eigen::Index t = accuracy.rows();
  if (accuracy.cols() != t) fail(ErrorKind::invalid_argument, "accuracy matrix must be square");
  if (t < 2) fail(ErrorKind::invalid_argument, "forgetting undefined for fewer than two tasks");
  const double acc = accuracy.row(t - 1).mean();
  double fm = 0.0;
  for (Eigen::Index j = 0; j < t - 1; ++j) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = j; i < t - 1; ++i) best = std::max(best, accuracy(i, j));
    fm += best - accuracy(t - 1, j);
  }
  fm /= static_cast<double>(t - 1);
  return {acc, fm};
}

}  // namespace pdac
