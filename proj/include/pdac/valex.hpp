#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pdac/coreset.hpp"
#include "pdac/mlp.hpp"
#include "pdac/rng.hpp"
#include "pdac/stats.hpp"

namespace pdac {

struct MixtureSpec {
  std::vector<Eigen::Vector2d> means;
  std::vector<Eigen::Matrix2d> covariances;
  std::vector<double> priors;

  int classes() const { return static_cast<int>(means.size()); }
};

// Ten classes on a radius-3 circle, covariance 2I, uniform priors.
MixtureSpec default_mixture();

struct LabeledPoints {
  Eigen::MatrixXd x;  // n x 2
  std::vector<std::uint32_t> y;
};

LabeledPoints sample_mixture(const MixtureSpec& spec, std::size_t n, Rng& rng);

double true_density(const MixtureSpec& spec, const Eigen::Vector2d& x, std::uint32_t y);
double true_log_density(const MixtureSpec& spec, const Eigen::Vector2d& x, std::uint32_t y);

Eigen::VectorXd bayes_optimal(const MixtureSpec& spec, const Eigen::Vector2d& x);

struct RegionPartition {
  double side = 20.0;
  double cell = 0.4;

  int cells_per_axis() const;
  int region_count() const;
  // Out-of-bounds points clamp to the boundary cell.
  int region_index(const Eigen::Vector2d& x) const;
};

// Mass each region receives under the given per-sample weights.
std::map<int, double> region_probabilities(const RegionPartition& part, const Eigen::MatrixXd& x,
                                           const std::vector<double>& weights);

enum class StrategyKind { uniform, prop_p, prop_inv_p, model_proxy };

StrategyKind parse_strategy(const std::string& name);
std::string strategy_name(StrategyKind kind);

// Normalized selection weights over the dataset: uniform, proportional to the
// true joint density, proportional to its reciprocal (zero-density points
// excluded), or proportional to the registry's estimated joint density.
std::vector<double> make_strategy(StrategyKind kind, const MixtureSpec& spec,
                                  const LabeledPoints& data, const PGMRegistry* proxy);

double conditional_mse(const std::vector<Eigen::MatrixXd>& softmax_outputs,
                       const Eigen::MatrixXd& bayes_targets);

// Per region: mean over its test points of the trace of the across-trial
// sample covariance of softmax outputs. Needs at least two trials.
std::map<int, double> local_variance(const std::vector<Eigen::MatrixXd>& softmax_outputs,
                                     const Eigen::MatrixXd& test_x, const RegionPartition& part);

struct BoundParams {
  double c0 = 1.0;
  double c1 = 1.0;
  double c2 = 1.0;
  double gamma = 0.0;
  std::uint64_t n = 1;               // buffer size
  std::vector<double> p;             // per-region resampling mass
  std::vector<double> l;             // per-region sample count; 0 marks empty
  std::vector<double> region_prob;   // empty for the single-region form
};

// Single-region variance bound, or with region_prob set the probability-
// weighted sum over nonempty regions plus one 4*gamma^2 term.
double variance_bound(const BoundParams& params);

struct ValexConfig {
  MixtureSpec spec = default_mixture();
  std::size_t n_train = 100000;
  std::size_t n_test = 100000;
  int trials = 10;
  std::vector<std::size_t> buffer_sizes{10, 100, 1000};
  std::vector<StrategyKind> strategies{StrategyKind::uniform, StrategyKind::prop_p,
                                       StrategyKind::prop_inv_p, StrategyKind::model_proxy};
  RegionPartition partition;
  TrainConfig train;
  int proxy_components = 3;
  int proxy_dim = 5;
  int proxy_iterations = 20;
  std::uint64_t seed = 0;
};

struct MseCell {
  std::string strategy;
  std::size_t buffer_size;
  int trial;
  double mse;
};

struct RegionRow {
  std::string strategy;
  std::size_t buffer_size;
  int region;
  double p;
  std::uint64_t train_count;
  double variance;
};

struct BinRow {
  std::string strategy;
  std::size_t buffer_size;
  int bin;
  double p_low;
  double p_high;
  QuartileSummary variance;
};

struct DensityCell {
  std::string strategy;
  std::size_t buffer_size;
  int trial;
  double mean_true_density;
};

struct SummaryCell {
  std::string strategy;
  std::size_t buffer_size;
  double mean_mse;
  double sem_mse;
  double mean_density;
  SpearmanResult trend;
};

struct ValexReport {
  ValexConfig config;
  std::vector<MseCell> mse;
  std::vector<RegionRow> regions;
  std::vector<BinRow> bins;
  std::vector<DensityCell> density;
  std::vector<SummaryCell> summary;
};

ValexReport run_valex(const ValexConfig& config);

void write_valex_report(const ValexReport& report, const std::string& out_dir);

// A is T x T row-major with row i holding accuracies after training task i.
// Returns final average accuracy and the forgetting measure; T >= 2.
std::pair<double, double> acc_fm_metrics(const Eigen::MatrixXd& accuracy);

}  // namespace pdac
