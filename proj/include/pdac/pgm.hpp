#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <vector>

#include "pdac/rng.hpp"

namespace pdac {

// Running per-class feature statistics. Rows of feature matrices are samples.
struct ClassStats {
  std::uint64_t count = 0;
  Eigen::VectorXd mean;  // D
  Eigen::MatrixXd cov;   // D x D, centered, divide-by-n convention
};

enum class StatsUpdateMode {
  // Incremental form used in streaming: old covariance mass plus new terms
  // centered at the updated mean, divided by the pooled count. Approximate.
  as_written,
  // Exact merge via second moments; test reference only.
  pooled_exact,
};

ClassStats make_class_stats(int dim);

void update_class_stats(ClassStats& stats, const Eigen::MatrixXd& batch,
                        StatsUpdateMode mode = StatsUpdateMode::as_written);

struct Projection {
  Eigen::MatrixXd basis;   // D x d, orthonormal columns, descending eigenvalue order
  Eigen::VectorXd center;  // D
};

// Top-d eigenvectors of stats.cov with a fixed sign convention (the
// largest-magnitude entry of each column is positive). Requires d <= D.
Projection compute_vmp(const ClassStats& stats, int d);

Eigen::VectorXd project(const Projection& proj, const Eigen::VectorXd& h);
Eigen::MatrixXd project_rows(const Projection& proj, const Eigen::MatrixXd& features);

struct GaussianComponent {
  double weight = 0.0;
  Eigen::VectorXd mean;  // d
  Eigen::MatrixXd cov;   // d x d
};

struct Gmm {
  std::vector<GaussianComponent> components;
  int dim() const;
};

double gaussian_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                        const Eigen::MatrixXd& cov);

double mixture_log_density(const Gmm& gmm, const Eigen::VectorXd& xi);
double mixture_density(const Gmm& gmm, const Eigen::VectorXd& xi);

// Mean per-sample log-likelihood over the rows of xi.
double mixture_mean_log_likelihood(const Gmm& gmm, const Eigen::MatrixXd& xi);

// Means drawn as L distinct rows of xi, covariances identity, weights 1/L.
Gmm init_gmm(const Eigen::MatrixXd& xi, int components, Rng& rng);

// One E+M sweep with post-step ridge regularization. The rng feeds the
// component-collapse policy only (restart at a random data point).
void em_step(Gmm& gmm, const Eigen::MatrixXd& xi, Rng& rng);

// init_gmm then at most `iterations` em_steps, stopping early once the mean
// log-likelihood moves by less than 1e-4 relative.
Gmm fit_gmm(const Eigen::MatrixXd& xi, int components, int iterations, Rng& rng);

// Weights replaced from the batch responsibilities; means and covariances
// move by EMA with step beta toward the batch estimates (covariance centered
// at the updated mean, so beta=1 reproduces em_step exactly).
void streaming_em_step(Gmm& gmm, const Eigen::MatrixXd& batch, double beta, Rng& rng);

struct ClassModel {
  std::uint64_t count = 0;  // all observed samples, staged included
  ClassStats stats;
  Projection projection;
  Gmm gmm;
  bool initialized = false;
  std::vector<Eigen::VectorXd> staging;
  int effective_components = 0;  // may be reduced below the requested L
};

struct PGMRegistry {
  int feature_dim = 0;
  std::map<std::uint32_t, ClassModel> classes;

  std::uint64_t total_count() const;
  bool class_initialized(std::uint32_t label) const;
};

// Offline pipeline: per class (ascending label) stats -> projection -> GMM fit.
// The projection dimension is capped at min(d, D); the component count at the
// class sample count.
PGMRegistry fit_registry(const Eigen::MatrixXd& features, const std::vector<std::uint32_t>& labels,
                         int d, int components, int iterations, Rng& rng);

// Streaming update for one batch: counts advance; uninitialized classes stage
// until the pool reaches max(d+1, L) and then fit with one EM iteration;
// initialized classes take the incremental stats update, a projection
// refresh, and one streaming EM step.
void ingest_batch(PGMRegistry& registry, const Eigen::MatrixXd& features,
                  const std::vector<std::uint32_t>& labels, double beta, int d, int components,
                  Rng& rng);

double class_log_density(const PGMRegistry& registry, std::uint32_t label,
                         const Eigen::VectorXd& feature);

// log p(x|y) + log(n_y / total). Throws a state error for staged or unknown classes.
double joint_log_density(const PGMRegistry& registry, std::uint32_t label,
                         const Eigen::VectorXd& feature);

double registry_mean_log_likelihood(const PGMRegistry& registry, std::uint32_t label,
                                    const Eigen::MatrixXd& features);

}  // namespace pdac
