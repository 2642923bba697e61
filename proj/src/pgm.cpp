#include "pdac/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "pdac/errors.hpp"
#include "pdac/stats.hpp"

namespace pdac {

namespace {

constexpr double kCollapseThreshold = 1e-12;
constexpr double kRidgeScale = 1e-6;
constexpr double kRidgeFloor = 1e-10;
constexpr double kFitTolerance = 1e-4;

void apply_ridge(Eigen::MatrixXd& cov) {
  const double d = static_cast<double>(cov.rows());
  const double ridge = std::max(kRidgeScale * cov.trace() / d, kRidgeFloor);
  cov.diagonal().array() += ridge;
}

// Log of alpha_l * N(xi_i | mu_l, Sigma_l) for every row/component pair.
Eigen::MatrixXd weighted_log_pdf(const Gmm& gmm, const Eigen::MatrixXd& xi) {
  const auto n = xi.rows();
  const auto L = static_cast<Eigen::Index>(gmm.components.size());
  Eigen::MatrixXd logs(n, L);
  for (Eigen::Index l = 0; l < L; ++l) {
    const GaussianComponent& c = gmm.components[l];
    const double lw = c.weight > 0.0 ? std::log(c.weight)
                                     : -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      logs(i, l) = lw + gaussian_log_pdf(xi.row(i).transpose(), c.mean, c.cov);
    }
  }
  return logs;
}

Eigen::VectorXd row_log_sum_exp(const Eigen::MatrixXd& logs) {
  Eigen::VectorXd out(logs.rows());
  for (Eigen::Index i = 0; i < logs.rows(); ++i) {
    const double m = logs.row(i).maxCoeff();
    if (!std::isfinite(m)) {
      out(i) = m;
      continue;
    }
    out(i) = m + std::log((logs.row(i).array() - m).exp().sum());
  }
  return out;
}

struct BatchEstimates {
  Eigen::VectorXd totals;        // per-component responsibility mass
  Eigen::MatrixXd means;         // L x d, valid where totals >= threshold
  std::vector<bool> collapsed;
  Eigen::MatrixXd resp;          // n x L
};

BatchEstimates responsibilities(const Gmm& gmm, const Eigen::MatrixXd& xi) {
  const Eigen::MatrixXd logs = weighted_log_pdf(gmm, xi);
  const Eigen::VectorXd lse = row_log_sum_exp(logs);
  BatchEstimates est;
  est.resp = (logs.colwise() - lse).array().exp().matrix();
  const auto L = logs.cols();
  est.totals = est.resp.colwise().sum().transpose();
  est.means.resize(L, xi.cols());
  est.collapsed.assign(static_cast<std::size_t>(L), false);
  for (Eigen::Index l = 0; l < L; ++l) {
    if (est.totals(l) < kCollapseThreshold) {
      est.collapsed[static_cast<std::size_t>(l)] = true;
      est.means.row(l).setZero();
    } else {
      est.means.row(l) = (est.resp.col(l).transpose() * xi) / est.totals(l);
    }
  }
  return est;
}

Eigen::MatrixXd weighted_scatter(const Eigen::MatrixXd& xi, const Eigen::VectorXd& resp,
                                 const Eigen::RowVectorXd& center) {
  const Eigen::MatrixXd centered = xi.rowwise() - center;
  return centered.transpose() * (centered.array().colwise() * resp.array()).matrix();
}

void reset_collapsed(GaussianComponent& comp, const Eigen::MatrixXd& xi, std::size_t L, Rng& rng) {
  std::uniform_int_distribution<Eigen::Index> pick(0, xi.rows() - 1);
  comp.mean = xi.row(pick(rng)).transpose();
  comp.cov = Eigen::MatrixXd::Identity(xi.cols(), xi.cols());
  comp.weight = 1.0 / static_cast<double>(L);
}

void renormalize_weights(Gmm& gmm) {
  double total = 0.0;
  for (const auto& c : gmm.components) total += c.weight;
  if (total <= 0.0) fail(ErrorKind::numeric, "mixture weights degenerate");
  for (auto& c : gmm.components) c.weight /= total;
}

void check_batch(const Gmm& gmm, const Eigen::MatrixXd& xi) {
  if (gmm.components.empty()) fail(ErrorKind::state, "mixture has no components");
  if (xi.rows() < 1) fail(ErrorKind::invalid_argument, "empty sample set");
  if (xi.cols() != gmm.dim()) fail(ErrorKind::invalid_argument, "sample dimension mismatch");
}

}  // namespace

int Gmm::dim() const {
  return components.empty() ? 0 : static_cast<int>(components.front().mean.size());
}

ClassStats make_class_stats(int dim) {
  if (dim < 1) fail(ErrorKind::invalid_argument, "feature dimension must be positive");
  ClassStats s;
  s.mean = Eigen::VectorXd::Zero(dim);
  s.cov = Eigen::MatrixXd::Zero(dim, dim);
  return s;
}

void update_class_stats(ClassStats& stats, const Eigen::MatrixXd& batch, StatsUpdateMode mode) {
  if (batch.cols() != stats.mean.size())
    fail(ErrorKind::invalid_argument, "feature dimension mismatch in stats update");
  const auto b = batch.rows();
  if (b == 0) return;
  const double n0 = static_cast<double>(stats.count);
  const double n1 = n0 + static_cast<double>(b);
  const Eigen::VectorXd batch_sum = batch.colwise().sum().transpose();
  const Eigen::VectorXd new_mean = (stats.mean * n0 + batch_sum) / n1;
  if (mode == StatsUpdateMode::as_written) {
    const Eigen::MatrixXd centered = batch.rowwise() - new_mean.transpose();
    stats.cov = (stats.cov * n0 + centered.transpose() * centered) / n1;
  } else {
    const Eigen::VectorXd batch_mean = batch_sum / static_cast<double>(b);
    const Eigen::MatrixXd centered = batch.rowwise() - batch_mean.transpose();
    const Eigen::VectorXd delta = batch_mean - stats.mean;
    stats.cov = (stats.cov * n0 + centered.transpose() * centered +
                 (n0 * static_cast<double>(b) / n1) * delta * delta.transpose()) /
                n1;
  }
  stats.mean = new_mean;
  stats.count += static_cast<std::uint64_t>(b);
}

Projection compute_vmp(const ClassStats& stats, int d) {
  const auto D = stats.mean.size();
  if (stats.count < 1) fail(ErrorKind::invalid_argument, "projection requires observed samples");
  if (d < 1 || d > D) fail(ErrorKind::invalid_argument, "projection dimension out of range");
  const Eigen::MatrixXd sym = 0.5 * (stats.cov + stats.cov.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success) fail(ErrorKind::numeric, "eigendecomposition failed");
  Projection proj;
  proj.center = stats.mean;
  proj.basis.resize(D, d);
  // Eigen orders eigenvalues ascending; take the top d, descending.
  for (int j = 0; j < d; ++j) {
    Eigen::VectorXd col = solver.eigenvectors().col(D - 1 - j);
    Eigen::Index peak;
    col.cwiseAbs().maxCoeff(&peak);
    if (col(peak) < 0.0) col = -col;
    proj.basis.col(j) = col;
  }
  return proj;
}

Eigen::VectorXd project(const Projection& proj, const Eigen::VectorXd& h) {
  if (h.size() != proj.center.size())
    fail(ErrorKind::invalid_argument, "feature dimension mismatch in projection");
  return proj.basis.transpose() * (h - proj.center);
}

Eigen::MatrixXd project_rows(const Projection& proj, const Eigen::MatrixXd& features) {
  if (features.cols() != proj.center.size())
    fail(ErrorKind::invalid_argument, "feature dimension mismatch in projection");
  return (features.rowwise() - proj.center.transpose()) * proj.basis;
}

double gaussian_log_pdf(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                        const Eigen::MatrixXd& cov) {
  const auto d = x.size();
  if (mean.size() != d || cov.rows() != d || cov.cols() != d)
    fail(ErrorKind::invalid_argument, "gaussian dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) fail(ErrorKind::numeric, "covariance not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  double log_det = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) log_det += std::log(l(i, i));
  log_det *= 2.0;
  const Eigen::VectorXd solved = l.triangularView<Eigen::Lower>().solve(x - mean);
  constexpr double kLog2Pi = 1.8378770664093454836;
  return -0.5 * (static_cast<double>(d) * kLog2Pi + log_det + solved.squaredNorm());
}

double mixture_log_density(const Gmm& gmm, const Eigen::VectorXd& xi) {
  if (gmm.components.empty()) fail(ErrorKind::state, "mixture has no components");
  std::vector<double> logs;
  logs.reserve(gmm.components.size());
  for (const auto& c : gmm.components) {
    const double lw = c.weight > 0.0 ? std::log(c.weight)
                                     : -std::numeric_limits<double>::infinity();
    logs.push_back(lw + gaussian_log_pdf(xi, c.mean, c.cov));
  }
  return log_sum_exp(logs);
}

double mixture_density(const Gmm& gmm, const Eigen::VectorXd& xi) {
  return std::exp(mixture_log_density(gmm, xi));
}

double mixture_mean_log_likelihood(const Gmm& gmm, const Eigen::MatrixXd& xi) {
  check_batch(gmm, xi);
  double total = 0.0;
  for (Eigen::Index i = 0; i < xi.rows(); ++i)
    total += mixture_log_density(gmm, xi.row(i).transpose());
  return total / static_cast<double>(xi.rows());
}

Gmm init_gmm(const Eigen::MatrixXd& xi, int components, Rng& rng) {
  if (components < 1) fail(ErrorKind::invalid_argument, "component count must be positive");
  const auto n = xi.rows();
  if (n < components)
    fail(ErrorKind::data, "insufficient data: " + std::to_string(n) + " samples for " +
                              std::to_string(components) + " components");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Gmm gmm;
  gmm.components.resize(static_cast<std::size_t>(components));
  for (int l = 0; l < components; ++l) {
    std::uniform_int_distribution<Eigen::Index> pick(l, n - 1);
    std::swap(idx[static_cast<std::size_t>(l)], idx[static_cast<std::size_t>(pick(rng))]);
    auto& comp = gmm.components[static_cast<std::size_t>(l)];
    comp.mean = xi.row(idx[static_cast<std::size_t>(l)]).transpose();
    comp.cov = Eigen::MatrixXd::Identity(xi.cols(), xi.cols());
    comp.weight = 1.0 / static_cast<double>(components);
  }
  return gmm;
}

void em_step(Gmm& gmm, const Eigen::MatrixXd& xi, Rng& rng) {
  check_batch(gmm, xi);
  const double n = static_cast<double>(xi.rows());
  const BatchEstimates est = responsibilities(gmm, xi);
  const std::size_t L = gmm.components.size();
  for (std::size_t l = 0; l < L; ++l) {
    auto& comp = gmm.components[l];
    if (est.collapsed[l]) {
      reset_collapsed(comp, xi, L, rng);
    } else {
      const auto li = static_cast<Eigen::Index>(l);
      comp.weight = est.totals(li) / n;
      comp.mean = est.means.row(li).transpose();
      comp.cov = weighted_scatter(xi, est.resp.col(li), est.means.row(li)) / est.totals(li);
    }
    apply_ridge(comp.cov);
  }
  renormalize_weights(gmm);
}

Gmm fit_gmm(const Eigen::MatrixXd& xi, int components, int iterations, Rng& rng) {
  if (iterations < 0) fail(ErrorKind::invalid_argument, "iteration count must be nonnegative");
  Gmm gmm = init_gmm(xi, components, rng);
  if (iterations == 0) return gmm;
  double prev = mixture_mean_log_likelihood(gmm, xi);
  for (int g = 0; g < iterations; ++g) {
    em_step(gmm, xi, rng);
    const double cur = mixture_mean_log_likelihood(gmm, xi);
    if (std::fabs(cur - prev) <= kFitTolerance * std::max(1.0, std::fabs(prev))) break;
    prev = cur;
  }
  return gmm;
}

void streaming_em_step(Gmm& gmm, const Eigen::MatrixXd& batch, double beta, Rng& rng) {
  check_batch(gmm, batch);
  if (!(beta > 0.0 && beta <= 1.0))
    fail(ErrorKind::invalid_argument, "EMA step size must lie in (0, 1]");
  const double n = static_cast<double>(batch.rows());
  const BatchEstimates est = responsibilities(gmm, batch);
  const std::size_t L = gmm.components.size();
  for (std::size_t l = 0; l < L; ++l) {
    auto& comp = gmm.components[l];
    if (est.collapsed[l]) {
      reset_collapsed(comp, batch, L, rng);
    } else {
      const auto li = static_cast<Eigen::Index>(l);
      comp.weight = est.totals(li) / n;
      const Eigen::VectorXd batch_mean = est.means.row(li).transpose();
      comp.mean = (1.0 - beta) * comp.mean + beta * batch_mean;
      // Batch covariance is centered at the updated mean, so beta = 1
      // coincides with the batch M-step.
      const Eigen::MatrixXd batch_cov =
          weighted_scatter(batch, est.resp.col(li), comp.mean.transpose()) / est.totals(li);
      comp.cov = (1.0 - beta) * comp.cov + beta * batch_cov;
    }
    apply_ridge(comp.cov);
  }
  renormalize_weights(gmm);
}

std::uint64_t PGMRegistry::total_count() const {
  std::uint64_t total = 0;
  for (const auto& [label, model] : classes) total += model.count;
  return total;
}

bool PGMRegistry::class_initialized(std::uint32_t label) const {
  const auto it = classes.find(label);
  return it != classes.end() && it->second.initialized;
}

namespace {

std::map<std::uint32_t, std::vector<Eigen::Index>> group_by_label(
    const std::vector<std::uint32_t>& labels) {
  std::map<std::uint32_t, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i)
    groups[labels[i]].push_back(static_cast<Eigen::Index>(i));
  return groups;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& features,
                            const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
  return out;
}

void check_dataset(const Eigen::MatrixXd& features, const std::vector<std::uint32_t>& labels) {
  if (features.rows() != static_cast<Eigen::Index>(labels.size()))
    fail(ErrorKind::invalid_argument, "feature/label count mismatch");
  if (features.cols() < 1) fail(ErrorKind::invalid_argument, "feature dimension must be positive");
}

}  // namespace

PGMRegistry fit_registry(const Eigen::MatrixXd& features, const std::vector<std::uint32_t>& labels,
                         int d, int components, int iterations, Rng& rng) {
  check_dataset(features, labels);
  if (features.rows() < 1) fail(ErrorKind::invalid_argument, "empty dataset");
  if (d < 1 || components < 1) fail(ErrorKind::invalid_argument, "d and L must be positive");
  PGMRegistry registry;
  registry.feature_dim = static_cast<int>(features.cols());
  const int d_eff = std::min<int>(d, registry.feature_dim);
  for (const auto& [label, rows] : group_by_label(labels)) {
    const Eigen::MatrixXd pool = gather_rows(features, rows);
    ClassModel model;
    model.stats = make_class_stats(registry.feature_dim);
    update_class_stats(model.stats, pool);
    model.projection = compute_vmp(model.stats, d_eff);
    const Eigen::MatrixXd xi = project_rows(model.projection, pool);
    const int l_eff = std::min<int>(components, static_cast<int>(pool.rows()));
    model.gmm = fit_gmm(xi, l_eff, iterations, rng);
    model.effective_components = l_eff;
    model.count = static_cast<std::uint64_t>(pool.rows());
    model.initialized = true;
    registry.classes.emplace(label, std::move(model));
  }
  return registry;
}

void ingest_batch(PGMRegistry& registry, const Eigen::MatrixXd& features,
                  const std::vector<std::uint32_t>& labels, double beta, int d, int components,
                  Rng& rng) {
  check_dataset(features, labels);
  if (features.rows() < 1) return;
  if (d < 1 || components < 1) fail(ErrorKind::invalid_argument, "d and L must be positive");
  if (!(beta > 0.0 && beta <= 1.0))
    fail(ErrorKind::invalid_argument, "EMA step size must lie in (0, 1]");
  if (registry.feature_dim == 0) registry.feature_dim = static_cast<int>(features.cols());
  if (registry.feature_dim != static_cast<int>(features.cols()))
    fail(ErrorKind::invalid_argument, "feature dimension mismatch with registry");
  const int d_eff = std::min<int>(d, registry.feature_dim);
  const std::size_t staging_threshold =
      static_cast<std::size_t>(std::max(d + 1, components));
  for (const auto& [label, rows] : group_by_label(labels)) {
    auto [it, inserted] = registry.classes.try_emplace(label);
    ClassModel& model = it->second;
    if (inserted) model.stats = make_class_stats(registry.feature_dim);
    model.count += rows.size();
    if (!model.initialized) {
      for (const Eigen::Index r : rows) model.staging.push_back(features.row(r).transpose());
      if (model.staging.size() >= staging_threshold) {
        Eigen::MatrixXd pool(static_cast<Eigen::Index>(model.staging.size()),
                             registry.feature_dim);
        for (std::size_t i = 0; i < model.staging.size(); ++i)
          pool.row(static_cast<Eigen::Index>(i)) = model.staging[i].transpose();
        update_class_stats(model.stats, pool);
        model.projection = compute_vmp(model.stats, d_eff);
        const Eigen::MatrixXd xi = project_rows(model.projection, pool);
        model.gmm = fit_gmm(xi, components, 1, rng);
        model.effective_components = components;
        model.staging.clear();
        model.staging.shrink_to_fit();
        model.initialized = true;
      }
    } else {
      const Eigen::MatrixXd pool = gather_rows(features, rows);
      update_class_stats(model.stats, pool);
      model.projection = compute_vmp(model.stats, d_eff);
      const Eigen::MatrixXd xi = project_rows(model.projection, pool);
      streaming_em_step(model.gmm, xi, beta, rng);
    }
  }
}

namespace {

const ClassModel& initialized_model(const PGMRegistry& registry, std::uint32_t label) {
  const auto it = registry.classes.find(label);
  if (it == registry.classes.end())
    fail(ErrorKind::state, "unknown class label " + std::to_string(label));
  if (!it->second.initialized)
    fail(ErrorKind::state, "class " + std::to_string(label) + " not initialized");
  return it->second;
}

}  // namespace

double class_log_density(const PGMRegistry& registry, std::uint32_t label,
                         const Eigen::VectorXd& feature) {
  const ClassModel& model = initialized_model(registry, label);
  return mixture_log_density(model.gmm, project(model.projection, feature));
}

double joint_log_density(const PGMRegistry& registry, std::uint32_t label,
                         const Eigen::VectorXd& feature) {
  const ClassModel& model = initialized_model(registry, label);
  const std::uint64_t total = registry.total_count();
  const double log_prior = std::log(static_cast<double>(model.count)) -
                           std::log(static_cast<double>(total));
  return mixture_log_density(model.gmm, project(model.projection, feature)) + log_prior;
}

double registry_mean_log_likelihood(const PGMRegistry& registry, std::uint32_t label,
                                    const Eigen::MatrixXd& features) {
  const ClassModel& model = initialized_model(registry, label);
  return mixture_mean_log_likelihood(model.gmm, project_rows(model.projection, features));
}

}  // namespace pdac
