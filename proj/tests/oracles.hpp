#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here is deliberately naive: different algorithms, higher
// precision, no shared code with src/.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace oracle {

// Batch mean and divide-by-n covariance in extended precision.
inline void batch_stats(const Eigen::MatrixXd& batch, Eigen::VectorXd& mean_out,
                        Eigen::MatrixXd& cov_out) {
  const Eigen::Index n = batch.rows();
  const Eigen::Index d = batch.cols();
  std::vector<long double> mean(static_cast<size_t>(d), 0.0L);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      mean[static_cast<size_t>(j)] += static_cast<long double>(batch(i, j));
  for (auto& m : mean) m /= static_cast<long double>(n);
  std::vector<long double> cov(static_cast<size_t>(d * d), 0.0L);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index a = 0; a < d; ++a)
      for (Eigen::Index b = 0; b < d; ++b)
        cov[static_cast<size_t>(a * d + b)] +=
            (static_cast<long double>(batch(i, a)) - mean[static_cast<size_t>(a)]) *
            (static_cast<long double>(batch(i, b)) - mean[static_cast<size_t>(b)]);
  mean_out.resize(d);
  cov_out.resize(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    mean_out(a) = static_cast<double>(mean[static_cast<size_t>(a)]);
    for (Eigen::Index b = 0; b < d; ++b)
      cov_out(a, b) =
          static_cast<double>(cov[static_cast<size_t>(a * d + b)] / static_cast<long double>(n));
  }
}

// Largest principal angle between the column spaces of two orthonormal bases.
inline double principal_angle(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a.transpose() * b);
  const double smallest = svd.singularValues().minCoeff();
  return std::acos(std::min(1.0, std::max(-1.0, smallest)));
}

// Gaussian log density through an explicit inverse and determinant.
inline double gaussian_log_pdf_dense(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                                     const Eigen::MatrixXd& cov) {
  const Eigen::Index d = x.size();
  const Eigen::MatrixXd inv = cov.inverse();
  const double det = cov.determinant();
  const Eigen::VectorXd diff = x - mean;
  constexpr double kLog2Pi = 1.8378770664093454836;
  return -0.5 * (static_cast<double>(d) * kLog2Pi + std::log(det) + diff.dot(inv * diff));
}

// Mixture log density as a direct term-by-term sum in extended precision.
inline double mixture_log_density_dense(const std::vector<double>& weights,
                                        const std::vector<Eigen::VectorXd>& means,
                                        const std::vector<Eigen::MatrixXd>& covs,
                                        const Eigen::VectorXd& x) {
  long double total = 0.0L;
  for (size_t k = 0; k < weights.size(); ++k)
    total += static_cast<long double>(weights[k]) *
             std::exp(static_cast<long double>(gaussian_log_pdf_dense(x, means[k], covs[k])));
  return static_cast<double>(std::log(total));
}

// Region variance bound evaluated in extended precision.
inline long double bound_bracket(long double p, long double l, long double n, long double c0,
                                 long double c1, long double c2) {
  if (l == 0.0L) return 0.0L;
  const long double q = std::pow(1.0L - p, n);
  const long double ql = std::pow(1.0L - p / l, n);
  return (1.0L - q) * (c0 + q * c1) + 2.0L * l * c2 * (ql - q) * (1.0L - ql);
}

inline double bound_single(double p, double l, std::uint64_t n, double c0, double c1, double c2,
                           double gamma) {
  return static_cast<double>(bound_bracket(p, l, static_cast<long double>(n), c0, c1, c2) +
                             4.0L * static_cast<long double>(gamma) *
                                 static_cast<long double>(gamma));
}

// Normalized density weights in extended precision.
inline std::vector<double> density_weights_dense(const std::vector<double>& log_densities) {
  long double total = 0.0L;
  std::vector<long double> w(log_densities.size());
  for (size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(static_cast<long double>(log_densities[i]));
    total += w[i];
  }
  std::vector<double> out(w.size());
  for (size_t i = 0; i < w.size(); ++i) out[i] = static_cast<double>(w[i] / total);
  return out;
}

// Scratch directory cleaned up on destruction.
class TempDir {
 public:
  TempDir() {
    const auto base = std::filesystem::temp_directory_path();
    static std::atomic<unsigned> counter{0};
    const unsigned id = counter++;
    path_ = base / ("pdac_test_" + std::to_string(::getpid()) + "_" + std::to_string(id));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Raw feature-file bytes assembled by hand, independent of the library writer.
struct RawRecord {
  std::uint32_t task;
  std::uint32_t label;
  std::vector<float> feature;
};

inline void write_raw_feature_file(const std::string& path, std::uint32_t version,
                                   std::uint32_t dim, std::uint64_t count,
                                   const std::vector<RawRecord>& records,
                                   const char* magic = "PDACFEAT") {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(magic, 8);
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&dim), 4);
  out.write(reinterpret_cast<const char*>(&count), 8);
  for (const RawRecord& r : records) {
    out.write(reinterpret_cast<const char*>(&r.task), 4);
    out.write(reinterpret_cast<const char*>(&r.label), 4);
    out.write(reinterpret_cast<const char*>(r.feature.data()),
              static_cast<std::streamsize>(r.feature.size() * sizeof(float)));
  }
}

inline void truncate_file(const std::string& path, std::uintmax_t size) {
  std::filesystem::resize_file(path, size);
}

}  // namespace oracle
