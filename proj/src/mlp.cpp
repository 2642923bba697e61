#include "pdac/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pdac/errors.hpp"

namespace pdac {

namespace {

Eigen::MatrixXd he_normal(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(rows)));
  Eigen::MatrixXd w(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) w(i, j) = dist(rng);
  return w;
}

struct ForwardPass {
  Eigen::MatrixXd z1, a1, z2, a2, logits, probs;
};

ForwardPass forward(const MlpModel& model, const Eigen::MatrixXd& x) {
  ForwardPass f;
  f.z1 = (x * model.w1).rowwise() + model.b1;
  f.a1 = f.z1.cwiseMax(0.0);
  f.z2 = (f.a1 * model.w2).rowwise() + model.b2;
  f.a2 = f.z2.cwiseMax(0.0);
  f.logits = (f.a2 * model.w3).rowwise() + model.b3;
  f.probs.resizeLike(f.logits);
  for (Eigen::Index i = 0; i < f.logits.rows(); ++i) {
    const double m = f.logits.row(i).maxCoeff();
    const Eigen::ArrayXd e = (f.logits.row(i).array() - m).exp();
    f.probs.row(i) = (e / e.sum()).matrix();
  }
  return f;
}

void check_labels(const Eigen::MatrixXd& x, const std::vector<std::uint32_t>& y,
                  Eigen::Index classes) {
  if (x.rows() != static_cast<Eigen::Index>(y.size()))
    fail(ErrorKind::invalid_argument, "feature/label count mismatch");
  for (std::uint32_t label : y)
    if (static_cast<Eigen::Index>(label) >= classes)
      fail(ErrorKind::invalid_argument, "label outside class range");
}

}  // namespace

MlpModel init_mlp(int inputs, int hidden, int classes, Rng& rng) {
  if (inputs < 1 || hidden < 1 || classes < 2)
    fail(ErrorKind::invalid_argument, "invalid network shape");
  MlpModel m;
  m.w1 = he_normal(inputs, hidden, rng);
  m.w2 = he_normal(hidden, hidden, rng);
  m.w3 = he_normal(hidden, classes, rng);
  m.b1 = Eigen::RowVectorXd::Zero(hidden);
  m.b2 = Eigen::RowVectorXd::Zero(hidden);
  m.b3 = Eigen::RowVectorXd::Zero(classes);
  return m;
}

Eigen::MatrixXd mlp_softmax(const MlpModel& model, const Eigen::MatrixXd& x) {
  return forward(model, x).probs;
}

double mlp_loss(const MlpModel& model, const Eigen::MatrixXd& x,
                const std::vector<std::uint32_t>& y) {
  check_labels(x, y, model.w3.cols());
  const ForwardPass f = forward(model, x);
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double p = f.probs(i, static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)]));
    total -= std::log(std::max(p, 1e-300));
  }
  return total / static_cast<double>(x.rows());
}

MlpGradients mlp_gradients(const MlpModel& model, const Eigen::MatrixXd& x,
                           const std::vector<std::uint32_t>& y) {
  check_labels(x, y, model.w3.cols());
  const ForwardPass f = forward(model, x);
  const double n = static_cast<double>(x.rows());
  Eigen::MatrixXd d3 = f.probs;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    d3(i, static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)])) -= 1.0;
  d3 /= n;
  MlpGradients g;
  g.w3 = f.a2.transpose() * d3;
  g.b3 = d3.colwise().sum();
  Eigen::MatrixXd d2 =
      (d3 * model.w3.transpose()).cwiseProduct((f.z2.array() > 0.0).cast<double>().matrix());
  g.w2 = f.a1.transpose() * d2;
  g.b2 = d2.colwise().sum();
  Eigen::MatrixXd d1 =
      (d2 * model.w2.transpose()).cwiseProduct((f.z1.array() > 0.0).cast<double>().matrix());
  g.w1 = x.transpose() * d1;
  g.b1 = d1.colwise().sum();
  return g;
}

double learning_rate_at(const TrainConfig& config, double epoch_progress) {
  if (config.epochs < config.warmup_epochs || config.warmup_epochs < 0)
    fail(ErrorKind::invalid_argument, "epochs must cover the warmup");
  const double warmup = static_cast<double>(config.warmup_epochs);
  if (epoch_progress <= 0.0) return config.warmup_epochs > 0 ? 0.0 : config.peak_lr;
  if (epoch_progress < warmup) return config.peak_lr * epoch_progress / warmup;
  const double span = static_cast<double>(config.epochs) - warmup;
  if (span <= 0.0 || epoch_progress >= static_cast<double>(config.epochs)) return 0.0;
  const double t = (epoch_progress - warmup) / span;
  constexpr double kPi = 3.14159265358979323846;
  return config.peak_lr * 0.5 * (1.0 + std::cos(kPi * t));
}

MlpModel train_mlp(const Eigen::MatrixXd& x, const std::vector<std::uint32_t>& y, int classes,
                   const TrainConfig& config, Rng& rng) {
  if (x.rows() < 1) fail(ErrorKind::invalid_argument, "empty training set");
  if (config.batch_size < 1 || config.epochs < 1)
    fail(ErrorKind::invalid_argument, "invalid training configuration");
  check_labels(x, y, classes);
  MlpModel model = init_mlp(static_cast<int>(x.cols()), config.hidden, classes, rng);
  const std::size_t n = static_cast<std::size_t>(x.rows());
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n);
  const std::size_t steps = (n + batch - 1) / batch;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Eigen::MatrixXd xb;
  std::vector<std::uint32_t> yb;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t step = 0; step < steps; ++step) {
      const std::size_t begin = step * batch;
      const std::size_t size = std::min(batch, n - begin);
      xb.resize(static_cast<Eigen::Index>(size), x.cols());
      yb.resize(size);
      for (std::size_t i = 0; i < size; ++i) {
        xb.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(order[begin + i]));
        yb[i] = y[order[begin + i]];
      }
      const double progress = static_cast<double>(epoch) +
                              static_cast<double>(step) / static_cast<double>(steps);
      const double lr = learning_rate_at(config, progress);
      if (lr == 0.0) continue;
      const MlpGradients g = mlp_gradients(model, xb, yb);
      model.w1 -= lr * g.w1;
      model.w2 -= lr * g.w2;
      model.w3 -= lr * g.w3;
      model.b1 -= lr * g.b1;
      model.b2 -= lr * g.b2;
      model.b3 -= lr * g.b3;
    }
  }
  return model;
}

}  // namespace pdac
