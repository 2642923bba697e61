#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "pdac/rng.hpp"

namespace pdac {

// input -> hidden -> hidden -> classes, rectifier on the hidden layers.
struct MlpModel {
  Eigen::MatrixXd w1, w2, w3;      // fan_in x fan_out
  Eigen::RowVectorXd b1, b2, b3;
};

struct TrainConfig {
  int epochs = 50;
  int warmup_epochs = 10;
  double peak_lr = 0.1;
  int batch_size = 128;
  int hidden = 64;
};

MlpModel init_mlp(int inputs, int hidden, int classes, Rng& rng);

// Row-wise softmax of the network outputs.
Eigen::MatrixXd mlp_softmax(const MlpModel& model, const Eigen::MatrixXd& x);

// Mean softmax cross-entropy.
double mlp_loss(const MlpModel& model, const Eigen::MatrixXd& x,
                const std::vector<std::uint32_t>& y);

struct MlpGradients {
  Eigen::MatrixXd w1, w2, w3;
  Eigen::RowVectorXd b1, b2, b3;
};

MlpGradients mlp_gradients(const MlpModel& model, const Eigen::MatrixXd& x,
                           const std::vector<std::uint32_t>& y);

// Linear warmup from 0 to peak over warmup_epochs, then cosine decay to 0 at
// the final epoch. progress is measured in fractional epochs.
double learning_rate_at(const TrainConfig& config, double epoch_progress);

// Mini-batch SGD with a fresh shuffle each epoch.
MlpModel train_mlp(const Eigen::MatrixXd& x, const std::vector<std::uint32_t>& y, int classes,
                   const TrainConfig& config, Rng& rng);

}  // namespace pdac
