#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "recallforge/features.hpp"

namespace recallforge {

struct TrainConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t max_epochs = 30;
  std::size_t patience = 3;
  std::size_t train_batch = 256;
  std::size_t infer_batch = 8192;
  std::uint64_t seed = 0;
};

// 16-128-64-1 fully connected net; each hidden layer is FC -> BatchNorm ->
// ReLU -> Dropout, the output is a single sigmoid unit. Parameters are held
// as doubles; finalize() rounds them through f32 so a saved model reloads
// bit-identically.
struct RankerModel {
  static constexpr std::size_t kIn = 16;
  static constexpr std::size_t kH1 = 128;
  static constexpr std::size_t kH2 = 64;

  std::vector<double> w1, b1, gamma1, beta1, run_mean1, run_var1;
  std::vector<double> w2, b2, gamma2, beta2, run_mean2, run_var2;
  std::vector<double> w3, b3;
  double dropout1 = 0.30;
  double dropout2 = 0.50;
  bool train_mode = false;

  static RankerModel zeros();

  bool operator==(const RankerModel&) const = default;
};

struct TrainLog {
  std::vector<double> train_losses;
  std::vector<double> val_losses;
  std::size_t best_epoch = 0;    // 1-based epoch of the returned snapshot
  std::size_t epochs_run = 0;
};

// Adam on logit BCE with a deterministic 80/20 validation split (hashed
// example index) for early stopping; returns the best-validation snapshot,
// finalized to f32 precision and switched to eval mode. Single-threaded.
RankerModel train(const FeatureMatrix& features, const std::vector<std::uint8_t>& labels,
                  const TrainConfig& cfg, TrainLog* log = nullptr);

// Eval-mode scores in (0,1), parallel over row chunks; output order follows
// input order and is invariant to thread count and batch partitioning.
std::vector<double> predict(const RankerModel& model, const FeatureMatrix& features,
                            unsigned threads = 1);

// Max relative error between analytic and central finite-difference gradients
// over every parameter tensor (dropout off, batch-norm on frozen statistics),
// on a seeded random batch of 32 examples.
double gradient_check(std::uint64_t seed);

// Binary RFNN model file: parameter tensors plus the feature scaler so a
// scorer needs only raw features and this one file.
void write_model(const std::string& path, const RankerModel& model, const FeatureScaler& scaler);
void read_model(const std::string& path, RankerModel* model, FeatureScaler* scaler);

}  // namespace recallforge
