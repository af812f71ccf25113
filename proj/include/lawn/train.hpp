#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lawn/dataset.hpp"
#include "lawn/model.hpp"

namespace lawn::training {

enum class OptimizerKind { adam, sgd };

OptimizerKind parse_optimizer(const std::string& name);
std::string to_string(OptimizerKind k);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;  // batch norm needs >= 2
  OptimizerKind optimizer = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double momentum = 0.9;          // sgd
  double beta1 = 0.9;             // adam
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  uint64_t seed = 0;
  bool shuffle = true;
  bool target_standardize = false;
  std::optional<int> early_stop_patience = 15;  // nullopt disables

  void validate() const;
};

/// Per-parameter moment tensors plus the shared step counter. Adam keeps
/// (m, v); SGD keeps velocity.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::adam;
  std::map<std::string, nn::Tensor> m, v;        // adam
  std::map<std::string, nn::Tensor> velocity;    // sgd
  int64_t step = 0;
};

OptimizerState init_optimizer_state(OptimizerKind kind, const nn::Parameters& params);

/// Bias-corrected Adam update, applied in deterministic key order.
void adam_step(nn::Parameters& params, const nn::Gradients& grads, OptimizerState& state,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

/// velocity = momentum * velocity + grad; param -= lr * velocity.
void sgd_step(nn::Parameters& params, const nn::Gradients& grads, OptimizerState& state,
              double lr, double momentum = 0.9);

struct EpochStats {
  int epoch = 0;
  double train_mse = 0.0;  // raw m^2 units even when targets are standardized
  double val_mse = 0.0;
  double wall_seconds = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

/// Where training images come from and how they are preprocessed.
struct DataSource {
  std::filesystem::path root;
  imaging::PreprocessMethod method = imaging::PreprocessMethod::none;
  imaging::PreprocessParams preprocess;
};

struct TrainResult {
  nn::Parameters params;
  OptimizerState opt;
  TrainHistory history;
  double target_mean = 0.0;  // identity transform unless standardized
  double target_std = 1.0;
  bool standardized = false;
};

struct DivergedError : std::runtime_error {
  int epoch, batch;
  DivergedError(int e, int b)
      : std::runtime_error("training diverged (non-finite loss) at epoch " +
                           std::to_string(e) + ", batch " + std::to_string(b)),
        epoch(e), batch(b) {}
};

/// Deterministic epoch loop: seeded shuffle, train-mode forward, MSE + L2,
/// backward, optimizer step; per-epoch validation MSE in infer mode. With
/// early stopping the returned parameters are the best-validation snapshot.
/// Train-mode batches smaller than 2 are dropped.
TrainResult train(const nn::ModelSpec& spec, const data::Manifest& train_manifest,
                  const data::Manifest& val_manifest, const TrainConfig& cfg,
                  const DataSource& source);

/// In-memory dataset cache: preprocessed 8-bit images plus raw targets.
struct LoadedDataset {
  std::vector<imaging::Image> images;
  std::vector<double> targets;
};

LoadedDataset load_dataset(const data::Manifest& manifest, const DataSource& source);

/// Infer-mode predictions over the cached dataset, in record order,
/// de-standardized with (mean, std).
std::vector<double> predict(const nn::ModelSpec& spec, nn::Parameters& params,
                            const LoadedDataset& data, int batch_size,
                            double target_mean = 0.0, double target_std = 1.0);

}  // namespace lawn::training
