#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "pedflow/nn/model.hpp"

namespace pedflow::nn {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 30;
  int batch_size = 32;
  LossWeights weights;
  std::uint64_t seed = 0;
  double plateau_factor = 0.5;
  int plateau_patience = 3;
  double plateau_threshold = 1e-4;  // relative improvement that resets patience
  double validation_fraction = 0.1;
  int threads = 1;
  /// Probability that a training sample is presented with only its current
  /// step visible (see features::drop_history). Validation is unaffected.
  double history_dropout = 0.0;

  /// Throws InvalidConfig.
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  double learning_rate = 0.0;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded shuffle; the first round(fraction * n) indices validate. With fewer
/// than two samples, or a zero fraction, the validation set is empty.
Split split_indices(std::size_t n, double validation_fraction, std::uint64_t seed);

struct TrainResult {
  ModelParams params;  // parameters at the best validation loss
  std::vector<EpochStats> curve;
  int best_epoch = 0;
  Split split;
};

/// Progress callback, called after every epoch.
using EpochCallback = std::function<void(const EpochStats&)>;

/// Throws EmptyDataset or NonFiniteLoss. When `split` is not given one is
/// drawn from the config seed.
TrainResult train(const std::vector<features::Sample>& samples, const ModelParams& initial, const TrainConfig& config,
                  std::optional<Split> split = std::nullopt, const EpochCallback& on_epoch = {});

/// Mean loss over the given sample indices (all samples when empty).
double mean_loss(const ModelParams& params, const std::vector<features::Sample>& samples,
                 std::span<const std::size_t> indices, const LossWeights& w);

struct Evaluation {
  double position_error = 0.0;  // mean |delta_p - target| (m)
  double edge_accuracy = 0.0;
  std::size_t count = 0;
};

/// Throws EmptyDataset.
Evaluation evaluate(const ModelParams& params, const std::vector<features::Sample>& samples,
                    std::span<const std::size_t> indices = {});

}  // namespace pedflow::nn
