#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mfa/autodiff.hpp"
#include "mfa/dataset.hpp"
#include "mfa/metrics.hpp"
#include "mfa/network.hpp"

namespace mfa {

/// lambda * soft_dice + (1 - lambda) * mean BCE-with-logits, summed over the whole batch.
/// soft_dice = 1 - (2 sum(p g) + 1) / (sum(p) + sum(g) + 1), p = sigmoid(logits).
template <typename T>
Var<T> segmentation_loss(Var<T> logits, const Tensor<T>& gt, double lambda);

template <typename T>
double segmentation_loss_value(const Tensor<T>& logits, const Tensor<T>& gt, double lambda);

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int batch_size = 4;
  int max_steps = 300;
  std::uint64_t seed = 0;
  double loss_mix = 0.5;
  int eval_every = 50;  // 0 evaluates only after the last step

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

template <typename T>
struct OptimizerState {
  std::vector<Tensor<T>> m;  // aligned with ParamStore::entries()
  std::vector<Tensor<T>> v;
  std::int64_t step = 0;

  static OptimizerState zeros(const ParamStore<T>& params);
};

/// Bias-corrected Adam update from the stored gradients, which are zeroed afterwards.
template <typename T>
void adam_step(ParamStore<T>& params, OptimizerState<T>& state, const TrainConfig& cfg);

struct CurvePoint {
  int step = 0;
  double loss = 0;
  std::optional<double> val_dice;
};

std::string curve_csv(const std::vector<CurvePoint>& curve);

struct TrainResult {
  std::vector<CurvePoint> curve;
  double final_val_dice = 0;  // mean Dice on the eval set after the last step
};

using ProgressFn = std::function<void(const CurvePoint&)>;

/// Packs samples [first, first + count) of `order` into [count, 1, H, W].
Tensor<float> stack_images(const std::vector<Sample>& samples, const std::vector<std::size_t>& order);
Tensor<float> stack_masks(const std::vector<Sample>& samples, const std::vector<std::size_t>& order);

std::vector<SegmentationMask> predict(const Network<float>& net, const std::vector<Sample>& samples,
                                      std::size_t batch = 8);
MetricsReport evaluate(const Network<float>& net, const std::vector<Sample>& samples);

/// Deterministic Adam training. Batches follow a seeded shuffle stream that reshuffles whenever it runs dry.
/// `eval_set` is scored every cfg.eval_every steps and after the last step.
TrainResult train(Network<float>& net, const std::vector<Sample>& train_set, const std::vector<Sample>& eval_set,
                  const TrainConfig& cfg, const ProgressFn& progress = {});

struct AblationRow {
  Variant variant = Variant::baseline;
  double dice = 0, jaccard = 0, pixel_accuracy = 0;
  double final_loss = 0;
  std::size_t num_params = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::uint64_t seed = 0;
  int steps = 0;
  std::size_t train_cases = 0, val_cases = 0;

  std::string to_json() const;
};

/// First 80% of samples (by index) train, the rest validate. All four variants share seed and non-attention init.
AblationReport run_ablation(const std::vector<Sample>& data, const NetworkConfig& net_cfg, const TrainConfig& cfg,
                            const std::function<void(Variant, const CurvePoint&)>& progress = {});

}  // namespace mfa
