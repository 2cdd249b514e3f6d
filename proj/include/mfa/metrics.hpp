#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfa/tensor.hpp"

namespace mfa {

/// Binary label grid, row-major, values in {0, 1}.
struct SegmentationMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> labels;

  SegmentationMask() = default;
  SegmentationMask(int w, int h) : width(w), height(h), labels(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
  void validate() const;

  bool operator==(const SegmentationMask&) const = default;
};

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::uint64_t total() const { return tp + fp + fn + tn; }
};

ConfusionCounts confusion(const SegmentationMask& pred, const SegmentationMask& gt);

/// 2tp / (2tp + fp + fn); 1 when both masks are empty.
double dice(const ConfusionCounts& c);
/// tp / (tp + fp + fn); 1 when both masks are empty.
double jaccard(const ConfusionCounts& c);
/// (tp + tn) / total.
double pixel_accuracy(const ConfusionCounts& c);

/// Mask = 1 where sigmoid(logit) > t, strictly. One mask per batch entry of [N, 1, H, W].
template <typename T>
std::vector<SegmentationMask> threshold_logits(const Tensor<T>& logits, double t = 0.5);

struct CaseMetrics {
  std::string id;
  double dice = 0, jaccard = 0, pixel_accuracy = 0;
};

struct MetricsReport {
  std::vector<CaseMetrics> cases;
  /// Unweighted mean over cases.
  CaseMetrics mean;

  /// {"cases":[{"id","dice","jaccard","pixel_accuracy"}...],"mean":{...}}
  std::string to_json() const;
};

CaseMetrics evaluate_case(const std::string& id, const SegmentationMask& pred, const SegmentationMask& gt);
MetricsReport evaluate_cases(const std::vector<std::string>& ids, const std::vector<SegmentationMask>& preds,
                             const std::vector<SegmentationMask>& gts);

}  // namespace mfa
