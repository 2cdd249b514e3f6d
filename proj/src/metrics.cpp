#include "mfa/metrics.hpp"

#include <cmath>
#include "json.hpp"

#include "mfa/error.hpp"

namespace mfa {

std::size_t SegmentationMask::count() const {
  std::size_t n = 0;
  for (auto v : labels) n += v;
  return n;
}

void SegmentationMask::validate() const {
  if (width < 0 || height < 0 || labels.size() != static_cast<std::size_t>(width) * height) {
    throw ValidationError("mask storage does not match " + std::to_string(width) + "x" + std::to_string(height));
  }
  for (auto v : labels)
    if (v > 1) throw ValidationError("mask label " + std::to_string(v) + " is not 0 or 1");
}

ConfusionCounts confusion(const SegmentationMask& pred, const SegmentationMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw ValidationError("mask size mismatch: prediction " + std::to_string(pred.width) + "x" +
                          std::to_string(pred.height) + " vs ground truth " + std::to_string(gt.width) + "x" +
                          std::to_string(gt.height));
  }
  pred.validate();
  gt.validate();
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.labels.size(); ++i) {
    const bool p = pred.labels[i] != 0;
    const bool g = gt.labels[i] != 0;
    if (p && g) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (g) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

double dice(const ConfusionCounts& c) {
  const std::uint64_t den = 2 * c.tp + c.fp + c.fn;
  return den == 0 ? 1.0 : static_cast<double>(2 * c.tp) / static_cast<double>(den);
}

double jaccard(const ConfusionCounts& c) {
  const std::uint64_t den = c.tp + c.fp + c.fn;
  return den == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(den);
}

double pixel_accuracy(const ConfusionCounts& c) {
  if (c.total() == 0) return 1.0;
  return static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

template <typename T>
std::vector<SegmentationMask> threshold_logits(const Tensor<T>& logits, double t) {
  const Shape& s = logits.shape();
  if (s.c != 1) throw ValidationError("threshold_logits expects one channel, got " + s.str());
  if (!(t > 0.0 && t < 1.0)) throw ValidationError("threshold must lie in (0,1)");
  // sigmoid(x) > t  <=>  x > logit(t); comparing logits avoids saturation at +-100.
  const double cut = std::log(t / (1.0 - t));
  std::vector<SegmentationMask> out;
  for (std::size_t n = 0; n < s.n; ++n) {
    SegmentationMask m(static_cast<int>(s.w), static_cast<int>(s.h));
    for (std::size_t i = 0; i < s.plane(); ++i) m.labels[i] = static_cast<double>(logits[n * s.plane() + i]) > cut;
    out.push_back(std::move(m));
  }
  return out;
}

template std::vector<SegmentationMask> threshold_logits(const Tensor<float>&, double);
template std::vector<SegmentationMask> threshold_logits(const Tensor<double>&, double);

CaseMetrics evaluate_case(const std::string& id, const SegmentationMask& pred, const SegmentationMask& gt) {
  const ConfusionCounts c = confusion(pred, gt);
  return CaseMetrics{id, dice(c), jaccard(c), pixel_accuracy(c)};
}

MetricsReport evaluate_cases(const std::vector<std::string>& ids, const std::vector<SegmentationMask>& preds,
                             const std::vector<SegmentationMask>& gts) {
  if (ids.size() != preds.size() || preds.size() != gts.size()) {
    throw ValidationError("evaluate_cases: ids, predictions and ground truths differ in count");
  }
  MetricsReport report;
  report.mean.id = "mean";
  for (std::size_t i = 0; i < ids.size(); ++i) {
    report.cases.push_back(evaluate_case(ids[i], preds[i], gts[i]));
    report.mean.dice += report.cases.back().dice;
    report.mean.jaccard += report.cases.back().jaccard;
    report.mean.pixel_accuracy += report.cases.back().pixel_accuracy;
  }
  if (!ids.empty()) {
    const double n = static_cast<double>(ids.size());
    report.mean.dice /= n;
    report.mean.jaccard /= n;
    report.mean.pixel_accuracy /= n;
  }
  return report;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["cases"] = nlohmann::ordered_json::array();
  for (const auto& c : cases) {
    j["cases"].push_back({{"id", c.id}, {"dice", c.dice}, {"jaccard", c.jaccard}, {"pixel_accuracy", c.pixel_accuracy}});
  }
  j["mean"] = {{"dice", mean.dice}, {"jaccard", mean.jaccard}, {"pixel_accuracy", mean.pixel_accuracy}};
  return j.dump(2) + "\n";
}

}  // namespace mfa
