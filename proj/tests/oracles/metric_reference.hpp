#pragma once

// Naive per-pixel counting over two label grids, independent of the library's confusion counts.

#include <cstdint>
#include <vector>

namespace oracle {

struct NaiveMetrics {
  double dice, jaccard, pixel_accuracy;
};

inline NaiveMetrics naive_metrics(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& gt, int w,
                                  int h) {
  long both = 0, pred_only = 0, gt_only = 0, agree = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto p = pred[static_cast<std::size_t>(y * w + x)];
      const auto g = gt[static_cast<std::size_t>(y * w + x)];
      if (p == 1 && g == 1) ++both;
      if (p == 1 && g == 0) ++pred_only;
      if (p == 0 && g == 1) ++gt_only;
      if (p == g) ++agree;
    }
  }
  const long sizes = 2 * both + pred_only + gt_only;
  const long uni = both + pred_only + gt_only;
  return {sizes == 0 ? 1.0 : static_cast<double>(2 * both) / static_cast<double>(sizes),
          uni == 0 ? 1.0 : static_cast<double>(both) / static_cast<double>(uni),
          static_cast<double>(agree) / static_cast<double>(w * h)};
}

}  // namespace oracle
