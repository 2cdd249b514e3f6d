#include "mfa/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mfa/random.hpp"

namespace mfa {
namespace {

struct Evaluation {
  double loss;
  std::uint64_t signature;
};

Evaluation evaluate(const LossBuilder& builder, ParamStore<double>& params) {
  Graph<double> graph;
  graph.set_track_kinks(true);
  Var<double> loss = builder(graph, params);
  return {loss.value()[0], graph.kink_signature()};
}

std::vector<std::size_t> pick_coordinates(std::size_t size, std::size_t limit, Rng& rng) {
  std::vector<std::size_t> idx(size);
  std::iota(idx.begin(), idx.end(), 0);
  if (size <= limit) return idx;
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < limit; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(size - 1)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& builder, ParamStore<double>& params,
                           const GradCheckOptions& options) {
  params.zero_grad();
  std::uint64_t base_signature = 0;
  {
    Graph<double> graph;
    graph.set_track_kinks(true);
    Var<double> loss = builder(graph, params);
    base_signature = graph.kink_signature();
    graph.backward(loss);
  }

  GradCheckResult result;
  Rng rng(options.seed);
  for (auto& entry : params.entries()) {
    const Tensor<double> analytic = entry.grad;
    for (std::size_t k : pick_coordinates(entry.value.size(), options.max_coords_per_param, rng)) {
      const double original = entry.value[k];
      entry.value[k] = original + options.eps;
      const Evaluation plus = evaluate(builder, params);
      entry.value[k] = original - options.eps;
      const Evaluation minus = evaluate(builder, params);
      entry.value[k] = original;

      if (plus.signature != base_signature || minus.signature != base_signature) {
        ++result.skipped_at_kinks;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2.0 * options.eps);
      const double a = analytic[k];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++result.checked;
      if (err > result.max_relative_error || result.worst_coordinate.empty()) {
        result.max_relative_error = std::max(result.max_relative_error, err);
        if (err >= result.max_relative_error) result.worst_coordinate = entry.name + "[" + std::to_string(k) + "]";
      }
    }
  }
  return result;
}

}  // namespace mfa
