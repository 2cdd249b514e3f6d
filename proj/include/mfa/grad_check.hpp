#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "mfa/autodiff.hpp"

namespace mfa {

/// Builds a scalar loss on `graph` from the current parameter values. Must be
/// deterministic: it is re-run for every probed coordinate.
using LossBuilder = std::function<Var<double>(Graph<double>&, ParamStore<double>&)>;

struct GradCheckOptions {
  double eps = 1e-6;
  /// Coordinates probed per parameter tensor; smaller tensors are probed exhaustively.
  std::size_t max_coords_per_param = 16;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  /// Probes whose +/- eps evaluations switched a ReLU sign or pooling argmax.
  std::size_t skipped_at_kinks = 0;
  std::string worst_coordinate;
};

/// Compares reverse-mode gradients against central differences
/// (f(x + eps) - f(x - eps)) / (2 eps). The error per coordinate is
/// |a - n| / max(|a|, |n|, 1e-8); the result reports the maximum.
GradCheckResult grad_check(const LossBuilder& builder, ParamStore<double>& params,
                           const GradCheckOptions& options = {});

}  // namespace mfa
