#pragma once

#include "mfa/autodiff.hpp"

namespace mfa {

/// Output extent of a convolution along one axis: floor((in + 2p - k) / s) + 1.
inline std::size_t conv_out_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                   std::size_t padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

/// 2-D cross-correlation with zero padding.
/// weight: [Cout, Cin, kH, kW]; bias: [Cout, 1, 1, 1].
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, std::size_t stride, std::size_t padding);

/// Fully connected layer on [N, Cin, 1, 1]. weight: [Cin, Cout, 1, 1] (a Cin x Cout matrix);
/// bias: [Cout, 1, 1, 1].
template <typename T>
Var<T> linear(Var<T> input, Var<T> weight, Var<T> bias);

/// Mean over each H x W plane: [N, C, H, W] -> [N, C, 1, 1].
template <typename T>
Var<T> global_avg_pool(Var<T> input);

/// max(0, x). The subgradient at 0 is 0.
template <typename T>
Var<T> relu(Var<T> input);

template <typename T>
Var<T> sigmoid(Var<T> input);

/// Gated product. `gate` is either [N, C, 1, 1] (one gate per channel) or
/// [N, 1, H, W] (one gate per position); no other broadcast is accepted.
template <typename T>
Var<T> broadcast_mul(Var<T> input, Var<T> gate);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

/// Elementwise product of equal shapes.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);

/// Sum of every element, as a [1, 1, 1, 1] scalar.
template <typename T>
Var<T> sum(Var<T> input);

/// Disjoint 2x2 max pooling. Ties resolve to the first maximum in row-major order.
template <typename T>
Var<T> max_pool_2x2(Var<T> input);

template <typename T>
Var<T> upsample_nearest_2x(Var<T> input);

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b);

}  // namespace mfa
