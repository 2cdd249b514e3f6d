#pragma once

#include <cstdint>
#include <string>

#include "mfa/autodiff.hpp"

namespace mfa {

/// Channel gate (spatial squeeze, channel excitation): global average pool, a c -> c/2
/// fully connected layer, ReLU, a c/2 -> c fully connected layer, sigmoid, then one
/// multiplicative gate per channel.
template <typename T>
struct SsceParams {
  Tensor<T> w1;  // [c, c/2, 1, 1]
  Tensor<T> b1;  // [c/2, 1, 1, 1]
  Tensor<T> w2;  // [c/2, c, 1, 1]
  Tensor<T> b2;  // [c, 1, 1, 1]

  /// Zero weights and biases. Rejects odd or zero `channels`.
  static SsceParams zeros(std::size_t channels);
  /// Weights uniform in +-1/sqrt(fan_in), zero biases.
  static SsceParams init(std::size_t channels, std::uint64_t seed);

  std::size_t channels() const { return w1.shape().n; }
  void validate() const;
};

/// Spatial gate (channel squeeze, spatial excitation): a 1x1 convolution to a single
/// map, sigmoid, then one multiplicative gate per position.
template <typename T>
struct CsseParams {
  Tensor<T> w_sq;  // [1, c, 1, 1]
  Tensor<T> b_sq;  // [1, 1, 1, 1]

  static CsseParams zeros(std::size_t channels);
  static CsseParams init(std::size_t channels, std::uint64_t seed);

  std::size_t channels() const { return w_sq.shape().c; }
  void validate() const;
};

/// Both gates applied in parallel to the same input and summed.
template <typename T>
struct ScseParams {
  SsceParams<T> ssce;
  CsseParams<T> csse;

  static ScseParams zeros(std::size_t channels);
  static ScseParams init(std::size_t channels, std::uint64_t seed);

  void validate() const;
};

/// Graph handles for parameters taking part in a forward pass.
template <typename T>
struct SsceVars {
  Var<T> w1, b1, w2, b2;
};
template <typename T>
struct CsseVars {
  Var<T> w_sq, b_sq;
};
template <typename T>
struct ScseVars {
  SsceVars<T> ssce;
  CsseVars<T> csse;
};

template <typename T>
Var<T> ssce_forward(Var<T> u, const SsceVars<T>& p);
template <typename T>
Var<T> csse_forward(Var<T> u, const CsseVars<T>& p);
template <typename T>
Var<T> scse_forward(Var<T> u, const ScseVars<T>& p);

// Tensor-level conveniences (no gradients).
template <typename T>
Tensor<T> ssce_forward(const Tensor<T>& u, const SsceParams<T>& p);
template <typename T>
Tensor<T> csse_forward(const Tensor<T>& u, const CsseParams<T>& p);
template <typename T>
Tensor<T> scse_forward(const Tensor<T>& u, const ScseParams<T>& p);

// Registration under a name prefix, e.g. "scse0.ssce" -> "scse0.ssce.w1".
template <typename T>
void register_params(ParamStore<T>& store, const std::string& prefix, const SsceParams<T>& p);
template <typename T>
void register_params(ParamStore<T>& store, const std::string& prefix, const CsseParams<T>& p);
/// Registers "<prefix>.ssce.*" and "<prefix>.csse.*".
template <typename T>
void register_params(ParamStore<T>& store, const std::string& prefix, const ScseParams<T>& p);

template <typename T>
SsceVars<T> bind_ssce(Graph<T>& g, ParamStore<T>& store, const std::string& prefix);
template <typename T>
CsseVars<T> bind_csse(Graph<T>& g, ParamStore<T>& store, const std::string& prefix);
template <typename T>
ScseVars<T> bind_scse(Graph<T>& g, ParamStore<T>& store, const std::string& prefix);

}  // namespace mfa
