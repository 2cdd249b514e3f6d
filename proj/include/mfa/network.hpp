#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mfa/autodiff.hpp"

namespace mfa {

/// Which attention block follows each encoder double convolution.
enum class Variant { baseline, ssce, csse, scse };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);

struct NetworkConfig {
  Variant variant = Variant::scse;
  int base_channels = 16;
  int stages = 4;
  int in_channels = 1;
  int out_channels = 1;
  int input_size = 64;

  /// Throws ValidationError naming the violated invariant.
  void validate() const;

  /// Encoder width at `stage`; stage == stages is the bottleneck.
  std::size_t width(int stage) const { return static_cast<std::size_t>(base_channels) << stage; }

  /// key=value lines, one per field, fixed order.
  std::string to_text() const;
  static NetworkConfig from_text(const std::string& text);

  bool operator==(const NetworkConfig&) const = default;
};

enum class LayerKind { conv3x3, attention, maxpool, upsample, up_conv, concat, head };

struct LayerSpec {
  int stage;  // encoder 0..3, bottleneck 4, decoder 3..0 (listed deep to shallow), head -1
  LayerKind kind;
  std::vector<std::string> params;
};

/// 4-stage U-Net with an optional attention block after each encoder double
/// convolution. The attention output feeds both the pooling path and the skip
/// connection. The decoder and bottleneck carry no attention.
template <typename T>
class Network {
 public:
  /// Deterministic: every parameter tensor is drawn from a stream keyed by
  /// (seed, parameter name), so variants share all non-attention weights.
  static Network build(const NetworkConfig& config, std::uint64_t seed);

  /// Records the forward pass on `graph` using `params` (normally params()).
  Var<T> forward(Graph<T>& graph, ParamStore<T>& params, const Tensor<T>& batch) const;
  Var<T> forward(Graph<T>& graph, const Tensor<T>& batch) { return forward(graph, params_, batch); }

  /// Inference: raw logits [N, out_channels, H, W].
  Tensor<T> forward(const Tensor<T>& batch) const;

  std::size_t num_params() const { return params_.num_scalars(); }
  const NetworkConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  const std::vector<LayerSpec>& plan() const { return plan_; }

  /// Names of the attention parameters (empty for the baseline variant).
  std::vector<std::string> attention_param_names() const;

  /// Same config and parameters in another precision.
  template <typename U>
  Network<U> cast() const;

 private:
  template <typename U>
  friend class Network;

  NetworkConfig config_;
  ParamStore<T> params_;
  std::vector<LayerSpec> plan_;
};

/// Checkpoint container ("MFAC"), little-endian:
///   magic "MFAC" | u32 version = 1 | u32 record count
///   | records: u32 name length, UTF-8 name, payload
///   | u64 sum of all preceding bytes
/// The first record is "__config", whose payload is u32 length + key=value text.
/// Every other payload is an embedded TNSR tensor.
template <typename T>
void save_checkpoint(const Network<T>& net, const std::filesystem::path& path);

/// Rebuilds the network described by the checkpoint and fills its parameters.
template <typename T>
Network<T> load_checkpoint(const std::filesystem::path& path);

/// Fills `net` from a checkpoint. The checkpoint must carry exactly the parameter
/// names and shapes of `net`; otherwise throws ValidationError naming the record.
template <typename T>
void load_parameters(const std::filesystem::path& path, Network<T>& net);

}  // namespace mfa
