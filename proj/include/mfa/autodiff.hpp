#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mfa/param_store.hpp"
#include "mfa/tensor.hpp"

namespace mfa {

template <typename T>
class Graph;

/// Handle to a node recorded on a Graph.
template <typename T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Single-use reverse-mode tape.
///
/// Nodes are appended in evaluation order, so the tape is topologically sorted by
/// construction and backward() is one reverse sweep.
template <typename T>
class Graph {
 public:
  /// Receives the node's output gradient and accumulates into its inputs.
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  struct Node {
    std::string op;
    Tensor<T> value;
    Tensor<T> grad;  // empty until a gradient arrives
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool needs_grad = false;
    Tensor<T>* param_grad = nullptr;  // sink for parameter leaves
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value) {
    Node node;
    node.op = "constant";
    node.value = std::move(value);
    return append(std::move(node));
  }

  /// Leaf bound to a stored parameter; backward() adds its gradient into the store.
  Var<T> parameter(ParamStore<T>& store, const std::string& name) {
    auto& entry = store.entry(name);
    Node node;
    node.op = "param:" + name;
    node.value = entry.value;
    node.needs_grad = true;
    node.param_grad = &entry.grad;
    return append(std::move(node));
  }

  Var<T> record(std::string op, Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn backward) {
    Node node;
    node.op = std::move(op);
    node.value = std::move(value);
    for (const auto& in : inputs) {
      if (in.graph != this) throw ValidationError("operand belongs to a different graph");
      node.inputs.push_back(in.id);
      node.needs_grad = node.needs_grad || nodes_[in.id].needs_grad;
    }
    if (node.needs_grad) node.backward = std::move(backward);
    return append(std::move(node));
  }

  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }
  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  /// Output gradient of node `id` (valid inside a BackwardFn).
  const Tensor<T>& grad(std::size_t id) const { return nodes_[id].grad; }

  /// Gradient buffer of node `id`, allocated as zeros on first use.
  Tensor<T>& grad_accumulator(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && n.value.size() != 0) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  /// Fills the gradient of every parameter reached from `loss`. Gradients add onto
  /// whatever the store already holds, so shared parameters accumulate.
  void backward(Var<T> loss) {
    const Shape scalar{1, 1, 1, 1};
    if (loss.graph != this) throw ValidationError("loss belongs to a different graph");
    if (!(nodes_[loss.id].value.shape() == scalar)) {
      throw ValidationError("backward requires a scalar loss of shape [1,1,1,1], got " +
                            nodes_[loss.id].value.shape().str());
    }
    grad_accumulator(loss.id)[0] += T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param_grad != nullptr) {
        auto dst = n.param_grad->values();
        auto src = n.grad.values();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
    }
  }

  /// When enabled, nondifferentiable decisions (ReLU signs, pooling argmaxes) are hashed
  /// into kink_signature(). A finite-difference probe that changes the signature crossed
  /// a kink.
  void set_track_kinks(bool on) { track_kinks_ = on; }
  bool tracking_kinks() const { return track_kinks_; }
  void mix_kink(std::uint64_t v) {
    kink_hash_ ^= v + 0x9e3779b97f4a7c15ULL + (kink_hash_ << 6) + (kink_hash_ >> 2);
  }
  std::uint64_t kink_signature() const { return kink_hash_; }

 private:
  Var<T> append(Node node) {
    nodes_.push_back(std::move(node));
    return Var<T>{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  bool track_kinks_ = false;
  std::uint64_t kink_hash_ = 0;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph->value(id);
}

}  // namespace mfa
