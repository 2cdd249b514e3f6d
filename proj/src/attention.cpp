#include "mfa/attention.hpp"

#include <cmath>

#include "mfa/ops.hpp"
#include "mfa/random.hpp"

namespace mfa {
namespace {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

void check_channels(std::size_t channels) {
  if (channels < 2 || channels % 2 != 0) {
    throw ValidationError("attention block needs an even channel count >= 2, got " + std::to_string(channels));
  }
}

void check_input(const Shape& s, std::size_t channels, const char* block) {
  if (s.c != channels) {
    throw ValidationError(std::string(block) + ": input " + s.str() + " has " + std::to_string(s.c) +
                          " channels, block expects " + std::to_string(channels));
  }
}

}  // namespace

template <typename T>
SsceParams<T> SsceParams<T>::zeros(std::size_t c) {
  check_channels(c);
  return SsceParams{Tensor<T>(Shape{c, c / 2, 1, 1}), Tensor<T>(Shape{c / 2, 1, 1, 1}),
                    Tensor<T>(Shape{c / 2, c, 1, 1}), Tensor<T>(Shape{c, 1, 1, 1})};
}

template <typename T>
SsceParams<T> SsceParams<T>::init(std::size_t c, std::uint64_t seed) {
  SsceParams p = zeros(c);
  Rng rng(seed);
  p.w1 = uniform_tensor<T>(p.w1.shape(), 1.0 / std::sqrt(static_cast<double>(c)), rng);
  p.w2 = uniform_tensor<T>(p.w2.shape(), 1.0 / std::sqrt(static_cast<double>(c / 2)), rng);
  return p;
}

template <typename T>
void SsceParams<T>::validate() const {
  const std::size_t c = w1.shape().n;
  check_channels(c);
  if (!(w1.shape() == Shape{c, c / 2, 1, 1}) || !(b1.shape() == Shape{c / 2, 1, 1, 1}) ||
      !(w2.shape() == Shape{c / 2, c, 1, 1}) || !(b2.shape() == Shape{c, 1, 1, 1})) {
    throw ValidationError("inconsistent channel-gate parameter shapes for c=" + std::to_string(c));
  }
}

template <typename T>
CsseParams<T> CsseParams<T>::zeros(std::size_t c) {
  check_channels(c);
  return CsseParams{Tensor<T>(Shape{1, c, 1, 1}), Tensor<T>(Shape{1, 1, 1, 1})};
}

template <typename T>
CsseParams<T> CsseParams<T>::init(std::size_t c, std::uint64_t seed) {
  CsseParams p = zeros(c);
  Rng rng(seed);
  p.w_sq = uniform_tensor<T>(p.w_sq.shape(), 1.0 / std::sqrt(static_cast<double>(c)), rng);
  return p;
}

template <typename T>
void CsseParams<T>::validate() const {
  const std::size_t c = w_sq.shape().c;
  check_channels(c);
  if (w_sq.shape().n != 1 || !(w_sq.shape() == Shape{1, c, 1, 1}) || !(b_sq.shape() == Shape{1, 1, 1, 1})) {
    throw ValidationError("spatial gate kernel must be [1,c,1,1], got " + w_sq.shape().str());
  }
}

template <typename T>
ScseParams<T> ScseParams<T>::zeros(std::size_t c) {
  return ScseParams{SsceParams<T>::zeros(c), CsseParams<T>::zeros(c)};
}

template <typename T>
ScseParams<T> ScseParams<T>::init(std::size_t c, std::uint64_t seed) {
  return ScseParams{SsceParams<T>::init(c, mix_seed(seed ^ 1)), CsseParams<T>::init(c, mix_seed(seed ^ 2))};
}

template <typename T>
void ScseParams<T>::validate() const {
  ssce.validate();
  csse.validate();
  if (ssce.channels() != csse.channels()) {
    throw ValidationError("channel gate has c=" + std::to_string(ssce.channels()) + " but spatial gate has c=" +
                          std::to_string(csse.channels()));
  }
}

template <typename T>
Var<T> ssce_forward(Var<T> u, const SsceVars<T>& p) {
  check_input(u.shape(), p.w1.shape().n, "ssce");
  Var<T> z = global_avg_pool(u);
  Var<T> hidden = relu(linear(z, p.w1, p.b1));
  Var<T> gate = sigmoid(linear(hidden, p.w2, p.b2));
  return broadcast_mul(u, gate);
}

template <typename T>
Var<T> csse_forward(Var<T> u, const CsseVars<T>& p) {
  check_input(u.shape(), p.w_sq.shape().c, "csse");
  Var<T> q = conv2d(u, p.w_sq, p.b_sq, 1, 0);
  return broadcast_mul(u, sigmoid(q));
}

template <typename T>
Var<T> scse_forward(Var<T> u, const ScseVars<T>& p) {
  // Both branches read the same u.
  return add(ssce_forward(u, p.ssce), csse_forward(u, p.csse));
}

template <typename T>
void register_params(ParamStore<T>& store, const std::string& prefix, const SsceParams<T>& p) {
  p.validate();
  store.add(prefix + ".w1", p.w1);
  store.add(prefix + ".b1", p.b1);
  store.add(prefix + ".w2", p.w2);
  store.add(prefix + ".b2", p.b2);
}

template <typename T>
void register_params(ParamStore<T>& store, const std::string& prefix, const CsseParams<T>& p) {
  p.validate();
  store.add(prefix + ".w_sq", p.w_sq);
  store.add(prefix + ".b_sq", p.b_sq);
}

template <typename T>
void register_params(ParamStore<T>& store, const std::string& prefix, const ScseParams<T>& p) {
  p.validate();
  register_params(store, prefix + ".ssce", p.ssce);
  register_params(store, prefix + ".csse", p.csse);
}

template <typename T>
SsceVars<T> bind_ssce(Graph<T>& g, ParamStore<T>& store, const std::string& prefix) {
  return {g.parameter(store, prefix + ".w1"), g.parameter(store, prefix + ".b1"),
          g.parameter(store, prefix + ".w2"), g.parameter(store, prefix + ".b2")};
}

template <typename T>
CsseVars<T> bind_csse(Graph<T>& g, ParamStore<T>& store, const std::string& prefix) {
  return {g.parameter(store, prefix + ".w_sq"), g.parameter(store, prefix + ".b_sq")};
}

template <typename T>
ScseVars<T> bind_scse(Graph<T>& g, ParamStore<T>& store, const std::string& prefix) {
  return {bind_ssce(g, store, prefix + ".ssce"), bind_csse(g, store, prefix + ".csse")};
}

template <typename T>
Tensor<T> ssce_forward(const Tensor<T>& u, const SsceParams<T>& p) {
  p.validate();
  Graph<T> g;
  SsceVars<T> v{g.constant(p.w1), g.constant(p.b1), g.constant(p.w2), g.constant(p.b2)};
  return ssce_forward(g.constant(u), v).value();
}

template <typename T>
Tensor<T> csse_forward(const Tensor<T>& u, const CsseParams<T>& p) {
  p.validate();
  Graph<T> g;
  CsseVars<T> v{g.constant(p.w_sq), g.constant(p.b_sq)};
  return csse_forward(g.constant(u), v).value();
}

template <typename T>
Tensor<T> scse_forward(const Tensor<T>& u, const ScseParams<T>& p) {
  p.validate();
  Graph<T> g;
  ScseVars<T> v{{g.constant(p.ssce.w1), g.constant(p.ssce.b1), g.constant(p.ssce.w2), g.constant(p.ssce.b2)},
                {g.constant(p.csse.w_sq), g.constant(p.csse.b_sq)}};
  return scse_forward(g.constant(u), v).value();
}

#define MFA_INSTANTIATE_ATTENTION(T)                                                              \
  template struct SsceParams<T>;                                                                  \
  template struct CsseParams<T>;                                                                  \
  template struct ScseParams<T>;                                                                  \
  template Var<T> ssce_forward(Var<T>, const SsceVars<T>&);                                       \
  template Var<T> csse_forward(Var<T>, const CsseVars<T>&);                                       \
  template Var<T> scse_forward(Var<T>, const ScseVars<T>&);                                       \
  template Tensor<T> ssce_forward(const Tensor<T>&, const SsceParams<T>&);                        \
  template Tensor<T> csse_forward(const Tensor<T>&, const CsseParams<T>&);                        \
  template Tensor<T> scse_forward(const Tensor<T>&, const ScseParams<T>&);                        \
  template void register_params(ParamStore<T>&, const std::string&, const SsceParams<T>&);        \
  template void register_params(ParamStore<T>&, const std::string&, const CsseParams<T>&);        \
  template void register_params(ParamStore<T>&, const std::string&, const ScseParams<T>&);        \
  template SsceVars<T> bind_ssce(Graph<T>&, ParamStore<T>&, const std::string&);                  \
  template CsseVars<T> bind_csse(Graph<T>&, ParamStore<T>&, const std::string&);                  \
  template ScseVars<T> bind_scse(Graph<T>&, ParamStore<T>&, const std::string&);

MFA_INSTANTIATE_ATTENTION(float)
MFA_INSTANTIATE_ATTENTION(double)

}  // namespace mfa
