#include "mfa/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace mfa {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

struct ConvGeometry {
  std::size_t cin, h, w, kh, kw, stride, pad, ho, wo;

  std::size_t patch() const { return cin * kh * kw; }
  std::size_t positions() const { return ho * wo; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// Unfolds one sample into a [cin*kh*kw, ho*wo] row-major matrix.
template <typename T>
void im2col(const T* src, const ConvGeometry& g, T* col) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((c * g.kh + i) * g.kw + j) * g.positions();
        for (std::size_t y = 0; y < g.ho; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          T* out = row + y * g.wo;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill_n(out, g.wo, T(0));
            continue;
          }
          const T* in_row = src + (c * g.h + static_cast<std::size_t>(sy)) * g.w;
          for (std::size_t x = 0; x < g.wo; ++x) {
            const auto sx = static_cast<std::ptrdiff_t>(x * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            out[x] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(g.w)) ? T(0) : in_row[sx];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters a column matrix back onto one sample.
template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* dst) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((c * g.kh + i) * g.kw + j) * g.positions();
        for (std::size_t y = 0; y < g.ho; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* out_row = dst + (c * g.h + static_cast<std::size_t>(sy)) * g.w;
          const T* in = row + y * g.wo;
          for (std::size_t x = 0; x < g.wo; ++x) {
            const auto sx = static_cast<std::ptrdiff_t>(x * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
            if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(g.w)) out_row[sx] += in[x];
          }
        }
      }
    }
  }
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, std::size_t stride, std::size_t padding) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  const Shape& bs = bias.shape();
  require(ws.h >= 1 && ws.w >= 1, "conv2d: kernel extent must be >= 1, got weight " + ws.str());
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(ws.c == xs.c, "conv2d: weight " + ws.str() + " does not match input channels of " + xs.str());
  require(bs == Shape{ws.n, 1, 1, 1}, "conv2d: bias " + bs.str() + " does not match weight " + ws.str());
  require(xs.h + 2 * padding >= ws.h && xs.w + 2 * padding >= ws.w,
          "conv2d: kernel " + ws.str() + " larger than padded input " + xs.str());

  const ConvGeometry g{xs.c, xs.h, xs.w, ws.h, ws.w, stride, padding,
                       conv_out_extent(xs.h, ws.h, stride, padding),
                       conv_out_extent(xs.w, ws.w, stride, padding)};
  require(g.ho > 0 && g.wo > 0, "conv2d: empty output for input " + xs.str());
  const std::size_t cout = ws.n;
  const std::size_t batch = xs.n;

  Tensor<T> out(Shape{batch, cout, g.ho, g.wo});
  const ConstMatMap<T> wmat(weight.value().data(), cout, g.patch());
  AlignedVector<T> col(g.is_pointwise() ? 0 : g.patch() * g.positions());
  for (std::size_t n = 0; n < batch; ++n) {
    const T* src = input.value().data() + n * xs.c * xs.plane();
    if (!g.is_pointwise()) im2col(src, g, col.data());
    const ConstMatMap<T> cmat(g.is_pointwise() ? src : col.data(), g.patch(), g.positions());
    MatMap<T> omat(out.data() + n * cout * g.positions(), cout, g.positions());
    omat.noalias() = wmat * cmat;
    for (std::size_t o = 0; o < cout; ++o) omat.row(o).array() += bias.value()[o];
  }

  auto backward = [g, cout, batch](Graph<T>& graph, std::size_t self) {
    const auto& node = graph.node(self);
    const std::size_t xi = node.inputs[0], wi = node.inputs[1], bi = node.inputs[2];
    const Tensor<T>& dout = graph.grad(self);
    const Tensor<T>& x = graph.value(xi);
    const Tensor<T>& w = graph.value(wi);
    const bool want_x = graph.needs_grad(xi);
    const bool want_w = graph.needs_grad(wi);
    const bool want_b = graph.needs_grad(bi);

    AlignedVector<T> col(g.is_pointwise() ? 0 : g.patch() * g.positions());
    AlignedVector<T> dcol(want_x && !g.is_pointwise() ? g.patch() * g.positions() : 0);
    const ConstMatMap<T> wmat(w.data(), cout, g.patch());
    for (std::size_t n = 0; n < batch; ++n) {
      const ConstMatMap<T> dmat(dout.data() + n * cout * g.positions(), cout, g.positions());
      if (want_w) {
        const T* src = x.data() + n * g.cin * g.h * g.w;
        if (!g.is_pointwise()) im2col(src, g, col.data());
        const ConstMatMap<T> cmat(g.is_pointwise() ? src : col.data(), g.patch(), g.positions());
        MatMap<T> dw(graph.grad_accumulator(wi).data(), cout, g.patch());
        dw.noalias() += dmat * cmat.transpose();
      }
      if (want_b) {
        Tensor<T>& db = graph.grad_accumulator(bi);
        for (std::size_t o = 0; o < cout; ++o) db[o] += dmat.row(o).sum();
      }
      if (want_x) {
        T* dx = graph.grad_accumulator(xi).data() + n * g.cin * g.h * g.w;
        if (g.is_pointwise()) {
          MatMap<T> dxmat(dx, g.patch(), g.positions());
          dxmat.noalias() += wmat.transpose() * dmat;
        } else {
          MatMap<T> dcmat(dcol.data(), g.patch(), g.positions());
          dcmat.noalias() = wmat.transpose() * dmat;
          col2im(dcol.data(), g, dx);
        }
      }
    }
  };
  return input.graph->record("conv2d", std::move(out), {input, weight, bias}, backward);
}

template <typename T>
Var<T> linear(Var<T> input, Var<T> weight, Var<T> bias) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  require(xs.h == 1 && xs.w == 1, "linear: input must be 1x1 spatially, got " + xs.str());
  require(ws.h == 1 && ws.w == 1 && ws.n == xs.c,
          "linear: weight " + ws.str() + " does not have one row per input channel of " + xs.str());
  require(bias.shape() == Shape{ws.c, 1, 1, 1},
          "linear: bias " + bias.shape().str() + " does not match weight " + ws.str());
  const std::size_t cin = ws.n, cout = ws.c;
  Tensor<T> out(Shape{xs.n, cout, 1, 1});
  const Tensor<T>& x = input.value();
  const Tensor<T>& w = weight.value();
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t o = 0; o < cout; ++o) {
      T acc = bias.value()[o];
      for (std::size_t c = 0; c < cin; ++c) acc += x[n * cin + c] * w[c * cout + o];
      out[n * cout + o] = acc;
    }
  }
  auto backward = [cin, cout, batch = xs.n](Graph<T>& graph, std::size_t self) {
    const auto& node = graph.node(self);
    const std::size_t xi = node.inputs[0], wi = node.inputs[1], bi = node.inputs[2];
    const Tensor<T>& dout = graph.grad(self);
    const Tensor<T>& x = graph.value(xi);
    const Tensor<T>& w = graph.value(wi);
    if (graph.needs_grad(xi)) {
      Tensor<T>& dx = graph.grad_accumulator(xi);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t o = 0; o < cout; ++o) dx[n * cin + c] += dout[n * cout + o] * w[c * cout + o];
    }
    if (graph.needs_grad(wi)) {
      Tensor<T>& dw = graph.grad_accumulator(wi);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t o = 0; o < cout; ++o) dw[c * cout + o] += x[n * cin + c] * dout[n * cout + o];
    }
    if (graph.needs_grad(bi)) {
      Tensor<T>& db = graph.grad_accumulator(bi);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t o = 0; o < cout; ++o) db[o] += dout[n * cout + o];
    }
  };
  return input.graph->record("linear", std::move(out), {input, weight, bias}, backward);
}

template <typename T>
Var<T> global_avg_pool(Var<T> input) {
  const Shape s = input.shape();
  require(s.plane() >= 1, "global_avg_pool: empty spatial extent in " + s.str());
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  const T* x = input.value().data();
  const T inv = T(1) / static_cast<T>(s.plane());
  for (std::size_t k = 0; k < s.n * s.c; ++k) {
    T acc = T(0);
    for (std::size_t p = 0; p < s.plane(); ++p) acc += x[k * s.plane() + p];
    out[k] = acc * inv;
  }
  auto backward = [s, inv](Graph<T>& graph, std::size_t self) {
    const std::size_t xi = graph.node(self).inputs[0];
    const Tensor<T>& dout = graph.grad(self);
    T* dx = graph.grad_accumulator(xi).data();
    for (std::size_t k = 0; k < s.n * s.c; ++k) {
      const T g = dout[k] * inv;
      for (std::size_t p = 0; p < s.plane(); ++p) dx[k * s.plane() + p] += g;
    }
  };
  return input.graph->record("global_avg_pool", std::move(out), {input}, backward);
}

template <typename T>
Var<T> relu(Var<T> input) {
  Tensor<T> out = input.value();
  for (auto& v : out.values())
    if (!(v > T(0))) v = T(0);
  Graph<T>& graph = *input.graph;
  if (graph.tracking_kinks()) {
    std::uint64_t signature = 0xcbf29ce484222325ULL;
    for (T v : out.values()) signature = (signature ^ (v > T(0) ? 1u : 2u)) * 0x100000001b3ULL;
    graph.mix_kink(signature);
  }
  auto backward = [](Graph<T>& graph, std::size_t self) {
    const std::size_t xi = graph.node(self).inputs[0];
    const Tensor<T>& x = graph.value(xi);
    const Tensor<T>& dout = graph.grad(self);
    Tensor<T>& dx = graph.grad_accumulator(xi);
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (x[i] > T(0)) dx[i] += dout[i];
  };
  return graph.record("relu", std::move(out), {input}, backward);
}

template <typename T>
Var<T> sigmoid(Var<T> input) {
  Tensor<T> out = input.value();
  for (auto& v : out.values()) v = T(1) / (T(1) + std::exp(-v));
  auto backward = [](Graph<T>& graph, std::size_t self) {
    const std::size_t xi = graph.node(self).inputs[0];
    const Tensor<T>& y = graph.value(self);
    const Tensor<T>& dout = graph.grad(self);
    Tensor<T>& dx = graph.grad_accumulator(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dout[i] * y[i] * (T(1) - y[i]);
  };
  return input.graph->record("sigmoid", std::move(out), {input}, backward);
}

template <typename T>
Var<T> broadcast_mul(Var<T> input, Var<T> gate) {
  const Shape s = input.shape();
  const Shape gs = gate.shape();
  const bool per_channel = gs == Shape{s.n, s.c, 1, 1};
  const bool per_position = gs == Shape{s.n, 1, s.h, s.w};
  require(per_channel || per_position, "broadcast_mul: gate " + gs.str() + " matches neither [N,C,1,1] nor [N,1,H,W] for input " + s.str());

  Tensor<T> out(s);
  const T* x = input.value().data();
  const T* gv = gate.value().data();
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t base = (n * s.c + c) * plane;
      for (std::size_t p = 0; p < plane; ++p) {
        const T gval = per_channel ? gv[n * s.c + c] : gv[n * plane + p];
        out[base + p] = x[base + p] * gval;
      }
    }
  }
  auto backward = [s, per_channel](Graph<T>& graph, std::size_t self) {
    const auto& node = graph.node(self);
    const std::size_t xi = node.inputs[0], gi = node.inputs[1];
    const T* x = graph.value(xi).data();
    const T* gv = graph.value(gi).data();
    const T* dout = graph.grad(self).data();
    const std::size_t plane = s.plane();
    T* dx = graph.needs_grad(xi) ? graph.grad_accumulator(xi).data() : nullptr;
    T* dg = graph.needs_grad(gi) ? graph.grad_accumulator(gi).data() : nullptr;
    for (std::size_t n = 0; n < s.n; ++n) {
      for (std::size_t c = 0; c < s.c; ++c) {
        const std::size_t base = (n * s.c + c) * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t gidx = per_channel ? n * s.c + c : n * plane + p;
          if (dx) dx[base + p] += dout[base + p] * gv[gidx];
          if (dg) dg[gidx] += dout[base + p] * x[base + p];
        }
      }
    }
  };
  return input.graph->record(per_channel ? "channel_mul" : "spatial_mul", std::move(out), {input, gate}, backward);
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require(a.shape() == b.shape(), "add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out = a.value();
  accumulate(out, b.value());
  auto backward = [](Graph<T>& graph, std::size_t self) {
    for (std::size_t in : graph.node(self).inputs)
      if (graph.needs_grad(in)) accumulate(graph.grad_accumulator(in), graph.grad(self));
  };
  return a.graph->record("add", std::move(out), {a, b}, backward);
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require(a.shape() == b.shape(), "mul: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  auto backward = [](Graph<T>& graph, std::size_t self) {
    const auto& node = graph.node(self);
    const std::size_t ai = node.inputs[0], bi = node.inputs[1];
    const Tensor<T>& dout = graph.grad(self);
    if (graph.needs_grad(ai)) {
      Tensor<T>& da = graph.grad_accumulator(ai);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dout[i] * graph.value(bi)[i];
    }
    if (graph.needs_grad(bi)) {
      Tensor<T>& db = graph.grad_accumulator(bi);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dout[i] * graph.value(ai)[i];
    }
  };
  return a.graph->record("mul", std::move(out), {a, b}, backward);
}

template <typename T>
Var<T> sum(Var<T> input) {
  T acc = T(0);
  for (T v : input.value().values()) acc += v;
  Tensor<T> out(Shape{1, 1, 1, 1}, acc);
  auto backward = [](Graph<T>& graph, std::size_t self) {
    const std::size_t xi = graph.node(self).inputs[0];
    const T g = graph.grad(self)[0];
    for (auto& v : graph.grad_accumulator(xi).values()) v += g;
  };
  return input.graph->record("sum", std::move(out), {input}, backward);
}

template <typename T>
Var<T> max_pool_2x2(Var<T> input) {
  const Shape s = input.shape();
  require(s.h % 2 == 0 && s.w % 2 == 0, "max_pool_2x2: spatial dims must be even, got " + s.str());
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  Tensor<T> out(os);
  std::vector<std::size_t> argmax(os.numel());
  const T* x = input.value().data();
  std::uint64_t signature = 0xcbf29ce484222325ULL;
  for (std::size_t k = 0; k < s.n * s.c; ++k) {
    for (std::size_t y = 0; y < os.h; ++y) {
      for (std::size_t xo = 0; xo < os.w; ++xo) {
        const std::size_t top = (k * s.h + 2 * y) * s.w + 2 * xo;
        const std::size_t window[4] = {top, top + 1, top + s.w, top + s.w + 1};
        std::size_t best = window[0];
        for (std::size_t idx : window)
          if (x[idx] > x[best]) best = idx;
        const std::size_t o = (k * os.h + y) * os.w + xo;
        out[o] = x[best];
        argmax[o] = best;
        signature = (signature ^ (best - top)) * 0x100000001b3ULL;
      }
    }
  }
  Graph<T>& graph = *input.graph;
  if (graph.tracking_kinks()) graph.mix_kink(signature);
  auto backward = [argmax = std::move(argmax)](Graph<T>& graph, std::size_t self) {
    const std::size_t xi = graph.node(self).inputs[0];
    const Tensor<T>& dout = graph.grad(self);
    Tensor<T>& dx = graph.grad_accumulator(xi);
    for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += dout[o];
  };
  return graph.record("max_pool_2x2", std::move(out), {input}, std::move(backward));
}

template <typename T>
Var<T> upsample_nearest_2x(Var<T> input) {
  const Shape s = input.shape();
  const Shape os{s.n, s.c, s.h * 2, s.w * 2};
  Tensor<T> out(os);
  const T* x = input.value().data();
  for (std::size_t k = 0; k < s.n * s.c; ++k)
    for (std::size_t y = 0; y < os.h; ++y)
      for (std::size_t xo = 0; xo < os.w; ++xo)
        out[(k * os.h + y) * os.w + xo] = x[(k * s.h + y / 2) * s.w + xo / 2];
  auto backward = [s, os](Graph<T>& graph, std::size_t self) {
    const std::size_t xi = graph.node(self).inputs[0];
    const Tensor<T>& dout = graph.grad(self);
    Tensor<T>& dx = graph.grad_accumulator(xi);
    for (std::size_t k = 0; k < s.n * s.c; ++k)
      for (std::size_t y = 0; y < os.h; ++y)
        for (std::size_t xo = 0; xo < os.w; ++xo)
          dx[(k * s.h + y / 2) * s.w + xo / 2] += dout[(k * os.h + y) * os.w + xo];
  };
  return input.graph->record("upsample_nearest_2x", std::move(out), {input}, backward);
}

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  const Shape as = a.shape();
  const Shape bs = b.shape();
  require(as.n == bs.n && as.h == bs.h && as.w == bs.w,
          "concat_channels: batch/spatial mismatch " + as.str() + " vs " + bs.str());
  const Shape os{as.n, as.c + bs.c, as.h, as.w};
  Tensor<T> out(os);
  const std::size_t plane = as.plane();
  for (std::size_t n = 0; n < as.n; ++n) {
    std::copy_n(a.value().data() + n * as.c * plane, as.c * plane, out.data() + n * os.c * plane);
    std::copy_n(b.value().data() + n * bs.c * plane, bs.c * plane, out.data() + (n * os.c + as.c) * plane);
  }
  auto backward = [as, bs, os, plane](Graph<T>& graph, std::size_t self) {
    const auto& node = graph.node(self);
    const std::size_t ai = node.inputs[0], bi = node.inputs[1];
    const T* dout = graph.grad(self).data();
    if (graph.needs_grad(ai) && as.c > 0) {
      T* da = graph.grad_accumulator(ai).data();
      for (std::size_t n = 0; n < as.n; ++n)
        for (std::size_t k = 0; k < as.c * plane; ++k) da[n * as.c * plane + k] += dout[n * os.c * plane + k];
    }
    if (graph.needs_grad(bi) && bs.c > 0) {
      T* db = graph.grad_accumulator(bi).data();
      for (std::size_t n = 0; n < bs.n; ++n)
        for (std::size_t k = 0; k < bs.c * plane; ++k)
          db[n * bs.c * plane + k] += dout[(n * os.c + as.c) * plane + k];
    }
  };
  return a.graph->record("concat_channels", std::move(out), {a, b}, backward);
}

#define MFA_INSTANTIATE_OPS(T)                                                          \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t);             \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                       \
  template Var<T> global_avg_pool(Var<T>);                                              \
  template Var<T> relu(Var<T>);                                                         \
  template Var<T> sigmoid(Var<T>);                                                      \
  template Var<T> broadcast_mul(Var<T>, Var<T>);                                        \
  template Var<T> add(Var<T>, Var<T>);                                                  \
  template Var<T> mul(Var<T>, Var<T>);                                                  \
  template Var<T> sum(Var<T>);                                                          \
  template Var<T> max_pool_2x2(Var<T>);                                                 \
  template Var<T> upsample_nearest_2x(Var<T>);                                          \
  template Var<T> concat_channels(Var<T>, Var<T>);

MFA_INSTANTIATE_OPS(float)
MFA_INSTANTIATE_OPS(double)

}  // namespace mfa
