#include "mfa/gradcheck_suite.hpp"

#include <chrono>
#include <functional>

#include "json.hpp"
#include "mfa/attention.hpp"
#include "mfa/grad_check.hpp"
#include "mfa/network.hpp"
#include "mfa/ops.hpp"
#include "mfa/random.hpp"
#include "mfa/training.hpp"

namespace mfa {

namespace {

constexpr double kOpThreshold = 1e-5;
constexpr double kNetworkThreshold = 1e-4;

using OpFn = std::function<Var<double>(Graph<double>&, ParamStore<double>&)>;

class Suite {
 public:
  explicit Suite(std::uint64_t seed) : seed_(seed) {}

  Tensor<double> uniform(const std::string& tag, Shape s, double lo = -1.0, double hi = 1.0) const {
    Rng rng(stream_seed(seed_, tag));
    Tensor<double> t(s);
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
  }

  // Magnitudes in [0.05, 1] so ReLU inputs sit away from the kink.
  Tensor<double> signed_away_from_zero(const std::string& tag, Shape s) const {
    Rng rng(stream_seed(seed_, tag));
    Tensor<double> t(s);
    for (auto& v : t.values()) {
      const double mag = rng.uniform(0.05, 1.0);
      v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
  }

  // Loss is sum(op * R) for a fixed random projection R.
  void op(const std::string& name, ParamStore<double>& store, const OpFn& fn) {
    LossBuilder builder = [&](Graph<double>& g, ParamStore<double>& p) {
      Var<double> out = fn(g, p);
      return sum(mul(out, g.constant(uniform(name + "/proj", out.shape()))));
    };
    GradCheckOptions opt;
    opt.max_coords_per_param = 64;
    opt.seed = stream_seed(seed_, name + "/coords");
    record(name, grad_check(builder, store, opt), kOpThreshold);
  }

  void record(const std::string& name, const GradCheckResult& r, double threshold) {
    items.push_back({name, r.max_relative_error, threshold, r.checked, r.skipped_at_kinks, r.worst_coordinate});
  }

  std::uint64_t seed() const { return seed_; }
  std::vector<SuiteItem> items;

 private:
  std::uint64_t seed_;
};

Var<double> P(Graph<double>& g, ParamStore<double>& p, const char* name) { return g.parameter(p, name); }

}  // namespace

SuiteReport run_gradcheck_suite(std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  Suite s(seed);
  {
    ParamStore<double> p;
    p.add("x", s.uniform("conv3/x", Shape{2, 2, 4, 4}));
    p.add("w", s.uniform("conv3/w", Shape{3, 2, 3, 3}));
    p.add("b", s.uniform("conv3/b", Shape{3, 1, 1, 1}));
    s.op("conv2d_3x3_pad1", p, [](auto& g, auto& q) { return conv2d(P(g, q, "x"), P(g, q, "w"), P(g, q, "b"), 1, 1); });
  }
  {
    ParamStore<double> p;
    p.add("x", s.uniform("convs/x", Shape{1, 2, 5, 4}));
    p.add("w", s.uniform("convs/w", Shape{2, 2, 2, 3}));
    p.add("b", s.uniform("convs/b", Shape{2, 1, 1, 1}));
    s.op("conv2d_strided", p, [](auto& g, auto& q) { return conv2d(P(g, q, "x"), P(g, q, "w"), P(g, q, "b"), 2, 1); });
  }
  {
    ParamStore<double> p;
    p.add("x", s.uniform("conv1/x", Shape{2, 4, 3, 3}));
    p.add("w", s.uniform("conv1/w", Shape{2, 4, 1, 1}));
    p.add("b", s.uniform("conv1/b", Shape{2, 1, 1, 1}));
    s.op("conv2d_1x1", p, [](auto& g, auto& q) { return conv2d(P(g, q, "x"), P(g, q, "w"), P(g, q, "b"), 1, 0); });
  }
  {
    ParamStore<double> p;
    p.add("x", s.uniform("linear/x", Shape{3, 4, 1, 1}));
    p.add("w", s.uniform("linear/w", Shape{4, 2, 1, 1}));
    p.add("b", s.uniform("linear/b", Shape{2, 1, 1, 1}));
    s.op("linear", p, [](auto& g, auto& q) { return linear(P(g, q, "x"), P(g, q, "w"), P(g, q, "b")); });
  }
  {
    ParamStore<double> p;
    p.add("x", s.uniform("gap/x", Shape{2, 3, 3, 4}));
    s.op("global_avg_pool", p, [](auto& g, auto& q) { return global_avg_pool(P(g, q, "x")); });
  }
  {
    ParamStore<double> p;
    p.add("x", s.signed_away_from_zero("relu/x", Shape{2, 2, 3, 3}));
    s.op("relu", p, [](auto& g, auto& q) { return relu(P(g, q, "x")); });
  }
  {
    ParamStore<double> p;
    p.add("x", s.uniform("sigmoid/x", Shape{2, 2, 3, 3}, -4, 4));
    s.op("sigmoid", p, [](auto& g, auto& q) { return sigmoid(P(g, q, "x")); });
  }
  {
    ParamStore<double> p;
    p.add("x", s.uniform("bmc/x", Shape{2, 3, 3, 2}));
    p.add("gate", s.uniform("bmc/gate", Shape{2, 3, 1, 1}));
    s.op("broadcast_mul_channel", p, [](auto& g, auto& q) { return broadcast_mul(P(g, q, "x"), P(g, q, "gate")); });
  }
  {
    ParamStore<double> p;
    p.add("x", s.uniform("bms/x", Shape{2, 3, 3, 2}));
    p.add("gate", s.uniform("bms/gate", Shape{2, 1, 3, 2}));
    s.op("broadcast_mul_spatial", p, [](auto& g, auto& q) { return broadcast_mul(P(g, q, "x"), P(g, q, "gate")); });
  }
  {
    ParamStore<double> p;
    p.add("a", s.uniform("add/a", Shape{1, 2, 3, 3}));
    p.add("b", s.uniform("add/b", Shape{1, 2, 3, 3}));
    s.op("add", p, [](auto& g, auto& q) { return add(P(g, q, "a"), P(g, q, "b")); });
  }
  {
    ParamStore<double> p;
    p.add("a", s.uniform("mul/a", Shape{1, 2, 3, 3}));
    p.add("b", s.uniform("mul/b", Shape{1, 2, 3, 3}));
    s.op("mul", p, [](auto& g, auto& q) { return mul(P(g, q, "a"), P(g, q, "b")); });
  }
  {
    ParamStore<double> p;
    p.add("x", s.uniform("sum/x", Shape{2, 2, 2, 2}));
    s.op("sum", p, [](auto& g, auto& q) { return sum(mul(P(g, q, "x"), P(g, q, "x"))); });
  }
  {
    ParamStore<double> p;
    p.add("x", s.uniform("pool/x", Shape{2, 2, 4, 4}));
    s.op("max_pool_2x2", p, [](auto& g, auto& q) { return max_pool_2x2(P(g, q, "x")); });
  }
  {
    ParamStore<double> p;
    p.add("x", s.uniform("up/x", Shape{2, 2, 2, 3}));
    s.op("upsample_nearest_2x", p, [](auto& g, auto& q) { return upsample_nearest_2x(P(g, q, "x")); });
  }
  {
    ParamStore<double> p;
    p.add("a", s.uniform("cat/a", Shape{2, 2, 3, 3}));
    p.add("b", s.uniform("cat/b", Shape{2, 1, 3, 3}));
    s.op("concat_channels", p, [](auto& g, auto& q) { return concat_channels(P(g, q, "a"), P(g, q, "b")); });
  }
  {
    ParamStore<double> p;
    p.add("z", s.uniform("loss/z", Shape{2, 1, 3, 3}, -3, 3));
    Tensor<double> gt(Shape{2, 1, 3, 3});
    Rng rng(stream_seed(seed, "loss/gt"));
    for (auto& v : gt.values()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    s.op("segmentation_loss", p, [gt](auto& g, auto& q) { return segmentation_loss(P(g, q, "z"), gt, 0.5); });
  }

  // Attention blocks. Hidden biases are lifted so the bottleneck ReLU units are active.
  auto params = ScseParams<double>::init(4, stream_seed(seed, "blocks/init"));
  params.ssce.b1 = s.uniform("blocks/b1", params.ssce.b1.shape(), 0.2, 0.5);
  params.ssce.b2 = s.uniform("blocks/b2", params.ssce.b2.shape());
  params.csse.b_sq = s.uniform("blocks/b_sq", params.csse.b_sq.shape());
  auto block_store = [&] {
    ParamStore<double> p;
    p.add("u", s.uniform("blocks/u", Shape{2, 4, 3, 3}));
    register_params(p, "blk", params);
    return p;
  };
  {
    auto p = block_store();
    s.op("ssce_block", p, [](auto& g, auto& q) { return ssce_forward(P(g, q, "u"), bind_ssce(g, q, "blk.ssce")); });
  }
  {
    auto p = block_store();
    s.op("csse_block", p, [](auto& g, auto& q) { return csse_forward(P(g, q, "u"), bind_csse(g, q, "blk.csse")); });
  }
  {
    auto p = block_store();
    s.op("scse_block", p, [](auto& g, auto& q) { return scse_forward(P(g, q, "u"), bind_scse(g, q, "blk")); });
  }

  {
    NetworkConfig cfg;
    cfg.variant = Variant::scse;
    cfg.base_channels = 2;
    cfg.input_size = 16;
    auto net = Network<double>::build(cfg, stream_seed(seed, "tiny/init"));
    const auto x = s.uniform("tiny/x", Shape{2, 1, 16, 16}, 0, 1);
    const auto proj = s.uniform("tiny/proj", Shape{2, 1, 16, 16});
    LossBuilder builder = [&](Graph<double>& g, ParamStore<double>& p) {
      return sum(mul(net.forward(g, p, x), g.constant(proj)));
    };
    GradCheckOptions opt;
    opt.max_coords_per_param = 6;
    // Deep-layer gradients are ~1e-5 against an O(1) loss; a 1e-6 step is rounding-limited there.
    opt.eps = 1e-4;
    opt.seed = stream_seed(seed, "tiny/coords");
    s.record("tiny_network_scse", grad_check(builder, net.params(), opt), kNetworkThreshold);
  }

  SuiteReport report;
  report.seed = seed;
  report.items = std::move(s.items);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

bool SuiteReport::passed() const {
  for (const auto& item : items)
    if (!item.passed()) return false;
  return !items.empty();
}

std::vector<std::string> SuiteReport::failures() const {
  std::vector<std::string> out;
  for (const auto& item : items)
    if (!item.passed()) out.push_back(item.name);
  return out;
}

std::string SuiteReport::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = "gradcheck";
  j["seed"] = seed;
  j["precision"] = "float64";
  j["items"] = nlohmann::ordered_json::array();
  for (const auto& item : items) {
    j["items"].push_back({{"name", item.name},
                          {"max_relative_error", item.max_relative_error},
                          {"threshold", item.threshold},
                          {"checked", item.checked},
                          {"skipped_at_kinks", item.skipped_at_kinks},
                          {"worst_coordinate", item.worst_coordinate},
                          {"passed", item.passed()}});
  }
  j["passed"] = passed();
  return j.dump(2) + "\n";
}

}  // namespace mfa
