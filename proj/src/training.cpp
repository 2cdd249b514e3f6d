#include "mfa/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

#include "json.hpp"
#include "mfa/error.hpp"
#include "mfa/random.hpp"

namespace mfa {

namespace {

void check_loss_inputs(const Shape& logits, const Shape& gt) {
  if (!(logits == gt)) throw ValidationError("loss: logits " + logits.str() + " and ground truth " + gt.str() + " differ");
  if (logits.c != 1) throw ValidationError("loss: expected one channel, got " + logits.str());
}

template <typename T>
void check_gt(const Tensor<T>& gt) {
  for (T g : gt.values())
    if (g != T(0) && g != T(1)) throw ValidationError("loss: ground truth value " + std::to_string(g) + " is not 0 or 1");
}

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("loss_mix must lie in [0,1], got " + std::to_string(lambda));
}

struct LossParts {
  double bce_sum = 0, inter = 0, psum = 0, gsum = 0;
};

template <typename T>
LossParts loss_parts(const Tensor<T>& z, const Tensor<T>& g) {
  LossParts s;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double x = z[i], y = g[i];
    s.bce_sum += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    const double p = 1.0 / (1.0 + std::exp(-x));
    s.inter += p * y;
    s.psum += p;
    s.gsum += y;
  }
  return s;
}

double combine(const LossParts& s, std::size_t n, double lambda) {
  const double soft_dice = 1.0 - (2.0 * s.inter + 1.0) / (s.psum + s.gsum + 1.0);
  return lambda * soft_dice + (1.0 - lambda) * s.bce_sum / static_cast<double>(n);
}

}  // namespace

template <typename T>
double segmentation_loss_value(const Tensor<T>& logits, const Tensor<T>& gt, double lambda) {
  check_lambda(lambda);
  check_loss_inputs(logits.shape(), gt.shape());
  check_gt(gt);
  return combine(loss_parts(logits, gt), logits.size(), lambda);
}

template <typename T>
Var<T> segmentation_loss(Var<T> logits, const Tensor<T>& gt, double lambda) {
  check_lambda(lambda);
  check_loss_inputs(logits.shape(), gt.shape());
  check_gt(gt);
  const LossParts parts = loss_parts(logits.value(), gt);
  Tensor<T> out(Shape{1, 1, 1, 1}, static_cast<T>(combine(parts, gt.size(), lambda)));
  auto backward = [gt, parts, lambda](Graph<T>& graph, std::size_t self) {
    const std::size_t zi = graph.node(self).inputs[0];
    const Tensor<T>& z = graph.value(zi);
    const double dout = graph.grad(self)[0];
    Tensor<T>& dz = graph.grad_accumulator(zi);
    const double n = static_cast<double>(z.size());
    const double num = 2.0 * parts.inter + 1.0;
    const double den = parts.psum + parts.gsum + 1.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(z[i])));
      const double y = gt[i];
      const double d_dice_dp = -(2.0 * y * den - num) / (den * den);
      const double d = lambda * d_dice_dp * p * (1.0 - p) + (1.0 - lambda) * (p - y) / n;
      dz[i] += static_cast<T>(dout * d);
    }
  };
  return logits.graph->record("segmentation_loss", std::move(out), {logits}, backward);
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw ValidationError("learning_rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1)) throw ValidationError("beta1 must lie in [0,1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ValidationError("beta2 must lie in [0,1)");
  if (!(adam_epsilon > 0)) throw ValidationError("adam_epsilon must be positive");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (max_steps < 0) throw ValidationError("max_steps must be >= 0");
  if (eval_every < 0) throw ValidationError("eval_every must be >= 0");
  check_lambda(loss_mix);
}

template <typename T>
OptimizerState<T> OptimizerState<T>::zeros(const ParamStore<T>& params) {
  OptimizerState s;
  for (const auto& e : params.entries()) {
    s.m.emplace_back(e.value.shape());
    s.v.emplace_back(e.value.shape());
  }
  return s;
}

template <typename T>
void adam_step(ParamStore<T>& params, OptimizerState<T>& state, const TrainConfig& cfg) {
  auto& entries = params.entries();
  if (state.m.size() != entries.size()) throw ValidationError("optimizer state does not match the parameter store");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& e = entries[k];
    if (!(state.m[k].shape() == e.value.shape())) throw ValidationError("optimizer moment shape mismatch for " + e.name);
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      const double m = cfg.beta1 * state.m[k][i] + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * state.v[k][i] + (1.0 - cfg.beta2) * g * g;
      state.m[k][i] = static_cast<T>(m);
      state.v[k][i] = static_cast<T>(v);
      const double update = cfg.learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg.adam_epsilon);
      e.value[i] = static_cast<T>(e.value[i] - update);
    }
  }
  params.zero_grad();
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
  std::ostringstream os;
  os.precision(9);
  os << "step,loss,val_dice\n";
  for (const auto& p : curve) {
    os << p.step << "," << p.loss << ",";
    if (p.val_dice) os << *p.val_dice;
    os << "\n";
  }
  return os.str();
}

namespace {

// Late in training many gradients underflow; denormal arithmetic would then dominate step time.
class FlushDenormals {
 public:
#if defined(__SSE2__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }  // FTZ | DAZ
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

Shape batch_shape(const std::vector<Sample>& samples, std::size_t count) {
  const auto& first = samples.front().image;
  return Shape{count, 1, static_cast<std::size_t>(first.height), static_cast<std::size_t>(first.width)};
}

}  // namespace

Tensor<float> stack_images(const std::vector<Sample>& samples, const std::vector<std::size_t>& order) {
  Tensor<float> t(batch_shape(samples, order.size()));
  const std::size_t plane = t.shape().plane();
  for (std::size_t b = 0; b < order.size(); ++b) {
    const auto& img = samples[order[b]].image;
    if (img.pixels.size() != plane) throw ValidationError("sample " + samples[order[b]].id + " has a different size");
    for (std::size_t i = 0; i < plane; ++i) t[b * plane + i] = static_cast<float>(img.pixels[i]);
  }
  return t;
}

Tensor<float> stack_masks(const std::vector<Sample>& samples, const std::vector<std::size_t>& order) {
  Tensor<float> t(batch_shape(samples, order.size()));
  const std::size_t plane = t.shape().plane();
  for (std::size_t b = 0; b < order.size(); ++b) {
    const auto& m = samples[order[b]].mask;
    if (m.labels.size() != plane) throw ValidationError("mask " + samples[order[b]].id + " has a different size");
    for (std::size_t i = 0; i < plane; ++i) t[b * plane + i] = m.labels[i];
  }
  return t;
}

std::vector<SegmentationMask> predict(const Network<float>& net, const std::vector<Sample>& samples, std::size_t batch) {
  FlushDenormals ftz;
  std::vector<SegmentationMask> out;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    std::vector<std::size_t> idx(std::min(batch, samples.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    for (auto& m : threshold_logits(net.forward(stack_images(samples, idx)))) out.push_back(std::move(m));
  }
  return out;
}

MetricsReport evaluate(const Network<float>& net, const std::vector<Sample>& samples) {
  std::vector<std::string> ids;
  std::vector<SegmentationMask> gts;
  for (const auto& s : samples) {
    ids.push_back(s.id);
    gts.push_back(s.mask);
  }
  return evaluate_cases(ids, predict(net, samples), gts);
}

namespace {

class BatchStream {
 public:
  BatchStream(std::size_t n, std::uint64_t seed) : order_(n), rng_(stream_seed(seed, "batches")) { reshuffle(); }

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    while (out.size() < count) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    std::iota(order_.begin(), order_.end(), 0);
    for (std::size_t i = order_.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order_[i - 1], order_[j]);
    }
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  Rng rng_;
  std::size_t pos_ = 0;
};

}  // namespace

TrainResult train(Network<float>& net, const std::vector<Sample>& train_set, const std::vector<Sample>& eval_set,
                  const TrainConfig& cfg, const ProgressFn& progress) {
  cfg.validate();
  if (train_set.empty()) throw ValidationError("training set is empty");
  const auto size = static_cast<int>(net.config().input_size);
  for (const auto& s : train_set) {
    if (s.image.width != size || s.image.height != size) {
      throw ValidationError("sample " + s.id + " is " + std::to_string(s.image.width) + "x" +
                            std::to_string(s.image.height) + " but the network expects input_size " +
                            std::to_string(size));
    }
  }

  FlushDenormals ftz;
  TrainResult result;
  auto& params = net.params();
  params.zero_grad();
  auto state = OptimizerState<float>::zeros(params);
  BatchStream stream(train_set.size(), cfg.seed);
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int step = 0; step < cfg.max_steps; ++step) {
    const auto idx = stream.next(batch);
    const Tensor<float> x = stack_images(train_set, idx);
    const Tensor<float> y = stack_masks(train_set, idx);
    double loss = 0;
    {
      Graph<float> g;
      auto l = segmentation_loss(net.forward(g, params, x), y, cfg.loss_mix);
      loss = l.value()[0];
      if (!std::isfinite(loss)) throw NumericError("non-finite loss at step " + std::to_string(step));
      g.backward(l);
    }
    adam_step(params, state, cfg);

    CurvePoint point{step, loss, std::nullopt};
    const bool last = step + 1 == cfg.max_steps;
    if (!eval_set.empty() && (last || (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0))) {
      point.val_dice = evaluate(net, eval_set).mean.dice;
    }
    result.curve.push_back(point);
    if (progress) progress(point);
  }
  result.final_val_dice = eval_set.empty() ? 0.0 : evaluate(net, eval_set).mean.dice;
  return result;
}

std::string AblationReport::to_json() const {
  using nlohmann::ordered_json;
  ordered_json j;
  j["protocol"] = {{"split", "first 80% train, last 20% validation, by index"},
                   {"seed", seed},
                   {"steps", steps},
                   {"train_cases", train_cases},
                   {"val_cases", val_cases}};
  j["columns"] = {"dice", "jaccard", "pixel_accuracy"};
  j["rows"] = ordered_json::array();
  for (const auto& r : rows) {
    j["rows"].push_back({{"variant", to_string(r.variant)},
                         {"dice", r.dice},
                         {"jaccard", r.jaccard},
                         {"pixel_accuracy", r.pixel_accuracy},
                         {"final_loss", r.final_loss},
                         {"num_params", r.num_params}});
  }
  // Published percentages on clinical CT, for orientation only.
  auto ref = [](const char* v, double d1, double j1, double a1, double d2, double j2, double a2) {
    return ordered_json{{"variant", v},
                        {"3dircadb01", {{"dice", d1}, {"jaccard", j1}, {"pixel_accuracy", a1}}},
                        {"lits2017", {{"dice", d2}, {"jaccard", j2}, {"pixel_accuracy", a2}}}};
  };
  j["reference_percent"] = {ref("baseline", 76.4, 88.7, 76.8, 65.3, 70.2, 66.1),
                            ref("ssce", 75.7, 88.9, 83.4, 65.6, 71.1, 67.7),
                            ref("csse", 76.6, 89.6, 85.6, 66.7, 71.5, 68.4),
                            ref("scse", 77.1, 90.1, 86.7, 67.1, 71.9, 69.1)};
  std::vector<std::string> order;
  std::vector<AblationRow> sorted = rows;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.dice > b.dice; });
  for (const auto& r : sorted) order.push_back(to_string(r.variant));
  j["dice_ranking"] = order;
  j["reference_dice_ranking"] = {"scse", "csse", "baseline", "ssce"};
  return j.dump(2) + "\n";
}

AblationReport run_ablation(const std::vector<Sample>& data, const NetworkConfig& net_cfg, const TrainConfig& cfg,
                            const std::function<void(Variant, const CurvePoint&)>& progress) {
  cfg.validate();
  if (data.size() < 2) throw ValidationError("ablation needs at least 2 samples, got " + std::to_string(data.size()));
  const std::size_t n_train = std::max<std::size_t>(1, data.size() * 8 / 10);
  const std::vector<Sample> train_set(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<Sample> val_set(data.begin() + static_cast<std::ptrdiff_t>(n_train), data.end());

  AblationReport report;
  report.seed = cfg.seed;
  report.steps = cfg.max_steps;
  report.train_cases = train_set.size();
  report.val_cases = val_set.size();
  for (Variant v : {Variant::baseline, Variant::ssce, Variant::csse, Variant::scse}) {
    NetworkConfig c = net_cfg;
    c.variant = v;
    auto net = Network<float>::build(c, cfg.seed);
    ProgressFn fn;
    if (progress) fn = [&](const CurvePoint& p) { progress(v, p); };
    const auto result = train(net, train_set, {}, cfg, fn);
    const auto metrics = evaluate(net, val_set);
    AblationRow row;
    row.variant = v;
    row.dice = metrics.mean.dice;
    row.jaccard = metrics.mean.jaccard;
    row.pixel_accuracy = metrics.mean.pixel_accuracy;
    row.final_loss = result.curve.empty() ? 0.0 : result.curve.back().loss;
    row.num_params = net.num_params();
    report.rows.push_back(row);
  }
  return report;
}

template Var<float> segmentation_loss(Var<float>, const Tensor<float>&, double);
template Var<double> segmentation_loss(Var<double>, const Tensor<double>&, double);
template double segmentation_loss_value(const Tensor<float>&, const Tensor<float>&, double);
template double segmentation_loss_value(const Tensor<double>&, const Tensor<double>&, double);
template struct OptimizerState<float>;
template struct OptimizerState<double>;
template void adam_step(ParamStore<float>&, OptimizerState<float>&, const TrainConfig&);
template void adam_step(ParamStore<double>&, OptimizerState<double>&, const TrainConfig&);

}  // namespace mfa
