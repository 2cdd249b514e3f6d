#include "mfa/network.hpp"

#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

#include "mfa/attention.hpp"
#include "mfa/ops.hpp"
#include "mfa/random.hpp"
#include "mfa/tensor_io.hpp"

namespace mfa {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::ssce: return "ssce";
    case Variant::csse: return "csse";
    case Variant::scse: return "scse";
  }
  return "?";
}

Variant parse_variant(const std::string& text) {
  if (text == "baseline") return Variant::baseline;
  if (text == "ssce") return Variant::ssce;
  if (text == "csse") return Variant::csse;
  if (text == "scse") return Variant::scse;
  throw ValidationError("variant must be one of baseline|ssce|csse|scse, got '" + text + "'");
}

void NetworkConfig::validate() const {
  if (stages != 4) throw ValidationError("stages must be 4, got " + std::to_string(stages));
  if (base_channels < 2 || base_channels % 2 != 0) {
    throw ValidationError("base_channels must be even and >= 2, got " + std::to_string(base_channels));
  }
  if (in_channels < 1) throw ValidationError("in_channels must be >= 1");
  if (out_channels < 1) throw ValidationError("out_channels must be >= 1");
  const int divisor = 1 << stages;
  if (input_size < divisor || input_size % divisor != 0) {
    throw ValidationError("input_size must be a positive multiple of 2^stages = " + std::to_string(divisor) +
                          ", got " + std::to_string(input_size));
  }
}

std::string NetworkConfig::to_text() const {
  std::ostringstream out;
  out << "variant=" << to_string(variant) << "\n"
      << "base_channels=" << base_channels << "\n"
      << "stages=" << stages << "\n"
      << "in_channels=" << in_channels << "\n"
      << "out_channels=" << out_channels << "\n"
      << "input_size=" << input_size << "\n";
  return out.str();
}

NetworkConfig NetworkConfig::from_text(const std::string& text) {
  NetworkConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError("config line without '=': " + line);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (!seen.insert(key).second) throw ValidationError("duplicate config key '" + key + "'");
    auto as_int = [&] {
      try {
        std::size_t used = 0;
        int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
      } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "' expects an integer, got '" + value + "'");
      }
    };
    if (key == "variant") {
      cfg.variant = parse_variant(value);
    } else if (key == "base_channels") {
      cfg.base_channels = as_int();
    } else if (key == "stages") {
      cfg.stages = as_int();
    } else if (key == "in_channels") {
      cfg.in_channels = as_int();
    } else if (key == "out_channels") {
      cfg.out_channels = as_int();
    } else if (key == "input_size") {
      cfg.input_size = as_int();
    } else {
      throw ValidationError("unknown network config key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

namespace {

std::string attention_prefix(Variant v, int stage) { return to_string(v) + std::to_string(stage); }

template <typename T>
void add_conv(ParamStore<T>& store, std::vector<LayerSpec>& plan, int stage, LayerKind kind, const std::string& name,
              std::size_t cin, std::size_t cout, std::size_t k, std::uint64_t seed) {
  // He-uniform for ReLU stacks without normalization.
  const double bound = std::sqrt(6.0 / static_cast<double>(cin * k * k));
  Rng rng(stream_seed(seed, name + ".w"));
  Tensor<T> w(Shape{cout, cin, k, k});
  for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  store.add(name + ".w", std::move(w));
  store.add(name + ".b", Tensor<T>(Shape{cout, 1, 1, 1}));
  plan.push_back(LayerSpec{stage, kind, {name + ".w", name + ".b"}});
}

template <typename T>
Var<T> conv(Graph<T>& g, ParamStore<T>& store, Var<T> x, const std::string& name, std::size_t padding) {
  return conv2d(x, g.parameter(store, name + ".w"), g.parameter(store, name + ".b"), 1, padding);
}

template <typename T>
Var<T> conv_relu(Graph<T>& g, ParamStore<T>& store, Var<T> x, const std::string& name) {
  return relu(conv(g, store, x, name, 1));
}

}  // namespace

template <typename T>
Network<T> Network<T>::build(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Network net;
  net.config_ = config;
  auto& store = net.params_;
  auto& plan = net.plan_;

  std::size_t prev = static_cast<std::size_t>(config.in_channels);
  for (int i = 0; i < config.stages; ++i) {
    const std::size_t c = config.width(i);
    const std::string enc = "enc" + std::to_string(i);
    add_conv(store, plan, i, LayerKind::conv3x3, enc + ".conv1", prev, c, 3, seed);
    add_conv(store, plan, i, LayerKind::conv3x3, enc + ".conv2", c, c, 3, seed);
    const std::string prefix = attention_prefix(config.variant, i);
    const std::size_t before = store.size();
    switch (config.variant) {
      case Variant::baseline: break;
      case Variant::ssce:
        register_params(store, prefix, SsceParams<T>::init(c, stream_seed(seed, prefix)));
        break;
      case Variant::csse:
        register_params(store, prefix, CsseParams<T>::init(c, stream_seed(seed, prefix)));
        break;
      case Variant::scse:
        register_params(store, prefix, ScseParams<T>::init(c, stream_seed(seed, prefix)));
        break;
    }
    if (store.size() > before) {
      LayerSpec spec{i, LayerKind::attention, {}};
      for (std::size_t k = before; k < store.size(); ++k) spec.params.push_back(store.entries()[k].name);
      plan.push_back(std::move(spec));
    }
    plan.push_back(LayerSpec{i, LayerKind::maxpool, {}});
    prev = c;
  }

  const int bottom = config.stages;
  add_conv(store, plan, bottom, LayerKind::conv3x3, "bottleneck.conv1", config.width(bottom - 1), config.width(bottom), 3,
           seed);
  add_conv(store, plan, bottom, LayerKind::conv3x3, "bottleneck.conv2", config.width(bottom), config.width(bottom), 3,
           seed);

  for (int i = config.stages - 1; i >= 0; --i) {
    const std::size_t c = config.width(i);
    const std::string dec = "dec" + std::to_string(i);
    plan.push_back(LayerSpec{i, LayerKind::upsample, {}});
    add_conv(store, plan, i, LayerKind::up_conv, dec + ".up", config.width(i + 1), c, 3, seed);
    plan.push_back(LayerSpec{i, LayerKind::concat, {}});
    add_conv(store, plan, i, LayerKind::conv3x3, dec + ".conv1", 2 * c, c, 3, seed);
    add_conv(store, plan, i, LayerKind::conv3x3, dec + ".conv2", c, c, 3, seed);
  }
  add_conv(store, plan, -1, LayerKind::head, "head", config.width(0), static_cast<std::size_t>(config.out_channels), 1,
           seed);
  return net;
}

template <typename T>
Var<T> Network<T>::forward(Graph<T>& g, ParamStore<T>& store, const Tensor<T>& batch) const {
  const Shape& s = batch.shape();
  const auto size = static_cast<std::size_t>(config_.input_size);
  if (s.c != static_cast<std::size_t>(config_.in_channels) || s.h != size || s.w != size) {
    throw ValidationError("network expects input [N," + std::to_string(config_.in_channels) + "," +
                          std::to_string(size) + "," + std::to_string(size) + "], got " + s.str());
  }

  std::vector<Var<T>> skips;
  Var<T> x = g.constant(batch);
  for (int i = 0; i < config_.stages; ++i) {
    const std::string enc = "enc" + std::to_string(i);
    x = conv_relu(g, store, x, enc + ".conv1");
    x = conv_relu(g, store, x, enc + ".conv2");
    const std::string prefix = attention_prefix(config_.variant, i);
    switch (config_.variant) {
      case Variant::baseline: break;
      case Variant::ssce: x = ssce_forward(x, bind_ssce(g, store, prefix)); break;
      case Variant::csse: x = csse_forward(x, bind_csse(g, store, prefix)); break;
      case Variant::scse: x = scse_forward(x, bind_scse(g, store, prefix)); break;
    }
    skips.push_back(x);
    x = max_pool_2x2(x);
  }
  x = conv_relu(g, store, x, "bottleneck.conv1");
  x = conv_relu(g, store, x, "bottleneck.conv2");
  for (int i = config_.stages - 1; i >= 0; --i) {
    const std::string dec = "dec" + std::to_string(i);
    x = conv_relu(g, store, upsample_nearest_2x(x), dec + ".up");
    x = concat_channels(skips[static_cast<std::size_t>(i)], x);
    x = conv_relu(g, store, x, dec + ".conv1");
    x = conv_relu(g, store, x, dec + ".conv2");
  }
  return conv(g, store, x, "head", 0);
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& batch) const {
  Graph<T> g;
  // The graph only reads parameters here; no gradients are accumulated.
  auto& store = const_cast<ParamStore<T>&>(params_);
  return forward(g, store, batch).value();
}

template <typename T>
std::vector<std::string> Network<T>::attention_param_names() const {
  std::vector<std::string> names;
  for (const auto& layer : plan_)
    if (layer.kind == LayerKind::attention) names.insert(names.end(), layer.params.begin(), layer.params.end());
  return names;
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
  Network<U> out;
  out.config_ = config_;
  out.plan_ = plan_;
  for (const auto& e : params_.entries()) out.params_.add(e.name, e.value.template cast<U>());
  return out;
}

namespace {

constexpr char kCheckpointMagic[4] = {'M', 'F', 'A', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;
const std::string kConfigRecord = "__config";

std::uint64_t byte_sum(const std::vector<std::uint8_t>& bytes, std::size_t end) {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < end; ++i) s += bytes[i];
  return s;
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

std::string get_string(const std::vector<std::uint8_t>& in, std::size_t& pos, const char* what) {
  const std::uint32_t len = get_u32(in, pos);
  if (pos + len > in.size()) throw ValidationError(std::string("checkpoint ") + what + " truncated");
  std::string s(in.begin() + static_cast<std::ptrdiff_t>(pos), in.begin() + static_cast<std::ptrdiff_t>(pos + len));
  pos += len;
  return s;
}

struct CheckpointContents {
  NetworkConfig config;
  std::vector<std::string> names;
  std::vector<std::size_t> offsets;  // TNSR start per record
  std::vector<std::uint8_t> bytes;
};

CheckpointContents parse_checkpoint(const std::filesystem::path& path) {
  CheckpointContents out;
  out.bytes = read_file(path);
  const auto& b = out.bytes;
  if (b.size() < 20 || std::memcmp(b.data(), kCheckpointMagic, 4) != 0) {
    throw ValidationError("'" + path.string() + "' is not a checkpoint (bad magic or too short)");
  }
  std::size_t tail = b.size() - 8;
  if (get_u64(b, tail) != byte_sum(b, b.size() - 8)) {
    throw ValidationError("checkpoint '" + path.string() + "' checksum mismatch (corrupt or truncated)");
  }
  const std::size_t end = b.size() - 8;
  std::size_t pos = 4;
  const std::uint32_t version = get_u32(b, pos);
  if (version != kCheckpointVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = get_u32(b, pos);
  if (count == 0) throw ValidationError("checkpoint has no records");
  for (std::uint32_t r = 0; r < count; ++r) {
    if (pos >= end) throw ValidationError("checkpoint truncated before record " + std::to_string(r));
    const std::string name = get_string(b, pos, "record name");
    if (r == 0) {
      if (name != kConfigRecord) throw ValidationError("first checkpoint record must be '__config', got '" + name + "'");
      out.config = NetworkConfig::from_text(get_string(b, pos, "config text"));
      continue;
    }
    out.names.push_back(name);
    out.offsets.push_back(pos);
    try {
      // Skip over the payload; decoded again on demand in the target precision.
      if (peek_dtype(b, pos) == DType::f32) {
        (void)decode_tensor<float>(b, pos);
      } else {
        (void)decode_tensor<double>(b, pos);
      }
    } catch (const ValidationError& e) {
      throw ValidationError("checkpoint record '" + name + "': " + e.what());
    }
    if (pos > end) throw ValidationError("checkpoint record '" + name + "' runs into the checksum");
  }
  if (pos != end) throw ValidationError("checkpoint has trailing bytes after the last record");
  return out;
}

}  // namespace

template <typename T>
void save_checkpoint(const Network<T>& net, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(net.params().size() + 1));
  put_string(out, kConfigRecord);
  put_string(out, net.config().to_text());
  for (const auto& e : net.params().entries()) {
    put_string(out, e.name);
    encode_tensor(e.value, out);
  }
  put_u64(out, byte_sum(out, out.size()));
  write_file_atomic(path, out);
}

template <typename T>
void load_parameters(const std::filesystem::path& path, Network<T>& net) {
  const CheckpointContents ck = parse_checkpoint(path);
  std::set<std::string> present;
  for (std::size_t r = 0; r < ck.names.size(); ++r) {
    const std::string& name = ck.names[r];
    if (!present.insert(name).second) throw ValidationError("checkpoint record '" + name + "' appears twice");
    if (!net.params().contains(name)) {
      throw ValidationError("checkpoint record '" + name + "' has no matching parameter in a " +
                            to_string(net.config().variant) + " network");
    }
  }
  for (const auto& e : net.params().entries()) {
    if (present.count(e.name) == 0) throw ValidationError("checkpoint is missing parameter '" + e.name + "'");
  }
  for (std::size_t r = 0; r < ck.names.size(); ++r) {
    std::size_t pos = ck.offsets[r];
    Tensor<T> value = decode_tensor<T>(ck.bytes, pos);
    auto& entry = net.params().entry(ck.names[r]);
    if (!(value.shape() == entry.value.shape())) {
      throw ValidationError("checkpoint record '" + ck.names[r] + "' has shape " + value.shape().str() +
                            ", network expects " + entry.value.shape().str());
    }
    entry.value = std::move(value);
  }
}

template <typename T>
Network<T> load_checkpoint(const std::filesystem::path& path) {
  const CheckpointContents ck = parse_checkpoint(path);
  Network<T> net = Network<T>::build(ck.config, 0);
  load_parameters(path, net);
  return net;
}

template class Network<float>;
template class Network<double>;
template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template void save_checkpoint(const Network<float>&, const std::filesystem::path&);
template void save_checkpoint(const Network<double>&, const std::filesystem::path&);
template Network<float> load_checkpoint(const std::filesystem::path&);
template Network<double> load_checkpoint(const std::filesystem::path&);
template void load_parameters(const std::filesystem::path&, Network<float>&);
template void load_parameters(const std::filesystem::path&, Network<double>&);

}  // namespace mfa
