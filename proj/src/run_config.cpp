#include "mfa/run_config.hpp"

#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "mfa/error.hpp"
#include "mfa/tensor_io.hpp"

namespace mfa {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    N v{};
    if constexpr (std::is_floating_point_v<N>) {
      v = static_cast<N>(std::stod(value, &used));
    } else if constexpr (std::is_unsigned_v<N>) {
      if (!value.empty() && value[0] == '-') throw std::invalid_argument(value);
      v = static_cast<N>(std::stoull(value, &used));
    } else {
      v = static_cast<N>(std::stoll(value, &used));
    }
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': '" + value + "' is not a valid number");
  }
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

template <typename N, typename Member>
Setter number(Member member) {
  return [member](RunConfig& c, const std::string& key, const std::string& value) {
    std::invoke(member, c) = parse_number<N>(key, value);
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"variant", [](RunConfig& c, const std::string&, const std::string& v) { c.network.variant = parse_variant(v); }},
      {"base_channels", number<int>([](RunConfig& c) -> int& { return c.network.base_channels; })},
      {"stages", number<int>([](RunConfig& c) -> int& { return c.network.stages; })},
      {"input_size", number<int>([](RunConfig& c) -> int& { return c.network.input_size; })},
      {"learning_rate", number<double>([](RunConfig& c) -> double& { return c.train.learning_rate; })},
      {"beta1", number<double>([](RunConfig& c) -> double& { return c.train.beta1; })},
      {"beta2", number<double>([](RunConfig& c) -> double& { return c.train.beta2; })},
      {"adam_epsilon", number<double>([](RunConfig& c) -> double& { return c.train.adam_epsilon; })},
      {"batch_size", number<int>([](RunConfig& c) -> int& { return c.train.batch_size; })},
      {"max_steps", number<int>([](RunConfig& c) -> int& { return c.train.max_steps; })},
      {"seed", number<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.train.seed; })},
      {"loss_mix", number<double>([](RunConfig& c) -> double& { return c.train.loss_mix; })},
      {"eval_every", number<int>([](RunConfig& c) -> int& { return c.train.eval_every; })},
      {"phantom_count", number<int>([](RunConfig& c) -> int& { return c.phantom.count; })},
      {"phantom_size", number<int>([](RunConfig& c) -> int& { return c.phantom.size; })},
      {"phantom_organ_radius_min", number<double>([](RunConfig& c) -> double& { return c.phantom.organ_radius_min; })},
      {"phantom_organ_radius_max", number<double>([](RunConfig& c) -> double& { return c.phantom.organ_radius_max; })},
      {"phantom_lesion_radius_min", number<double>([](RunConfig& c) -> double& { return c.phantom.lesion_radius_min; })},
      {"phantom_lesion_radius_max", number<double>([](RunConfig& c) -> double& { return c.phantom.lesion_radius_max; })},
      {"phantom_lesion_contrast", number<double>([](RunConfig& c) -> double& { return c.phantom.lesion_contrast; })},
      {"phantom_noise_sigma", number<double>([](RunConfig& c) -> double& { return c.phantom.noise_sigma; })},
      {"phantom_seed", number<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.phantom.seed; })},
  };
  return table;
}

// Attributes a module's validation failure to the config file.
template <typename F>
void validated(const char* section, F&& check) {
  try {
    check();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("config ") + section + ": " + e.what());
  }
}

}  // namespace

void RunConfig::validate() const {
  validated("network", [&] { network.validate(); });
  validated("training", [&] { train.validate(); });
  validated("phantom", [&] { phantom.validate(); });
  if (phantom.size != network.input_size) {
    throw ValidationError("config key 'phantom_size' (" + std::to_string(phantom.size) +
                          ") must equal 'input_size' (" + std::to_string(network.input_size) + ")");
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "variant=" << to_string(network.variant) << "\nbase_channels=" << network.base_channels
     << "\nstages=" << network.stages << "\ninput_size=" << network.input_size
     << "\nlearning_rate=" << train.learning_rate << "\nbeta1=" << train.beta1 << "\nbeta2=" << train.beta2
     << "\nadam_epsilon=" << train.adam_epsilon << "\nbatch_size=" << train.batch_size
     << "\nmax_steps=" << train.max_steps << "\nseed=" << train.seed << "\nloss_mix=" << train.loss_mix
     << "\neval_every=" << train.eval_every << "\nphantom_count=" << phantom.count
     << "\nphantom_size=" << phantom.size << "\nphantom_organ_radius_min=" << phantom.organ_radius_min
     << "\nphantom_organ_radius_max=" << phantom.organ_radius_max
     << "\nphantom_lesion_radius_min=" << phantom.lesion_radius_min
     << "\nphantom_lesion_radius_max=" << phantom.lesion_radius_max
     << "\nphantom_lesion_contrast=" << phantom.lesion_contrast << "\nphantom_noise_sigma=" << phantom.noise_sigma
     << "\nphantom_seed=" << phantom.seed << "\n";
  return os.str();
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ValidationError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ValidationError("config key '" + key + "' appears twice");
    it->second(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ValidationError("config file " + path.string() + " does not exist");
  const auto bytes = read_file(path);
  return from_text(std::string(bytes.begin(), bytes.end()));
}

}  // namespace mfa
