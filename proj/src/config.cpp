#include "spoter/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "spoter/errors.hpp"

namespace spoter {

void RunConfig::validate() const {
  train.validate();
  vsct.validate();
  model.validate();
}

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::map<std::string, std::string> parse_key_value_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::map<std::string, std::string> values;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    }
    if (!values.emplace(key, value).second) {
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key +
                        "'");
    }
  }
  return values;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + value + "'");
}

int parse_int(const std::string& key, const std::string& value) {
  int out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + value + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double out = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
  }
}

RunConfig apply_config_values(const std::map<std::string, std::string>& values, RunConfig base) {
  using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

  static const std::map<std::string, Setter> setters = {
      {"epochs", [](RunConfig& c, auto& k, auto& v) { c.train.epochs = parse_int(k, v); }},
      {"learning_rate",
       [](RunConfig& c, auto& k, auto& v) { c.train.learning_rate = parse_double(k, v); }},
      {"momentum", [](RunConfig& c, auto& k, auto& v) { c.train.momentum = parse_double(k, v); }},
      {"weight_decay",
       [](RunConfig& c, auto& k, auto& v) { c.train.weight_decay = parse_double(k, v); }},
      {"seed",
       [](RunConfig& c, auto& k, auto& v) {
         c.train.seed = static_cast<std::uint64_t>(parse_int(k, v));
       }},
      {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = parse_int(k, v); }},
      {"normalization",
       [](RunConfig& c, auto& k, auto& v) { c.train.use_normalization = parse_bool(k, v); }},
      {"augmentation",
       [](RunConfig& c, auto& k, auto& v) { c.train.use_augmentation = parse_bool(k, v); }},
      {"balanced_sampling",
       [](RunConfig& c, auto& k, auto& v) { c.train.use_balanced_sampling = parse_bool(k, v); }},
      {"vsct", [](RunConfig& c, auto& k, auto& v) { c.train.use_vsct = parse_bool(k, v); }},
      {"vsct_gamma", [](RunConfig& c, auto& k, auto& v) { c.vsct.gamma = parse_double(k, v); }},
      {"vsct_tau", [](RunConfig& c, auto& k, auto& v) { c.vsct.tau = parse_double(k, v); }},
      {"vsct_tau_base",
       [](RunConfig& c, auto&, auto& v) { c.vsct.tau_base = parse_tau_base(v); }},
      {"aug_rotate_max_deg",
       [](RunConfig& c, auto& k, auto& v) {
         c.train.base_augmentation.rotate_max_deg = parse_double(k, v);
       }},
      {"aug_squeeze_max_frac",
       [](RunConfig& c, auto& k, auto& v) {
         c.train.base_augmentation.squeeze_max_frac = parse_double(k, v);
       }},
      {"aug_perspective_max_frac",
       [](RunConfig& c, auto& k, auto& v) {
         c.train.base_augmentation.perspective_max_frac = parse_double(k, v);
       }},
      {"aug_arm_joint_max_deg",
       [](RunConfig& c, auto& k, auto& v) {
         c.train.base_augmentation.arm_joint_max_deg = parse_double(k, v);
       }},
      {"aug_apply_prob",
       [](RunConfig& c, auto& k, auto& v) {
         c.train.base_augmentation.apply_prob = parse_double(k, v);
       }},
      {"vsct_rotate_max_deg",
       [](RunConfig& c, auto& k, auto& v) {
         c.vsct.vsct_augmentation.rotate_max_deg = parse_double(k, v);
       }},
      {"vsct_squeeze_max_frac",
       [](RunConfig& c, auto& k, auto& v) {
         c.vsct.vsct_augmentation.squeeze_max_frac = parse_double(k, v);
       }},
      {"vsct_perspective_max_frac",
       [](RunConfig& c, auto& k, auto& v) {
         c.vsct.vsct_augmentation.perspective_max_frac = parse_double(k, v);
       }},
      {"vsct_arm_joint_max_deg",
       [](RunConfig& c, auto& k, auto& v) {
         c.vsct.vsct_augmentation.arm_joint_max_deg = parse_double(k, v);
       }},
      {"vsct_apply_prob",
       [](RunConfig& c, auto& k, auto& v) {
         c.vsct.vsct_augmentation.apply_prob = parse_double(k, v);
       }},
      {"encoder_layers",
       [](RunConfig& c, auto& k, auto& v) { c.model.encoder_layers = parse_int(k, v); }},
      {"decoder_layers",
       [](RunConfig& c, auto& k, auto& v) { c.model.decoder_layers = parse_int(k, v); }},
      {"heads", [](RunConfig& c, auto& k, auto& v) { c.model.heads = parse_int(k, v); }},
      {"ff_dim", [](RunConfig& c, auto& k, auto& v) { c.model.ff_dim = parse_int(k, v); }},
      {"max_frames",
       [](RunConfig& c, auto& k, auto& v) { c.model.max_frames = parse_int(k, v); }},
      {"dropout_rate",
       [](RunConfig& c, auto& k, auto& v) { c.model.dropout_rate = parse_double(k, v); }},
      {"init_mode", [](RunConfig& c, auto&, auto& v) { c.init_mode = parse_init_mode(v); }},
      {"subsample_long",
       [](RunConfig& c, auto& k, auto& v) { c.subsample_long = parse_bool(k, v); }},
      {"train_data", [](RunConfig& c, auto&, auto& v) { c.train_data_path = v; }},
      {"val_data", [](RunConfig& c, auto&, auto& v) { c.val_data_path = v; }},
  };

  for (const auto& [key, value] : values) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(base, key, value);
  }
  return base;
}

std::string resolved_config_text(const RunConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  const auto& t = cfg.train;
  const auto& v = cfg.vsct;
  const auto& m = cfg.model;
  auto b = [](bool x) { return x ? "true" : "false"; };
  out << "epochs = " << t.epochs << '\n'
      << "learning_rate = " << t.learning_rate << '\n'
      << "momentum = " << t.momentum << '\n'
      << "weight_decay = " << t.weight_decay << '\n'
      << "seed = " << t.seed << '\n'
      << "batch_size = " << t.batch_size << '\n'
      << "normalization = " << b(t.use_normalization) << '\n'
      << "augmentation = " << b(t.use_augmentation) << '\n'
      << "balanced_sampling = " << b(t.use_balanced_sampling) << '\n'
      << "vsct = " << b(t.use_vsct) << '\n'
      << "vsct_gamma = " << v.gamma << '\n'
      << "vsct_tau = " << v.tau << '\n'
      << "vsct_tau_base = " << to_string(v.tau_base) << '\n'
      << "aug_rotate_max_deg = " << t.base_augmentation.rotate_max_deg << '\n'
      << "aug_squeeze_max_frac = " << t.base_augmentation.squeeze_max_frac << '\n'
      << "aug_perspective_max_frac = " << t.base_augmentation.perspective_max_frac << '\n'
      << "aug_arm_joint_max_deg = " << t.base_augmentation.arm_joint_max_deg << '\n'
      << "aug_apply_prob = " << t.base_augmentation.apply_prob << '\n'
      << "vsct_rotate_max_deg = " << v.vsct_augmentation.rotate_max_deg << '\n'
      << "vsct_squeeze_max_frac = " << v.vsct_augmentation.squeeze_max_frac << '\n'
      << "vsct_perspective_max_frac = " << v.vsct_augmentation.perspective_max_frac << '\n'
      << "vsct_arm_joint_max_deg = " << v.vsct_augmentation.arm_joint_max_deg << '\n'
      << "vsct_apply_prob = " << v.vsct_augmentation.apply_prob << '\n'
      << "encoder_layers = " << m.encoder_layers << '\n'
      << "decoder_layers = " << m.decoder_layers << '\n'
      << "heads = " << m.heads << '\n'
      << "ff_dim = " << m.ff_dim << '\n'
      << "max_frames = " << m.max_frames << '\n'
      << "dropout_rate = " << m.dropout_rate << '\n'
      << "init_mode = " << to_string(cfg.init_mode) << '\n'
      << "subsample_long = " << b(cfg.subsample_long) << '\n';
  if (!cfg.train_data_path.empty()) out << "train_data = " << cfg.train_data_path << '\n';
  if (!cfg.val_data_path.empty()) out << "val_data = " << cfg.val_data_path << '\n';
  return out.str();
}

}  // namespace spoter
