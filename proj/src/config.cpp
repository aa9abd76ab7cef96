#include "shot/config.hpp"

#include <openssl/evp.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <utility>

#include "shot/error.hpp"

namespace shot {

ModelDims RunConfig::dims(std::size_t input_dim, std::size_t num_classes) const {
  return ModelDims{input_dim, hidden, bottleneck, num_classes};
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("config: " + key + ": cannot parse '" + raw + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "off" || s == "no") return false;
  throw ConfigError("config: " + key + ": expected a boolean, got '" + raw + "'");
}

std::optional<bool> parse_auto_bool(const std::string& key, const std::string& raw) {
  if (trim(raw) == "auto") return std::nullopt;
  return parse_bool(key, raw);
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  const std::string s = trim(raw);
  if (s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, item));
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(bool v) { return v ? "true" : "false"; }

std::string fmt(std::optional<bool> v) { return v ? fmt(*v) : "auto"; }

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

struct Entry {
  std::string key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// `field` is a generic lambda returning a reference into the config.
template <typename T, typename F>
Entry scalar(std::string name, F field) {
  return Entry{std::move(name),
               [field](RunConfig& c, const std::string& k, const std::string& v) {
                 if constexpr (std::is_same_v<T, bool>) {
                   field(c) = parse_bool(k, v);
                 } else {
                   field(c) = parse_number<T>(k, v);
                 }
               },
               [field](const RunConfig& c) {
                 if constexpr (std::is_floating_point_v<T> || std::is_same_v<T, bool>) {
                   return fmt(field(c));
                 } else {
                   return std::to_string(field(c));
                 }
               }};
}

template <typename T, typename F>
Entry list(std::string name, F field) {
  return Entry{std::move(name),
               [field](RunConfig& c, const std::string& k, const std::string& v) { field(c) = parse_list<T>(k, v); },
               [field](const RunConfig& c) { return fmt_list(field(c)); }};
}

#define FIELD(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      scalar<std::size_t>("data.num_classes", FIELD(task.blobs.num_classes)),
      scalar<std::size_t>("data.n_per_class", FIELD(task.blobs.n_per_class)),
      scalar<std::size_t>("data.dim", FIELD(task.blobs.dim)),
      scalar<double>("data.class_sep", FIELD(task.blobs.class_sep)),
      scalar<double>("data.noise_sigma", FIELD(task.blobs.noise_sigma)),
      scalar<double>("data.source_rotation_deg", FIELD(task.source_shift.rotation_deg)),
      list<double>("data.source_translation", FIELD(task.source_shift.translation)),
      scalar<double>("data.source_scale", FIELD(task.source_shift.scale)),
      scalar<double>("data.source_noise_sigma", FIELD(task.source_shift.noise_sigma)),
      scalar<double>("data.target_rotation_deg", FIELD(task.target_shift.rotation_deg)),
      list<double>("data.target_translation", FIELD(task.target_shift.translation)),
      scalar<double>("data.target_scale", FIELD(task.target_shift.scale)),
      scalar<double>("data.target_noise_sigma", FIELD(task.target_shift.noise_sigma)),
      list<int>("data.target_classes", FIELD(task.target_classes)),
      list<int>("data.known_classes", FIELD(task.known_classes)),
      list<double>("data.extra_source_rotations", FIELD(extra_source_rotations)),
      list<double>("data.extra_target_rotations", FIELD(extra_target_rotations)),
      list<std::size_t>("model.hidden", FIELD(hidden)),
      scalar<std::size_t>("model.bottleneck", FIELD(bottleneck)),
      scalar<bool>("model.batch_norm", FIELD(arch.batch_norm)),
      scalar<bool>("model.weight_norm", FIELD(arch.weight_norm)),
      scalar<double>("model.bn_momentum", FIELD(arch.bn_momentum)),
      scalar<double>("model.bn_epsilon", FIELD(arch.bn_epsilon)),
      scalar<std::size_t>("source.epochs", FIELD(adapt.source_epochs)),
      scalar<double>("source.alpha", FIELD(adapt.alpha)),
      scalar<double>("source.val_fraction", FIELD(adapt.val_fraction)),
      Entry{"adapt.scenario",
            [](RunConfig& c, const std::string&, const std::string& v) {
              c.adapt.scenario = parse_scenario(trim(v));
              c.task.scenario = c.adapt.scenario;
            },
            [](const RunConfig& c) { return to_string(c.adapt.scenario); }},
      scalar<std::size_t>("adapt.epochs", FIELD(adapt.adapt_epochs)),
      scalar<double>("adapt.beta", FIELD(adapt.beta)),
      scalar<double>("adapt.eta0", FIELD(adapt.sgd.eta0)),
      scalar<double>("adapt.momentum", FIELD(adapt.sgd.momentum)),
      scalar<double>("adapt.weight_decay", FIELD(adapt.sgd.weight_decay)),
      scalar<std::size_t>("adapt.batch_size", FIELD(adapt.batch_size)),
      scalar<int>("adapt.refinement_rounds", FIELD(adapt.refinement_rounds)),
      scalar<std::size_t>("adapt.tc", FIELD(adapt.tc)),
      scalar<double>("adapt.tc_fraction", FIELD(adapt.tc_fraction)),
      scalar<std::uint64_t>("adapt.seed", FIELD(adapt.seed)),
      Entry{"adapt.include_div",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.adapt.include_div = parse_auto_bool(k, v); },
            [](const RunConfig& c) { return fmt(c.adapt.include_div); }},
      Entry{"adapt.freeze_bn_stats",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              c.adapt.freeze_bn_stats = parse_auto_bool(k, v);
            },
            [](const RunConfig& c) { return fmt(c.adapt.freeze_bn_stats); }},
      scalar<double>("adapt.new_layer_lr_multiplier", FIELD(adapt.new_layer_lr_multiplier)),
      Entry{"adapt.pseudo_labels",
            [](RunConfig& c, const std::string&, const std::string& v) {
              c.adapt.pseudo_labels = parse_pseudo_label_mode(trim(v));
            },
            [](const RunConfig& c) { return to_string(c.adapt.pseudo_labels); }},
      scalar<bool>("adapt.reestimate_bn", FIELD(adapt.reestimate_bn)),
      scalar<bool>("adapt.reject_from_div", FIELD(adapt.reject_from_div)),
      scalar<bool>("adapt.reject_from_pl", FIELD(adapt.reject_from_pl)),
      scalar<bool>("report.projection", FIELD(report.projection)),
      scalar<bool>("report.epoch_log", FIELD(report.epoch_log)),
      scalar<bool>("report.dump_pseudo_labels", FIELD(report.dump_pseudo_labels)),
      Entry{"suite.grid", [](RunConfig& c, const std::string&, const std::string& v) { c.suite.grid = trim(v); },
            [](const RunConfig& c) { return c.suite.grid; }},
      list<std::uint64_t>("suite.seeds", FIELD(suite.seeds)),
      list<std::size_t>("suite.tc_values", FIELD(suite.tc_values)),
  };
  return entries;
}

#undef FIELD

const Entry& find_entry(const std::string& key) {
  for (const auto& e : registry()) {
    if (e.key == key) return e;
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

bool is_target_shift_key(const std::string& key) { return key.rfind("data.target_", 0) == 0 && key != "data.target_classes"; }

void check(const RunConfig& c) {
  validate(c.adapt);
  const auto d = c.task.blobs.dim;
  for (const auto* t : {&c.task.source_shift.translation, &c.task.target_shift.translation}) {
    if (!t->empty() && t->size() != d) throw ConfigError("config: translation needs " + std::to_string(d) + " entries");
  }
  if (c.hidden.empty()) throw ConfigError("config: model.hidden needs at least one layer");
  if (c.suite.grid != "ablation" && c.suite.grid != "toggles" && c.suite.grid != "tc_sweep") {
    throw ConfigError("config: suite.grid must be ablation, toggles or tc_sweep");
  }
  if (c.suite.seeds.empty()) throw ConfigError("config: suite.seeds is empty");
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& e : registry()) out.push_back(e.key);
  return out;
}

RunConfig load_config(const std::optional<std::filesystem::path>& path, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  std::vector<std::pair<std::string, std::string>> assignments;
  if (path) {
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::read_ini(path->string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw ConfigError("config: key '" + section + "' outside a section");
      cfg.sections.insert(section);
      for (const auto& [key, value] : body) {
        assignments.emplace_back(section + "." + key, value.get_value<std::string>());
      }
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("config: override '" + o + "' is not KEY=VALUE");
    assignments.emplace_back(trim(o.substr(0, eq)), o.substr(eq + 1));
  }
  for (const auto& [key, value] : assignments) find_entry(key);

  // The scenario picks the task preset; explicit keys are applied on top.
  bool explicit_target_shift = false;
  for (const auto& [key, value] : assignments) {
    if (key == "adapt.scenario") find_entry(key).set(cfg, key, value);
    explicit_target_shift = explicit_target_shift || is_target_shift_key(key);
  }
  if (!explicit_target_shift) cfg.task.target_shift = preset_task(cfg.adapt.scenario).target_shift;
  for (const auto& [key, value] : assignments) find_entry(key).set(cfg, key, value);
  check(cfg);
  return cfg;
}

std::string canonical_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& e : registry()) {
    if (e.key == "adapt.seed") continue;
    out += e.key + "=" + e.get(cfg) + "\n";
  }
  return out;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256: digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(canonical_text(cfg)); }

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("sha256: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace shot
