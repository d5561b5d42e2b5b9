#include "config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "abpn/error.hpp"

namespace abpn::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class I>
I parse_int(const std::string& key, const std::string& v) {
  I out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string show(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest text that reads back identically.
  for (int digits = 1; digits <= 17; ++digits) {
    char shorter[40];
    std::snprintf(shorter, sizeof shorter, "%.*g", digits, v);
    if (std::stod(shorter) == v) return shorter;
  }
  return buf;
}

std::string show(bool v) { return v ? "true" : "false"; }

struct Key {
  std::string name;
  std::function<void(CliConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const CliConfig&)> get;
};

#define ABPN_INT_KEY(NAME, FIELD)                                                                          \
  Key {                                                                                                    \
    NAME, [](CliConfig& c, const std::string& k, const std::string& v) {                                  \
      c.FIELD = parse_int<std::decay_t<decltype(c.FIELD)>>(k, v);                                          \
    },                                                                                                     \
        [](const CliConfig& c) { return std::to_string(c.FIELD); }                                         \
  }
#define ABPN_DOUBLE_KEY(NAME, FIELD)                                                                       \
  Key {                                                                                                    \
    NAME, [](CliConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_double(k, v); }, \
        [](const CliConfig& c) { return show(c.FIELD); }                                                   \
  }
#define ABPN_BOOL_KEY(NAME, FIELD)                                                                         \
  Key {                                                                                                    \
    NAME, [](CliConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_bool(k, v); },   \
        [](const CliConfig& c) { return show(c.FIELD); }                                                   \
  }
#define ABPN_STRING_KEY(NAME, FIELD)                                                                  \
  Key {                                                                                               \
    NAME, [](CliConfig& c, const std::string&, const std::string& v) { c.FIELD = v; },               \
        [](const CliConfig& c) { return c.FIELD; }                                                    \
  }

const std::vector<Key>& key_table() {
  static const std::vector<Key> keys = {
      ABPN_INT_KEY("network.scale", network.scale),
      ABPN_INT_KEY("network.channels", network.channels),
      ABPN_INT_KEY("network.stages", network.stages),
      Key{"network.fusion", [](CliConfig& c, const std::string&, const std::string& v) { c.network.fusion = parse_fusion_mode(v); },
          [](const CliConfig& c) { return to_string(c.network.fusion); }},
      Key{"network.refine", [](CliConfig& c, const std::string&, const std::string& v) { c.network.refine = parse_refine_mode(v); },
          [](const CliConfig& c) { return to_string(c.network.refine); }},
      ABPN_DOUBLE_KEY("train.learning_rate", train.learning_rate),
      ABPN_INT_KEY("train.batch_size", train.batch_size),
      ABPN_INT_KEY("train.iterations", train.iterations),
      ABPN_DOUBLE_KEY("train.weight_decay", train.weight_decay),
      ABPN_DOUBLE_KEY("train.beta1", train.beta1),
      ABPN_DOUBLE_KEY("train.beta2", train.beta2),
      ABPN_DOUBLE_KEY("train.epsilon", train.epsilon),
      ABPN_INT_KEY("train.loss_order", train.loss_order),
      ABPN_INT_KEY("train.seed", train.seed),
      ABPN_INT_KEY("train.log_every", train.log_every),
      ABPN_INT_KEY("train.checkpoint_every", train.checkpoint_every),
      ABPN_BOOL_KEY("train.augment", train.augment),
      ABPN_INT_KEY("train.patch", patch),
      ABPN_INT_KEY("train.patches_per_image", patches_per_image),
      ABPN_DOUBLE_KEY("degradation.noise_sigma", degradation.noise_sigma),
      ABPN_INT_KEY("degradation.seed", degradation.seed),
      ABPN_STRING_KEY("paths.dataset", paths.dataset),
      ABPN_STRING_KEY("paths.eval_dataset", paths.eval_dataset),
      ABPN_STRING_KEY("paths.checkpoint", paths.checkpoint),
      ABPN_STRING_KEY("paths.output_dir", paths.output_dir),
      ABPN_BOOL_KEY("mode.ensemble", mode.ensemble),
      ABPN_BOOL_KEY("mode.deterministic", mode.deterministic),
  };
  return keys;
}

}  // namespace

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& k : key_table()) out.push_back(k.name);
    return out;
  }();
  return names;
}

void CliConfig::set(const std::string& qualified_key, const std::string& value) {
  for (const auto& k : key_table()) {
    if (k.name != qualified_key) continue;
    k.set(*this, qualified_key, value);
    return;
  }
  throw ConfigError("unknown config key '" + qualified_key + "'");
}

void CliConfig::load_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string section;
  int line_no = 0;
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    const auto comment = raw.find_first_of("#;");
    const std::string line = trim(comment == std::string::npos ? raw : raw.substr(0, comment));
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value, got '" + line + "'");
    if (section.empty()) throw ConfigError(where + "key outside of any [section]");
    try {
      set(section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

void CliConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  load_text(buffer.str(), path);
}

std::map<std::string, std::string> CliConfig::echo_map() const {
  std::map<std::string, std::string> out;
  for (const auto& k : key_table()) out[k.name] = k.get(*this);
  return out;
}

std::string CliConfig::echo() const {
  std::string out;
  std::string section;
  for (const auto& k : key_table()) {
    const auto dot = k.name.find('.');
    const std::string s = k.name.substr(0, dot);
    if (s != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + s + "]\n";
      section = s;
    }
    out += k.name.substr(dot + 1) + " = " + k.get(*this) + "\n";
  }
  return out;
}

void CliConfig::validate() {
  network.validate();
  train.deterministic = mode.deterministic;
  train.validate();
  degradation.scale = network.scale;
  if (degradation.noise_sigma < 0.0) throw ConfigError("degradation.noise_sigma must be >= 0");
  if (patch < 1) throw ConfigError("train.patch must be >= 1");
  if (patches_per_image < 1) throw ConfigError("train.patches_per_image must be >= 1");
}

}  // namespace abpn::cli
