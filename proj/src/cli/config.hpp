#pragma once

#include <map>
#include <string>
#include <vector>

#include "abpn/imaging.hpp"
#include "abpn/model.hpp"
#include "abpn/train.hpp"

namespace abpn::cli {

struct PathsConfig {
  std::string dataset;
  std::string eval_dataset;
  std::string checkpoint;
  std::string output_dir = "abpn_out";
};

struct ModeConfig {
  bool ensemble = false;
  bool deterministic = false;
};

/// Everything a command can be configured with. Sections of the config file:
/// [network] [train] [degradation] [paths] [mode].
struct CliConfig {
  NetworkConfig network;
  TrainConfig train;
  DegradationConfig degradation;
  PathsConfig paths;
  ModeConfig mode;
  int patch = 32;
  int patches_per_image = 8;

  /// Sets `section.key`; throws ConfigError naming the key if unknown or
  /// unparsable.
  void set(const std::string& qualified_key, const std::string& value);

  /// Parses an INI-style file: `[section]` headers, `key = value` lines,
  /// `#` or `;` comments.
  void load_file(const std::string& path);
  void load_text(const std::string& text, const std::string& source = "<text>");

  /// Canonical INI text of every key, in a fixed order.
  std::string echo() const;
  /// The same as flat `section.key` → value pairs.
  std::map<std::string, std::string> echo_map() const;

  /// Cross-field checks (degradation scale follows network scale).
  void validate();
};

/// Every accepted `section.key`, in echo order.
const std::vector<std::string>& known_keys();

}  // namespace abpn::cli
