#pragma once

#include <map>
#include <string>

#include "spoter/model.hpp"
#include "spoter/training.hpp"

namespace spoter {

// Everything a training run needs, resolvable from a flat `key = value`
// config file plus command-line flags (flags win). The effective values
// are echoed into the run directory for reproducibility.
struct RunConfig {
  TrainConfig train;
  VsctConfig vsct;
  SpoterConfig model;  // num_classes is taken from the data at launch
  InitMode init_mode = InitMode::faithful;
  bool subsample_long = false;  // opt-in uniform frame subsampling of long sequences
  std::string train_data_path;
  std::string val_data_path;

  void validate() const;
};

// Parses `key = value` lines; '#' starts a comment, blank lines ignored.
std::map<std::string, std::string> parse_key_value_file(const std::string& path);

// Applies file values onto base; unknown keys or unparsable values throw
// ConfigError naming the key.
RunConfig apply_config_values(const std::map<std::string, std::string>& values,
                              RunConfig base);

// Round-trippable flat text of the effective config.
std::string resolved_config_text(const RunConfig& cfg);

bool parse_bool(const std::string& key, const std::string& value);
int parse_int(const std::string& key, const std::string& value);
double parse_double(const std::string& key, const std::string& value);

}  // namespace spoter
