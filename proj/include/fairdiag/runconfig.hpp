#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "fairdiag/synthgen.hpp"
#include "fairdiag/trainer.hpp"

namespace fairdiag {

// Plain `key = value` configuration files ('#' comments, blank lines ok).
std::map<std::string, std::string> read_config_file(const std::filesystem::path& path);

// Both builders reject unknown keys. Flag overrides are applied by merging
// into the map before the call.
SynthConfig make_synth_config(const std::map<std::string, std::string>& kv);
TrainConfig make_train_config(const std::map<std::string, std::string>& kv);

}  // namespace fairdiag
