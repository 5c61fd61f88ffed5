#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "de/logic_engine.hpp"
#include "de/plugin.hpp"

namespace de {

// Product recorded by the engine itself each cycle; modules may consume it
// (publishers typically do) but never produce it.
inline constexpr const char* kInferenceResultProduct = "inference_result";

struct ChannelConfig {
  std::string channel_id;
  std::vector<ModuleSpec> sources;
  std::vector<SourceProxyBinding> source_proxies;
  std::vector<ModuleSpec> transforms;
  std::vector<Fact> facts;
  std::vector<Rule> rules;
  std::vector<ModuleSpec> publishers;
};

struct EngineDefaults {
  std::optional<double> source_period_s;  // unset: 10 s simulated, 30 s wall
  double boot_timeout_s = 120;
  double stop_grace_s = 30;
};

struct EngineConfig {
  std::vector<ChannelConfig> channels;
  std::filesystem::path archive_dir = "archive";
  EngineDefaults defaults;
};

struct ValidationError {
  std::string channel;
  std::string location;
  std::string message;

  std::string str() const;
  bool operator<(const ValidationError& o) const {
    return std::tie(channel, location, message) < std::tie(o.channel, o.location, o.message);
  }
};

// Parses the config file, including every fact and rule expression. Parse
// failures name the channel, the fact or rule, and the position.
EngineConfig load_config(const std::filesystem::path& path);
EngineConfig parse_config_text(const std::string& text, const std::string& filename);

// Full static validation: producer/consumer closure, produces disjointness,
// transform DAG acyclicity, rule-set validation, publisher references, proxy
// targets, and (when a registry is given) plugin existence. Returns every
// error found, ordered by (channel, location); never throws.
std::vector<ValidationError> validate_config(const EngineConfig& config,
                                             const PluginRegistry* registry = nullptr);

}  // namespace de
