#include "de/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "de/toml_lite.hpp"

namespace de {

const char* to_string(ModuleKind kind) {
  switch (kind) {
    case ModuleKind::source: return "source";
    case ModuleKind::source_proxy: return "source_proxy";
    case ModuleKind::transform: return "transform";
    case ModuleKind::publisher: return "publisher";
  }
  return "?";
}

std::string ValidationError::str() const {
  std::string out = channel.empty() ? std::string("<engine>") : channel;
  if (!location.empty()) out += "/" + location;
  return out + ": " + message;
}

namespace {

[[noreturn]] void bad_config(const std::string& where, const std::string& msg) {
  raise(Errc::parse_error, where + ": " + msg);
}

std::string get_string(const Value& table, const char* key, const std::string& where,
                       bool required = true) {
  auto it = table.find(key);
  if (it == table.end()) {
    if (required) bad_config(where, std::string("missing key '") + key + "'");
    return {};
  }
  if (!it->is_string()) bad_config(where, std::string("'") + key + "' must be a string");
  return it->get<std::string>();
}

double get_number(const Value& table, const char* key, double fallback,
                  const std::string& where) {
  auto it = table.find(key);
  if (it == table.end()) return fallback;
  if (!it->is_number()) bad_config(where, std::string("'") + key + "' must be a number");
  return it->get<double>();
}

std::vector<std::string> get_string_list(const Value& table, const char* key,
                                         const std::string& where, bool required = false) {
  auto it = table.find(key);
  if (it == table.end()) {
    if (required) bad_config(where, std::string("missing key '") + key + "'");
    return {};
  }
  if (!it->is_array()) bad_config(where, std::string("'") + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& item : *it) {
    if (!item.is_string()) bad_config(where, std::string("'") + key + "' must hold strings");
    out.push_back(item.get<std::string>());
  }
  return out;
}

Expression parse_expr(const Value& table, const char* key, const std::string& where) {
  std::string text = get_string(table, key, where);
  try {
    return Expression::parse(text);
  } catch (const Error& e) {
    bad_config(where, e.what());
  }
}

ModuleSpec parse_module(const Value& table, ModuleKind kind, const std::string& where) {
  ModuleSpec spec;
  spec.kind = kind;
  spec.name = get_string(table, "name", where);
  spec.implementation = get_string(table, "implementation", where);
  if (auto it = table.find("parameters"); it != table.end()) {
    if (!it->is_object()) bad_config(where, "'parameters' must be a table");
    spec.parameters = *it;
  }
  if (kind != ModuleKind::source)
    spec.consumes = get_string_list(table, "consumes", where);
  if (kind != ModuleKind::publisher)
    spec.produces = get_string_list(table, "produces", where);
  if (kind == ModuleKind::source)
    spec.period_s = get_number(table, "period", 0, where);
  return spec;
}

ChannelConfig parse_channel(const Value& table, std::size_t index) {
  std::string where = "channel[" + std::to_string(index) + "]";
  ChannelConfig channel;
  channel.channel_id = get_string(table, "id", where);
  where = "channel '" + channel.channel_id + "'";

  if (auto it = table.find("source"); it != table.end())
    for (const auto& entry : *it)
      channel.sources.push_back(parse_module(entry, ModuleKind::source, where + " source"));

  if (auto it = table.find("source_proxy"); it != table.end()) {
    for (const auto& entry : *it) {
      SourceProxyBinding proxy;
      std::string pwhere = where + " source_proxy";
      proxy.source_channel = get_string(entry, "source_channel", pwhere);
      proxy.product_name = get_string(entry, "product", pwhere);
      proxy.local_alias = get_string(entry, "alias", pwhere);
      proxy.max_staleness_s = get_number(entry, "max_staleness", 0, pwhere);
      proxy.period_s = get_number(entry, "period", 0, pwhere);
      channel.source_proxies.push_back(std::move(proxy));
    }
  }

  if (auto it = table.find("transform"); it != table.end())
    for (const auto& entry : *it)
      channel.transforms.push_back(
          parse_module(entry, ModuleKind::transform, where + " transform"));

  if (auto it = table.find("fact"); it != table.end()) {
    for (const auto& entry : *it) {
      Fact fact;
      fact.name = get_string(entry, "name", where + " fact");
      fact.expr = parse_expr(entry, "expression", where + " fact '" + fact.name + "'");
      channel.facts.push_back(std::move(fact));
    }
  }

  if (auto it = table.find("rule"); it != table.end()) {
    for (const auto& entry : *it) {
      Rule rule;
      rule.name = get_string(entry, "name", where + " rule");
      std::string rwhere = where + " rule '" + rule.name + "'";
      rule.condition = parse_expr(entry, "condition", rwhere);
      rule.actions = get_string_list(entry, "actions", rwhere);
      rule.derived_facts = get_string_list(entry, "derives", rwhere);
      channel.rules.push_back(std::move(rule));
    }
  }

  if (auto it = table.find("publisher"); it != table.end())
    for (const auto& entry : *it)
      channel.publishers.push_back(
          parse_module(entry, ModuleKind::publisher, where + " publisher"));

  return channel;
}

}  // namespace

EngineConfig parse_config_text(const std::string& text, const std::string& filename) {
  Value root = parse_toml_lite(text, filename);
  EngineConfig config;

  if (auto it = root.find("engine"); it != root.end())
    config.archive_dir = get_string(*it, "archive_dir", "engine", false);
  if (config.archive_dir.empty()) config.archive_dir = "archive";

  if (auto it = root.find("defaults"); it != root.end()) {
    const Value& d = *it;
    if (d.contains("source_period"))
      config.defaults.source_period_s = get_number(d, "source_period", 0, "defaults");
    config.defaults.boot_timeout_s =
        get_number(d, "boot_timeout", config.defaults.boot_timeout_s, "defaults");
    config.defaults.stop_grace_s =
        get_number(d, "stop_grace", config.defaults.stop_grace_s, "defaults");
  }

  if (auto it = root.find("channel"); it != root.end()) {
    if (!it->is_array()) bad_config(filename, "'channel' must use [[channel]] tables");
    for (std::size_t i = 0; i < it->size(); ++i)
      config.channels.push_back(parse_channel((*it)[i], i));
  }
  return config;
}

EngineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::io_error, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

namespace {

struct Checker {
  const EngineConfig& config;
  const PluginRegistry* registry;
  std::vector<ValidationError> errors;

  void error(const std::string& channel, const std::string& location, const std::string& msg) {
    errors.push_back(ValidationError{channel, location, msg});
  }

  void check_channel(const ChannelConfig& ch) {
    const std::string& id = ch.channel_id;

    if (ch.sources.empty() && ch.source_proxies.empty())
      error(id, "sources", "channel needs at least one source or source proxy");
    if (ch.transforms.empty()) error(id, "transforms", "channel needs at least one transform");
    if (ch.facts.empty()) error(id, "facts", "channel needs at least one fact");
    if (ch.rules.empty()) error(id, "rules", "channel needs at least one rule");
    if (ch.publishers.empty()) error(id, "publishers", "channel needs at least one publisher");

    // Module name uniqueness and plugin existence.
    std::set<std::string> module_names;
    auto check_module = [&](const ModuleSpec& m) {
      std::string loc = std::string(to_string(m.kind)) + " '" + m.name + "'";
      if (m.name.empty()) error(id, loc, "module has no name");
      if (!module_names.insert(m.name).second)
        error(id, loc, "duplicate module name '" + m.name + "'");
      if (m.implementation.empty())
        error(id, loc, "module has no implementation");
      else if (registry && !registry->contains(m.implementation))
        error(id, loc, "unknown plugin '" + m.implementation + "'");
      if (m.kind == ModuleKind::source && m.period_s < 0)
        error(id, loc, "period must be positive");
    };
    for (const auto& m : ch.sources) check_module(m);
    for (const auto& m : ch.transforms) check_module(m);
    for (const auto& m : ch.publishers) check_module(m);

    // Producer map: every product name has exactly one producer.
    std::map<std::string, std::string> producers;
    auto add_producer = [&](const std::string& product, const std::string& by,
                            const std::string& loc) {
      if (product == kInferenceResultProduct) {
        error(id, loc, "product name '" + product + "' is reserved for the engine");
        return;
      }
      auto [it, inserted] = producers.emplace(product, by);
      if (!inserted)
        error(id, loc, "product '" + product + "' is produced by both '" + it->second +
                           "' and '" + by + "'");
    };
    for (const auto& m : ch.sources)
      for (const auto& p : m.produces)
        add_producer(p, m.name, "source '" + m.name + "'");
    for (const auto& proxy : ch.source_proxies) {
      std::string loc = "source_proxy '" + proxy.local_alias + "'";
      if (proxy.local_alias.empty()) error(id, loc, "proxy has no alias");
      add_producer(proxy.local_alias, "proxy from " + proxy.source_channel, loc);
      if (proxy.source_channel == id)
        error(id, loc, "proxy may not target its own channel");
      bool known = false;
      for (const auto& other : config.channels)
        if (other.channel_id == proxy.source_channel) known = true;
      if (!known)
        error(id, loc, "proxy targets unknown channel '" + proxy.source_channel + "'");
    }
    for (const auto& m : ch.transforms)
      for (const auto& p : m.produces)
        add_producer(p, m.name, "transform '" + m.name + "'");
    for (const auto& m : ch.publishers)
      if (!m.produces.empty())
        error(id, "publisher '" + m.name + "'", "publishers may not declare products");
    for (const auto& m : ch.sources)
      if (!m.consumes.empty())
        error(id, "source '" + m.name + "'", "sources may not consume products");

    // Consumer closure.
    auto check_consumed = [&](const std::string& product, const std::string& loc) {
      if (product == kInferenceResultProduct) return;  // engine-produced
      if (!producers.count(product))
        error(id, loc, "consumed product '" + product + "' has no producer");
    };
    for (const auto& m : ch.transforms)
      for (const auto& c : m.consumes) check_consumed(c, "transform '" + m.name + "'");
    for (const auto& m : ch.publishers)
      for (const auto& c : m.consumes) check_consumed(c, "publisher '" + m.name + "'");
    for (const auto& fact : ch.facts)
      for (const auto& product : fact.expr.product_refs())
        check_consumed(product, "fact '" + fact.name + "'");

    // Transform DAG acyclicity (producer -> consumer edges between transforms).
    check_transform_cycles(ch);

    // Rule-set validation.
    auto rule_validation = validate_rules(ch.facts, ch.rules);
    for (const auto& msg : rule_validation.errors) error(id, "rules", msg);

    // Rule actions must name configured publishers.
    std::set<std::string> publisher_names;
    for (const auto& m : ch.publishers) publisher_names.insert(m.name);
    for (const auto& rule : ch.rules)
      for (const auto& action : rule.actions)
        if (!publisher_names.count(action))
          error(id, "rule '" + rule.name + "'",
                "action names unknown publisher '" + action + "'");
  }

  void check_transform_cycles(const ChannelConfig& ch) {
    std::map<std::string, std::size_t> producer_of;
    for (std::size_t i = 0; i < ch.transforms.size(); ++i)
      for (const auto& p : ch.transforms[i].produces) producer_of[p] = i;

    std::size_t n = ch.transforms.size();
    std::vector<int> state(n, 0);
    std::function<bool(std::size_t)> has_cycle = [&](std::size_t i) {
      state[i] = 1;
      for (const auto& c : ch.transforms[i].consumes) {
        auto it = producer_of.find(c);
        if (it == producer_of.end() || it->second == i) continue;
        if (state[it->second] == 1) return true;
        if (state[it->second] == 0 && has_cycle(it->second)) return true;
      }
      state[i] = 2;
      return false;
    };
    for (std::size_t i = 0; i < n; ++i)
      if (state[i] == 0 && has_cycle(i)) {
        error(ch.channel_id, "transforms",
              "transform dependency cycle involving '" + ch.transforms[i].name + "'");
        return;
      }
  }
};

}  // namespace

std::vector<ValidationError> validate_config(const EngineConfig& config,
                                             const PluginRegistry* registry) {
  Checker checker{config, registry, {}};

  std::set<std::string> seen;
  for (const auto& ch : config.channels) {
    if (ch.channel_id.empty())
      checker.error("", "channel.id", "channel with empty id");
    else if (!seen.insert(ch.channel_id).second)
      checker.error(ch.channel_id, "channel.id",
                    "duplicate channel id '" + ch.channel_id + "'");
  }
  for (const auto& ch : config.channels) checker.check_channel(ch);

  std::sort(checker.errors.begin(), checker.errors.end());
  return std::move(checker.errors);
}

}  // namespace de
