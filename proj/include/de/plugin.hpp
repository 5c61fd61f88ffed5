#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "de/dataspace.hpp"
#include "de/errors.hpp"
#include "de/value.hpp"

namespace de {

enum class ModuleKind { source, source_proxy, transform, publisher };

const char* to_string(ModuleKind kind);

// Declarative description of one channel module. The consumes/produces sets
// are the module's contract; the framework wires modules together by product
// name and rejects configurations where the names do not close.
struct ModuleSpec {
  ModuleKind kind = ModuleKind::source;
  std::string name;
  std::string implementation;
  Value parameters = Value::object();
  std::vector<std::string> consumes;  // empty for sources
  std::vector<std::string> produces;  // empty for publishers
  double period_s = 0;                // sources only; 0 = engine default
};

// Import of another channel's product under a local alias. The proxy behaves
// like a source: it satisfies boot gating only once it has delivered a fresh
// enough value.
struct SourceProxyBinding {
  std::string source_channel;
  std::string product_name;
  std::string local_alias;
  double max_staleness_s = 0;  // 0 = no limit
  double period_s = 0;
};

// Uniform plugin entry point for all four module kinds. Sources receive an
// empty input map; publishers normally return an empty output map (anything
// they do return is recorded into the cycle's block as diagnostic products).
class Module {
 public:
  virtual ~Module() = default;
  virtual std::map<std::string, Value> invoke(
      const std::map<std::string, DataProduct>& inputs) = 0;
};

class PluginRegistry {
 public:
  using Factory = std::function<std::unique_ptr<Module>(const Value& parameters)>;

  void add(const std::string& name, Factory factory) {
    factories_[name] = std::move(factory);
  }

  bool contains(const std::string& name) const { return factories_.count(name) > 0; }

  std::unique_ptr<Module> make(const std::string& name, const Value& parameters) const {
    auto it = factories_.find(name);
    if (it == factories_.end())
      raise(Errc::unknown_plugin, "no plugin registered as '" + name + "'");
    try {
      return it->second(parameters);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      raise(Errc::parameter_error, "plugin '" + name + "' rejected its parameters: " + e.what());
    }
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, factory] : factories_) out.push_back(name);
    return out;
  }

 private:
  std::map<std::string, Factory> factories_;
};

// Convenience adaptor: wraps a callable as a Module.
class LambdaModule final : public Module {
 public:
  using Fn = std::function<std::map<std::string, Value>(
      const std::map<std::string, DataProduct>&)>;

  explicit LambdaModule(Fn fn) : fn_(std::move(fn)) {}

  std::map<std::string, Value> invoke(
      const std::map<std::string, DataProduct>& inputs) override {
    return fn_(inputs);
  }

 private:
  Fn fn_;
};

}  // namespace de
