#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "de/config.hpp"
#include "de/toml_lite.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace de;
using test::error_code_of;

namespace {

// Minimal valid one-channel config used as the mutation baseline.
const char* kBaseConfig = R"(
[engine]
archive_dir = "archive"

[defaults]
source_period = 10.0

[[channel]]
id = "main"

[[channel.source]]
name = "src"
implementation = "test.source"
produces = ["raw"]
period = 5.0

[[channel.transform]]
name = "shape"
implementation = "test.transform"
consumes = ["raw"]
produces = ["shaped"]

[[channel.fact]]
name = "have_work"
expression = 'count(product("shaped")) > 0'

[[channel.rule]]
name = "go"
condition = 'fact("have_work")'
actions = ["sink"]

[[channel.publisher]]
name = "sink"
implementation = "test.publisher"
consumes = ["shaped"]
)";

PluginRegistry test_registry() {
  PluginRegistry reg;
  auto noop = [](const Value&) -> std::unique_ptr<Module> {
    return std::make_unique<LambdaModule>(
        [](const std::map<std::string, DataProduct>&) -> std::map<std::string, Value> {
          return {};
        });
  };
  reg.add("test.source", noop);
  reg.add("test.transform", noop);
  reg.add("test.publisher", noop);
  return reg;
}

}  // namespace

TEST_CASE("toml_lite parses tables, arrays of tables, scalars and arrays") {
  Value root = parse_toml_lite(R"(
# comment
title = "demo"
level = 3
ratio = 0.5
on = true
tags = ["a", "b"]
empty = []

[section]
key = 'literal "quoted"'

[[item]]
n = 1
[item.sub]
deep = -2

[[item]]
n = 2
)",
                               "test");
  CHECK(root["title"] == "demo");
  CHECK(root["level"] == 3);
  CHECK(root["ratio"] == 0.5);
  CHECK(root["on"] == true);
  CHECK(root["tags"] == Value::array({"a", "b"}));
  CHECK(root["empty"] == Value::array());
  CHECK(root["section"]["key"] == "literal \"quoted\"");
  REQUIRE(root["item"].size() == 2);
  CHECK(root["item"][0]["n"] == 1);
  CHECK(root["item"][0]["sub"]["deep"] == -2);
  CHECK(root["item"][1]["n"] == 2);
}

TEST_CASE("toml_lite reports positions on errors") {
  auto check_fails = [](const char* text, const char* fragment) {
    try {
      parse_toml_lite(text, "cfg");
      FAIL("expected parse error for: " << text);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::parse_error);
      CHECK(std::string(e.what()).find("cfg:") != std::string::npos);
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };
  check_fails("key", "expected '='");
  check_fails("key = ", "expected a value");
  check_fails("key = \"unterminated", "unterminated");
  check_fails("[table\nx = 1", "expected ']'");
  check_fails("key = 1\nkey = 2", "duplicate key");
  check_fails("key = [1, ", "expected a value");
}

TEST_CASE("load_config materializes the full channel structure") {
  test::TempDir dir{"config"};
  auto path = dir / "engine.toml";
  std::ofstream(path) << kBaseConfig;

  EngineConfig config = load_config(path);
  CHECK(config.archive_dir == "archive");
  CHECK(config.defaults.source_period_s == 10.0);
  REQUIRE(config.channels.size() == 1);
  const ChannelConfig& ch = config.channels[0];
  CHECK(ch.channel_id == "main");
  REQUIRE(ch.sources.size() == 1);
  CHECK(ch.sources[0].period_s == 5.0);
  CHECK(ch.sources[0].produces == std::vector<std::string>{"raw"});
  REQUIRE(ch.transforms.size() == 1);
  CHECK(ch.transforms[0].consumes == std::vector<std::string>{"raw"});
  REQUIRE(ch.facts.size() == 1);
  CHECK(ch.facts[0].expr.valid());
  REQUIRE(ch.rules.size() == 1);
  CHECK(ch.rules[0].actions == std::vector<std::string>{"sink"});
  REQUIRE(ch.publishers.size() == 1);

  auto registry = test_registry();
  CHECK(validate_config(config, &registry).empty());
}

TEST_CASE("the shipped scenario file parses as an engine config: 1 channel, 4 sources") {
  EngineConfig config = load_config("scenarios/hybrid_facility.toml");
  REQUIRE(config.channels.size() == 1);
  CHECK(config.channels[0].sources.size() == 4);
  CHECK(config.channels[0].transforms.size() == 2);
  CHECK(config.channels[0].publishers.size() == 2);
  CHECK(validate_config(config, nullptr).empty());
}

TEST_CASE("bad expression text fails at load, naming the fact") {
  std::string text = kBaseConfig;
  auto pos = text.find("'count(product(\"shaped\")) > 0'");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, std::string("'count(product(\"shaped\")) > 0'").size(),
               "'count(product(\"shaped\") > 0'");
  try {
    parse_config_text(text, "engine.toml");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::parse_error);
    CHECK(std::string(e.what()).find("have_work") != std::string::npos);
  }
}

TEST_CASE("validation reports every problem with stable ordering") {
  std::string text = kBaseConfig;
  // Break three rules at once: orphan consume, unknown action, duplicate produce.
  text += R"(
[[channel.transform]]
name = "extra"
implementation = "test.transform"
consumes = ["never_produced"]
produces = ["shaped"]

[[channel.rule]]
name = "bad_action"
condition = 'fact("have_work")'
actions = ["ghost_publisher"]
)";
  EngineConfig config = parse_config_text(text, "engine.toml");
  auto registry = test_registry();
  auto errors = validate_config(config, &registry);
  REQUIRE(errors.size() >= 3);
  CHECK(std::is_sorted(errors.begin(), errors.end()));

  auto find = [&](const std::string& needle) {
    for (const auto& e : errors)
      if (e.message.find(needle) != std::string::npos) return true;
    return false;
  };
  CHECK(find("'never_produced' has no producer"));
  CHECK(find("unknown publisher 'ghost_publisher'"));
  CHECK(find("'shaped' is produced by both"));

  // Same input, same error list.
  auto again = validate_config(config, &registry);
  REQUIRE(again.size() == errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) CHECK(again[i].str() == errors[i].str());
}

TEST_CASE("duplicate channel ids are a validation error, not a load error") {
  std::string text = kBaseConfig;
  std::string copy = kBaseConfig;
  copy.erase(0, copy.find("[[channel]]"));
  text += "\n" + copy;
  EngineConfig config = parse_config_text(text, "engine.toml");
  REQUIRE(config.channels.size() == 2);
  auto errors = validate_config(config, nullptr);
  REQUIRE_FALSE(errors.empty());
  bool found = false;
  for (const auto& e : errors)
    if (e.message.find("duplicate channel id") != std::string::npos) found = true;
  CHECK(found);
}

TEST_CASE("unknown plugins are caught when a registry is supplied") {
  EngineConfig config = parse_config_text(kBaseConfig, "engine.toml");
  PluginRegistry empty;
  auto errors = validate_config(config, &empty);
  CHECK(errors.size() == 3);  // source, transform and publisher plugins all unknown
  for (const auto& e : errors)
    CHECK(e.message.find("unknown plugin") != std::string::npos);
}

TEST_CASE("structural requirements: at least one module of each kind") {
  EngineConfig config = parse_config_text(R"(
[[channel]]
id = "empty"
)",
                                          "engine.toml");
  auto errors = validate_config(config, nullptr);
  std::set<std::string> locations;
  for (const auto& e : errors) locations.insert(e.location);
  CHECK(locations.count("sources"));
  CHECK(locations.count("transforms"));
  CHECK(locations.count("facts"));
  CHECK(locations.count("rules"));
  CHECK(locations.count("publishers"));
}

TEST_CASE("proxy targets must exist and differ from the owning channel") {
  std::string text = kBaseConfig;
  text += R"(
[[channel.source_proxy]]
source_channel = "main"
product = "raw"
alias = "self_import"

[[channel.source_proxy]]
source_channel = "elsewhere"
product = "raw"
alias = "imported"
)";
  EngineConfig config = parse_config_text(text, "engine.toml");
  auto errors = validate_config(config, nullptr);
  bool self = false, unknown = false;
  for (const auto& e : errors) {
    if (e.message.find("may not target its own channel") != std::string::npos) self = true;
    if (e.message.find("unknown channel 'elsewhere'") != std::string::npos) unknown = true;
  }
  CHECK(self);
  CHECK(unknown);
}

TEST_CASE("reserved product name is rejected") {
  std::string text = kBaseConfig;
  auto pos = text.find("produces = [\"raw\"]");
  text.replace(pos, std::string("produces = [\"raw\"]").size(),
               "produces = [\"raw\", \"inference_result\"]");
  EngineConfig config = parse_config_text(text, "engine.toml");
  auto errors = validate_config(config, nullptr);
  bool reserved = false;
  for (const auto& e : errors)
    if (e.message.find("reserved") != std::string::npos) reserved = true;
  CHECK(reserved);
}

TEST_CASE("targeted mutations of a valid config are always caught") {
  EngineConfig base = parse_config_text(kBaseConfig, "engine.toml");
  auto registry = test_registry();
  REQUIRE(validate_config(base, &registry).empty());

  auto expect_invalid = [&](EngineConfig mutated, const char* what) {
    auto errors = validate_config(mutated, &registry);
    INFO("mutation: " << what);
    CHECK_FALSE(errors.empty());
  };

  {
    EngineConfig m = base;
    m.channels[0].sources.clear();  // removes the only producer of "raw"
    expect_invalid(m, "drop source");
  }
  {
    EngineConfig m = base;
    m.channels[0].transforms[0].consumes = {"typo_raw"};
    expect_invalid(m, "rename consume");
  }
  {
    EngineConfig m = base;
    m.channels[0].sources[0].produces.push_back("shaped");
    expect_invalid(m, "duplicate produce");
  }
  {
    EngineConfig m = base;
    m.channels[0].rules[0].actions = {"nobody"};
    expect_invalid(m, "unknown action");
  }
  {
    EngineConfig m = base;
    m.channels[0].transforms[0].implementation = "test.ghost";
    expect_invalid(m, "unknown plugin");
  }
  {
    EngineConfig m = base;
    ModuleSpec loop_a = m.channels[0].transforms[0];
    loop_a.name = "loop_a";
    loop_a.consumes = {"raw", "b_out"};
    loop_a.produces = {"a_out"};
    ModuleSpec loop_b = loop_a;
    loop_b.name = "loop_b";
    loop_b.consumes = {"a_out"};
    loop_b.produces = {"b_out"};
    m.channels[0].transforms.push_back(loop_a);
    m.channels[0].transforms.push_back(loop_b);
    expect_invalid(m, "transform cycle");
  }
  {
    EngineConfig m = base;
    Rule r1{"r1", Expression::parse("fact(\"d2\")"), {}, {"d1"}};
    Rule r2{"r2", Expression::parse("fact(\"d1\")"), {}, {"d2"}};
    m.channels[0].rules.push_back(r1);
    m.channels[0].rules.push_back(r2);
    expect_invalid(m, "rule cycle");
  }
}
