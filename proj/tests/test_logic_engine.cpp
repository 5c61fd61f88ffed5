#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <random>

#include "de/logic_engine.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace de;
using test::error_code_of;

namespace {

Fact fact_of(const std::string& name, const std::string& expr) {
  return Fact{name, Expression::parse(expr)};
}

Rule rule_of(const std::string& name, const std::string& condition,
             std::vector<std::string> actions = {}, std::vector<std::string> derives = {}) {
  return Rule{name, Expression::parse(condition), std::move(actions), std::move(derives)};
}

EvalContext::ProductLookup products_of(std::shared_ptr<std::map<std::string, Value>> map) {
  return [map](const std::string& name) -> const Value* {
    auto it = map->find(name);
    return it == map->end() ? nullptr : &it->second;
  };
}

// Brute-force fixed point: evaluate every rule in the given order, updating
// derived facts, until nothing changes. Independent of the planner.
InferenceResult fixed_point_oracle(const std::vector<Fact>& facts,
                                   const std::vector<Rule>& rules,
                                   const EvalContext::ProductLookup& products) {
  std::map<std::string, bool> values;
  EvalContext base_ctx(products, nullptr);
  for (const auto& f : facts) values[f.name] = f.expr.evaluate_bool(base_ctx);
  for (const auto& r : rules)
    for (const auto& d : r.derived_facts) values[d] = false;

  EvalContext ctx(products, [&](const std::string& name) -> std::optional<bool> {
    auto it = values.find(name);
    if (it == values.end()) return std::nullopt;
    return it->second;
  });

  std::map<std::string, bool> fired;
  bool changed = true;
  std::size_t guard = 0;
  while (changed) {
    REQUIRE(guard++ <= rules.size() + 2);
    changed = false;
    for (const auto& r : rules) {
      bool value = r.condition.evaluate_bool(ctx);
      fired[r.name] = value;
      for (const auto& d : r.derived_facts) {
        if (values[d] != value) {
          values[d] = value;
          changed = true;
        }
      }
    }
  }

  InferenceResult out;
  out.fact_values = values;
  std::vector<std::string> fired_names;
  for (const auto& r : rules)
    if (fired[r.name]) {
      fired_names.push_back(r.name);
      for (const auto& a : r.actions) out.publishers_to_run.insert(a);
    }
  std::sort(fired_names.begin(), fired_names.end());
  out.fired_rules = std::move(fired_names);
  return out;
}

// Canonical comparison: fired_rules as a set, everything else exact.
bool same_outcome(const InferenceResult& a, const InferenceResult& b) {
  auto sorted = [](std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return v;
  };
  return a.fact_values == b.fact_values && a.publishers_to_run == b.publishers_to_run &&
         sorted(a.fired_rules) == sorted(b.fired_rules);
}

}  // namespace

TEST_CASE("single chain: fact gates the publisher") {
  auto products = std::make_shared<std::map<std::string, Value>>();
  (*products)["idle_jobs"] = Value::array({1, 2, 3});

  auto plan = make_plan({fact_of("has_idle", "count(product(\"idle_jobs\")) > 0")},
                        {rule_of("r1", "fact(\"has_idle\")", {"provisioner"})});
  auto result = run_inference(plan, products_of(products));
  CHECK(result.publishers_to_run == std::set<std::string>{"provisioner"});
  CHECK(result.fired_rules == std::vector<std::string>{"r1"});
  CHECK(result.fact_values.at("has_idle"));

  (*products)["idle_jobs"] = Value::array();
  auto quiet = run_inference(plan, products_of(products));
  CHECK(quiet.publishers_to_run.empty());
  CHECK(quiet.fired_rules.empty());
}

TEST_CASE("chained rules: derived fact feeds the next rule") {
  auto products = std::make_shared<std::map<std::string, Value>>();
  (*products)["x"] = 1;

  // Declaration order puts the consumer first; the plan reorders.
  std::vector<Rule> rules{
      rule_of("r2", "fact(\"b\")", {"publish_p"}),
      rule_of("r1", "fact(\"a\")", {}, {"b"}),
  };
  auto plan = make_plan({fact_of("a", "product(\"x\") == 1")}, rules);
  REQUIRE(plan.ordered_rules().size() == 2);
  CHECK(plan.ordered_rules()[0].name == "r1");
  CHECK(plan.ordered_rules()[1].name == "r2");

  auto result = run_inference(plan, products_of(products));
  CHECK(result.publishers_to_run == std::set<std::string>{"publish_p"});
  CHECK(result.fact_values.at("a"));
  CHECK(result.fact_values.at("b"));
}

TEST_CASE("unfired rules define their derived facts as false") {
  auto products = std::make_shared<std::map<std::string, Value>>();
  (*products)["x"] = 0;
  auto plan = make_plan({fact_of("a", "product(\"x\") == 1")},
                        {rule_of("r1", "fact(\"a\")", {}, {"b"}),
                         rule_of("r2", "not fact(\"b\")", {"fallback"})});
  auto result = run_inference(plan, products_of(products));
  CHECK_FALSE(result.fact_values.at("b"));
  CHECK(result.publishers_to_run == std::set<std::string>{"fallback"});
}

TEST_CASE("validation rejects cycles with the cycle path") {
  std::vector<Rule> rules{
      rule_of("r1", "fact(\"f2\")", {}, {"f1"}),
      rule_of("r2", "fact(\"f1\")", {}, {"f2"}),
  };
  auto validation = validate_rules({}, rules);
  REQUIRE_FALSE(validation.ok());
  CHECK(validation.errors.front().find("cyclic") != std::string::npos);
  CHECK(validation.errors.front().find("r1") != std::string::npos);
  CHECK(validation.errors.front().find("r2") != std::string::npos);
  CHECK(error_code_of([&] { make_plan({}, rules); }) == Errc::cyclic_dependency);
}

TEST_CASE("validation rejects undefined facts, duplicates, product refs in conditions") {
  auto undefined = validate_rules({}, {rule_of("r", "fact(\"ghost\")")});
  REQUIRE_FALSE(undefined.ok());
  CHECK(undefined.errors.front().find("undefined fact 'ghost'") != std::string::npos);

  auto dup_fact = validate_rules({fact_of("a", "true"), fact_of("a", "false")}, {});
  CHECK_FALSE(dup_fact.ok());

  auto dup_derived = validate_rules(
      {}, {rule_of("r1", "true", {}, {"d"}), rule_of("r2", "true", {}, {"d"})});
  CHECK_FALSE(dup_derived.ok());

  auto base_clash =
      validate_rules({fact_of("a", "true")}, {rule_of("r1", "true", {}, {"a"})});
  CHECK_FALSE(base_clash.ok());

  auto product_in_condition =
      validate_rules({}, {rule_of("r1", "count(product(\"x\")) > 0")});
  CHECK_FALSE(product_in_condition.ok());

  auto fact_in_fact = validate_rules({fact_of("a", "fact(\"b\")")}, {});
  CHECK_FALSE(fact_in_fact.ok());

  auto non_boolean_fact = validate_rules({fact_of("a", "1 + 2")}, {});
  CHECK_FALSE(non_boolean_fact.ok());
}

TEST_CASE("empty rule set is a valid empty plan") {
  auto validation = validate_rules({}, {});
  CHECK(validation.ok());
  auto result = run_inference(validation.plan, [](const std::string&) { return nullptr; });
  CHECK(result.fact_values.empty());
  CHECK(result.publishers_to_run.empty());
}

TEST_CASE("missing product aborts inference") {
  auto plan = make_plan({fact_of("f", "count(product(\"absent\")) > 0")}, {});
  CHECK(error_code_of([&] {
          run_inference(plan, [](const std::string&) -> const Value* { return nullptr; });
        }) == Errc::missing_product);
}

TEST_CASE("purity: serialized results are byte-identical across runs") {
  auto products = std::make_shared<std::map<std::string, Value>>();
  (*products)["x"] = 3;
  auto plan = make_plan({fact_of("a", "product(\"x\") > 1"), fact_of("b", "product(\"x\") > 5")},
                        {rule_of("r1", "fact(\"a\") and not fact(\"b\")", {"p1"}, {"d1"}),
                         rule_of("r2", "fact(\"d1\")", {"p2"})});
  auto one = run_inference(plan, products_of(products));
  auto two = run_inference(plan, products_of(products));
  CHECK(one.to_json().dump() == two.to_json().dump());
  CHECK(one.to_json()["publishers_to_run"] == Value::array({"p1", "p2"}));
}

TEST_CASE("order independence across all permutations, against the fixed point") {
  // Rule sets of up to 5 rules with random chain structure and random base
  // facts; every declaration order must give the same outcome as the plan
  // and as the brute-force fixed point.
  std::mt19937 rng(20260810);
  std::uniform_int_distribution<int> coin(0, 1);

  for (int round = 0; round < 60; ++round) {
    int n_base = std::uniform_int_distribution<int>(1, 3)(rng);
    auto products = std::make_shared<std::map<std::string, Value>>();
    std::vector<Fact> facts;
    for (int i = 0; i < n_base; ++i) {
      std::string product = "p" + std::to_string(i);
      (*products)[product] = coin(rng);
      facts.push_back(fact_of("base" + std::to_string(i),
                              "product(\"" + product + "\") == 1"));
    }

    int n_rules = std::uniform_int_distribution<int>(1, 5)(rng);
    std::vector<Rule> rules;
    std::vector<std::string> known;
    for (const auto& f : facts) known.push_back(f.name);
    for (int r = 0; r < n_rules; ++r) {
      const std::string& a = known[std::uniform_int_distribution<std::size_t>(
          0, known.size() - 1)(rng)];
      const std::string& b = known[std::uniform_int_distribution<std::size_t>(
          0, known.size() - 1)(rng)];
      std::string condition = "fact(\"" + a + "\")";
      int shape = std::uniform_int_distribution<int>(0, 3)(rng);
      if (shape == 1) condition = "not fact(\"" + a + "\")";
      if (shape == 2) condition = "fact(\"" + a + "\") and fact(\"" + b + "\")";
      if (shape == 3) condition = "fact(\"" + a + "\") or not fact(\"" + b + "\")";
      std::string name = "rule" + std::to_string(r);
      std::vector<std::string> derives;
      if (coin(rng)) {
        derives.push_back("derived" + std::to_string(r));
        known.push_back(derives.back());  // later rules may chain on it
      }
      rules.push_back(rule_of(name, condition, {"pub" + std::to_string(r % 2)}, derives));
    }

    auto lookup = products_of(products);
    auto reference = run_inference(make_plan(facts, rules), lookup);
    auto oracle = fixed_point_oracle(facts, rules, lookup);
    CHECK(same_outcome(reference, oracle));

    std::vector<std::size_t> index(rules.size());
    for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
    std::sort(index.begin(), index.end());
    int permutations = 0;
    do {
      std::vector<Rule> permuted;
      for (std::size_t i : index) permuted.push_back(rules[i]);
      auto result = run_inference(make_plan(facts, permuted), lookup);
      CHECK(result == reference);  // identical, including order-sensitive fields
      ++permutations;
    } while (std::next_permutation(index.begin(), index.end()) && permutations < 150);
  }
}
