#include "de/logic_engine.hpp"

#include <algorithm>
#include <queue>

#include "de/errors.hpp"

namespace de {

Value InferenceResult::to_json() const {
  Value out;
  out["fact_values"] = fact_values;
  out["fired_rules"] = fired_rules;
  out["publishers_to_run"] = publishers_to_run;
  return out;
}

std::set<std::string> DependencyPlan::required_products() const {
  std::set<std::string> out;
  for (const auto& fact : facts_)
    for (const auto& name : fact.expr.product_refs()) out.insert(name);
  return out;
}

struct PlanBuilder {
  static DependencyPlan build(std::vector<Fact> facts, std::vector<Rule> rules) {
    DependencyPlan plan;
    plan.facts_ = std::move(facts);
    plan.rules_ = std::move(rules);
    return plan;
  }
};

namespace {

// Deterministic topological order: among ready rules, smallest name first.
// Returns false if the dependency graph has a cycle.
bool topo_order(const std::vector<Rule>& rules,
                const std::map<std::string, std::size_t>& derived_by,
                std::vector<std::size_t>& order) {
  std::size_t n = rules.size();
  std::vector<std::set<std::size_t>> successors(n);
  std::vector<std::size_t> indegree(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& fact : rules[i].condition.fact_refs()) {
      auto producer = derived_by.find(fact);
      if (producer == derived_by.end() || producer->second == i) continue;
      if (successors[producer->second].insert(i).second) ++indegree[i];
    }
  }
  auto by_name = [&](std::size_t a, std::size_t b) { return rules[a].name > rules[b].name; };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(by_name)> ready(by_name);
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(i);
  order.clear();
  while (!ready.empty()) {
    std::size_t i = ready.top();
    ready.pop();
    order.push_back(i);
    for (std::size_t next : successors[i])
      if (--indegree[next] == 0) ready.push(next);
  }
  return order.size() == n;
}

// Walks the rule graph to spell out one dependency cycle for the error text.
std::string find_cycle_path(const std::vector<Rule>& rules,
                            const std::map<std::string, std::size_t>& derived_by) {
  std::size_t n = rules.size();
  std::vector<int> state(n, 0);  // 0 unvisited, 1 on stack, 2 done
  std::vector<std::size_t> stack;
  std::string path;

  std::function<bool(std::size_t)> visit = [&](std::size_t i) {
    state[i] = 1;
    stack.push_back(i);
    for (const auto& fact : rules[i].condition.fact_refs()) {
      auto producer = derived_by.find(fact);
      if (producer == derived_by.end()) continue;
      std::size_t j = producer->second;
      if (state[j] == 1) {
        auto start = std::find(stack.begin(), stack.end(), j);
        for (auto it = start; it != stack.end(); ++it)
          path += rules[*it].name + " -> ";
        path += rules[j].name;
        return true;
      }
      if (state[j] == 0 && visit(j)) return true;
    }
    stack.pop_back();
    state[i] = 2;
    return false;
  };

  for (std::size_t i = 0; i < n; ++i)
    if (state[i] == 0 && visit(i)) return path;
  return "unlocated cycle";
}

}  // namespace

RuleSetValidation validate_rules(const std::vector<Fact>& facts,
                                 const std::vector<Rule>& rules) {
  RuleSetValidation result;
  auto error = [&](const std::string& msg) { result.errors.push_back(msg); };

  std::set<std::string> fact_names;
  for (const auto& fact : facts) {
    if (fact.name.empty()) error("fact with empty name");
    if (!fact_names.insert(fact.name).second)
      error("duplicate fact name '" + fact.name + "'");
    if (!fact.expr.valid()) {
      error("fact '" + fact.name + "' has no expression");
      continue;
    }
    if (auto refs = fact.expr.fact_refs(); !refs.empty())
      error("fact '" + fact.name + "' references fact '" + *refs.begin() +
            "'; base facts may only reference products");
    try {
      auto type = fact.expr.static_type();
      if (type != Expression::Type::boolean && type != Expression::Type::unknown)
        error("fact '" + fact.name + "' evaluates to " + std::string(to_string(type)) +
              ", expected boolean");
    } catch (const Error& e) {
      error("fact '" + fact.name + "': " + e.what());
    }
  }

  std::map<std::string, std::size_t> derived_by;
  std::set<std::string> rule_names;
  std::set<std::string> all_fact_names = fact_names;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const Rule& rule = rules[i];
    if (rule.name.empty()) error("rule with empty name");
    if (!rule_names.insert(rule.name).second)
      error("duplicate rule name '" + rule.name + "'");
    for (const auto& derived : rule.derived_facts) {
      if (fact_names.count(derived)) {
        error("rule '" + rule.name + "' derives '" + derived +
              "', which is already a base fact");
        continue;
      }
      if (!derived_by.emplace(derived, i).second) {
        error("derived fact '" + derived + "' is produced by both '" +
              rules[derived_by[derived]].name + "' and '" + rule.name + "'");
        continue;
      }
      all_fact_names.insert(derived);
    }
  }

  for (const Rule& rule : rules) {
    if (!rule.condition.valid()) {
      error("rule '" + rule.name + "' has no condition");
      continue;
    }
    if (auto prods = rule.condition.product_refs(); !prods.empty())
      error("rule '" + rule.name + "' references product '" + *prods.begin() +
            "'; conditions may only reference facts");
    try {
      auto type = rule.condition.static_type();
      if (type != Expression::Type::boolean && type != Expression::Type::unknown)
        error("rule '" + rule.name + "' condition evaluates to " +
              std::string(to_string(type)) + ", expected boolean");
    } catch (const Error& e) {
      error("rule '" + rule.name + "': " + e.what());
    }
    for (const auto& fact : rule.condition.fact_refs())
      if (!all_fact_names.count(fact))
        error("rule '" + rule.name + "' references undefined fact '" + fact + "'");
  }

  std::vector<std::size_t> order;
  if (result.ok() && !topo_order(rules, derived_by, order)) {
    error("cyclic rule dependency: " + find_cycle_path(rules, derived_by));
  }

  if (result.ok()) {
    std::vector<Rule> ordered;
    ordered.reserve(rules.size());
    for (std::size_t i : order) ordered.push_back(rules[i]);
    result.plan = PlanBuilder::build(facts, std::move(ordered));
  }
  return result;
}

DependencyPlan make_plan(const std::vector<Fact>& facts, const std::vector<Rule>& rules) {
  auto validation = validate_rules(facts, rules);
  if (!validation.ok()) {
    const std::string& first = validation.errors.front();
    Errc code = Errc::validation_error;
    if (first.find("cyclic") != std::string::npos) code = Errc::cyclic_dependency;
    else if (first.find("undefined fact") != std::string::npos) code = Errc::undefined_fact;
    else if (first.find("duplicate") != std::string::npos ||
             first.find("already a base fact") != std::string::npos ||
             first.find("produced by both") != std::string::npos)
      code = Errc::duplicate_name;
    raise(code, first);
  }
  return std::move(validation.plan);
}

InferenceResult run_inference(const DependencyPlan& plan,
                              const EvalContext::ProductLookup& products) {
  InferenceResult result;
  EvalContext base_ctx(products, nullptr);
  for (const auto& fact : plan.base_facts())
    result.fact_values[fact.name] = fact.expr.evaluate_bool(base_ctx);

  EvalContext rule_ctx(products, [&](const std::string& name) -> std::optional<bool> {
    auto it = result.fact_values.find(name);
    if (it == result.fact_values.end()) return std::nullopt;
    return it->second;
  });
  for (const auto& rule : plan.ordered_rules()) {
    bool fired = rule.condition.evaluate_bool(rule_ctx);
    for (const auto& derived : rule.derived_facts) result.fact_values[derived] = fired;
    if (fired) {
      result.fired_rules.push_back(rule.name);
      for (const auto& publisher : rule.actions) result.publishers_to_run.insert(publisher);
    }
  }
  return result;
}

}  // namespace de
