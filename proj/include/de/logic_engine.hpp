#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "de/expression.hpp"
#include "de/value.hpp"

namespace de {

// A base fact: named boolean expression over data products.
struct Fact {
  std::string name;
  Expression expr;
};

// A rule: boolean condition over facts. When it fires, its publishers are
// selected; its derived facts always take the condition's value, so an
// unfired rule's derived facts are false rather than undefined.
struct Rule {
  std::string name;
  Expression condition;
  std::vector<std::string> actions;        // publisher names
  std::vector<std::string> derived_facts;  // new fact names
};

struct InferenceResult {
  std::map<std::string, bool> fact_values;  // base and derived
  std::set<std::string> publishers_to_run;
  std::vector<std::string> fired_rules;  // in plan order

  Value to_json() const;
  bool operator==(const InferenceResult&) const = default;
};

// Validated evaluation plan: base facts plus rules in a canonical topological
// order of the derived-fact dependency graph. The order is a function of the
// rule set alone, never of declaration order, so permuting rule declarations
// cannot change any inference outcome.
class DependencyPlan {
 public:
  DependencyPlan() = default;

  const std::vector<Fact>& base_facts() const { return facts_; }
  const std::vector<Rule>& ordered_rules() const { return rules_; }
  std::set<std::string> required_products() const;

 private:
  friend struct PlanBuilder;
  std::vector<Fact> facts_;
  std::vector<Rule> rules_;  // canonical topological order
};

// Static validation of a fact/rule set. Collects every problem it can see:
// duplicate names, undefined fact references, product references inside rule
// conditions, non-boolean expressions, and dependency cycles (with the cycle
// path spelled out).
struct RuleSetValidation {
  DependencyPlan plan;  // meaningful only when errors is empty
  std::vector<std::string> errors;

  bool ok() const { return errors.empty(); }
};

RuleSetValidation validate_rules(const std::vector<Fact>& facts,
                                 const std::vector<Rule>& rules);

// Throwing convenience wrapper; raises Error with the first problem.
DependencyPlan make_plan(const std::vector<Fact>& facts, const std::vector<Rule>& rules);

// Evaluates all base facts, then all rules in plan order. Missing products
// and evaluation failures propagate as Error; the channel archives the cycle
// with outcome fact_error.
InferenceResult run_inference(const DependencyPlan& plan,
                              const EvalContext::ProductLookup& products);

}  // namespace de
