#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "de/errors.hpp"
#include "de/value.hpp"

namespace de {

// Lookup callbacks for evaluation. A null product pointer means the product
// is absent from the working view; evaluation raises MissingProduct for it.
class EvalContext {
 public:
  using ProductLookup = std::function<const Value*(const std::string&)>;
  using FactLookup = std::function<std::optional<bool>(const std::string&)>;

  EvalContext(ProductLookup products, FactLookup facts)
      : products_(std::move(products)), facts_(std::move(facts)) {}

  const Value* product(const std::string& name) const {
    return products_ ? products_(name) : nullptr;
  }
  std::optional<bool> fact(const std::string& name) const {
    return facts_ ? facts_(name) : std::nullopt;
  }

 private:
  ProductLookup products_;
  FactLookup facts_;
};

namespace detail {
struct ExprNode;
}

// Immutable parsed expression over products and facts. Evaluation is pure:
// the same view always produces the same value.
//
// Grammar (see docs/config.md for the full reference):
//   expr  := or ; or := and ("or" and)* ; and := not ("and" not)* ;
//   not   := "not" not | cmp ;
//   cmp   := add (("<"|"<="|">"|">="|"=="|"!="|"in") add)? ;
//   add   := mul (("+"|"-") mul)* ; mul := unary (("*"|"/") unary)* ;
//   unary := "-" unary | atom ;
//   atom  := NUMBER | STRING | "true" | "false" | ref | call | "(" expr ")" ;
//   ref   := ("product"|"fact") "(" STRING ")" ("." IDENT)* ;
//   call  := ("count"|"sum"|"min"|"max") "(" expr ("," IDENT)? ")" ;
class Expression {
 public:
  enum class Type { boolean, number, string, list, record, unknown };

  Expression() = default;

  // Throws Error(syntax_error) with line/column, or Error(unknown_function).
  static Expression parse(const std::string& text);

  bool valid() const { return root_ != nullptr; }
  const std::string& text() const { return text_; }

  Value evaluate(const EvalContext& ctx) const;
  bool evaluate_bool(const EvalContext& ctx) const;

  std::set<std::string> product_refs() const;
  std::set<std::string> fact_refs() const;

  // Abstract result type; throws Error(validation_error) on operator/type
  // conflicts that can never evaluate.
  Type static_type() const;

  // Canonical s-expression form, used by tests and diagnostics.
  std::string dump() const;

 private:
  std::shared_ptr<const detail::ExprNode> root_;
  std::string text_;
};

const char* to_string(Expression::Type type);

}  // namespace de
