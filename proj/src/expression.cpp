#include "de/expression.hpp"

#include <cmath>
#include <sstream>

namespace de {
namespace detail {

enum class Op {
  literal,
  product_ref,
  fact_ref,
  logical_and,
  logical_or,
  logical_not,
  lt,
  le,
  gt,
  ge,
  eq,
  ne,
  in,
  add,
  sub,
  mul,
  div,
  neg,
  count,
  sum,
  min,
  max,
};

struct ExprNode {
  Op op;
  Value literal;
  std::string name;                // product/fact name
  std::vector<std::string> path;   // field path on refs
  std::string field;               // aggregate field argument
  std::shared_ptr<const ExprNode> lhs, rhs;
};

}  // namespace detail

using detail::ExprNode;
using detail::Op;
using NodePtr = std::shared_ptr<const ExprNode>;

namespace {

// ---------------------------------------------------------------- lexer

enum class Tok { end, number, string, ident, lparen, rparen, dot, comma, op };

struct Token {
  Tok kind = Tok::end;
  std::string text;
  double number = 0;
  int line = 1;
  int col = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : text_(text) { advance(); }

  const Token& peek() const { return tok_; }

  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

  [[noreturn]] void fail(const std::string& msg, const Token& at) const {
    raise(Errc::syntax_error, msg + " at line " + std::to_string(at.line) +
                                  ", column " + std::to_string(at.col));
  }

 private:
  void advance() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
      step();
    tok_ = Token{};
    tok_.line = line_;
    tok_.col = col_;
    if (pos_ >= text_.size()) return;
    char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      lex_number();
    } else if (c == '"') {
      lex_string();
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      lex_ident();
    } else {
      lex_operator();
    }
  }

  void lex_number() {
    std::string digits;
    auto consume_digits = [&] {
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        digits += text_[pos_];
        step();
      }
    };
    consume_digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      digits += '.';
      step();
      consume_digits();
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      digits += 'e';
      step();
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) {
        digits += text_[pos_];
        step();
      }
      consume_digits();
    }
    tok_.kind = Tok::number;
    tok_.text = digits;
    tok_.number = std::stod(digits);
  }

  void lex_string() {
    step();  // opening quote
    std::string out;
    while (true) {
      if (pos_ >= text_.size()) fail("unterminated string", tok_);
      char c = text_[pos_];
      step();
      if (c == '"') break;
      if (c == '\\') {
        if (pos_ >= text_.size()) fail("unterminated string escape", tok_);
        char esc = text_[pos_];
        step();
        switch (esc) {
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          default: fail(std::string("unknown escape '\\") + esc + "'", tok_);
        }
      } else {
        out += c;
      }
    }
    tok_.kind = Tok::string;
    tok_.text = out;
  }

  void lex_ident() {
    std::string name;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
        name += c;
        step();
      } else {
        break;
      }
    }
    tok_.kind = Tok::ident;
    tok_.text = name;
  }

  void lex_operator() {
    char c = text_[pos_];
    step();
    switch (c) {
      case '(': tok_.kind = Tok::lparen; tok_.text = "("; return;
      case ')': tok_.kind = Tok::rparen; tok_.text = ")"; return;
      case '.': tok_.kind = Tok::dot; tok_.text = "."; return;
      case ',': tok_.kind = Tok::comma; tok_.text = ","; return;
      case '+': case '-': case '*': case '/':
        tok_.kind = Tok::op;
        tok_.text = std::string(1, c);
        return;
      case '<': case '>':
        tok_.kind = Tok::op;
        tok_.text = std::string(1, c);
        if (pos_ < text_.size() && text_[pos_] == '=') {
          tok_.text += '=';
          step();
        }
        return;
      case '=': case '!':
        if (pos_ < text_.size() && text_[pos_] == '=') {
          tok_.kind = Tok::op;
          tok_.text = std::string(1, c) + "=";
          step();
          return;
        }
        fail(std::string("unexpected character '") + c + "'", tok_);
      default:
        fail(std::string("unexpected character '") + c + "'", tok_);
    }
  }

  void step() {
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  Token tok_;
};

// --------------------------------------------------------------- parser

NodePtr make_node(Op op, NodePtr lhs = nullptr, NodePtr rhs = nullptr) {
  auto node = std::make_shared<ExprNode>();
  node->op = op;
  node->lhs = std::move(lhs);
  node->rhs = std::move(rhs);
  return node;
}

class Parser {
 public:
  explicit Parser(const std::string& text) : lex_(text) {}

  NodePtr parse() {
    NodePtr root = parse_or();
    if (lex_.peek().kind != Tok::end)
      lex_.fail("unexpected trailing input '" + lex_.peek().text + "'", lex_.peek());
    return root;
  }

 private:
  bool at_ident(const char* word) const {
    return lex_.peek().kind == Tok::ident && lex_.peek().text == word;
  }

  void expect(Tok kind, const char* what) {
    if (lex_.peek().kind != kind) lex_.fail(std::string("expected ") + what, lex_.peek());
    lex_.take();
  }

  NodePtr parse_or() {
    NodePtr lhs = parse_and();
    while (at_ident("or")) {
      lex_.take();
      lhs = make_node(Op::logical_or, lhs, parse_and());
    }
    return lhs;
  }

  NodePtr parse_and() {
    NodePtr lhs = parse_not();
    while (at_ident("and")) {
      lex_.take();
      lhs = make_node(Op::logical_and, lhs, parse_not());
    }
    return lhs;
  }

  NodePtr parse_not() {
    if (at_ident("not")) {
      lex_.take();
      return make_node(Op::logical_not, parse_not());
    }
    return parse_cmp();
  }

  NodePtr parse_cmp() {
    NodePtr lhs = parse_add();
    Op op;
    if (lex_.peek().kind == Tok::op) {
      const std::string& t = lex_.peek().text;
      if (t == "<") op = Op::lt;
      else if (t == "<=") op = Op::le;
      else if (t == ">") op = Op::gt;
      else if (t == ">=") op = Op::ge;
      else if (t == "==") op = Op::eq;
      else if (t == "!=") op = Op::ne;
      else return lhs;
      lex_.take();
    } else if (at_ident("in")) {
      lex_.take();
      op = Op::in;
    } else {
      return lhs;
    }
    return make_node(op, lhs, parse_add());
  }

  NodePtr parse_add() {
    NodePtr lhs = parse_mul();
    while (lex_.peek().kind == Tok::op &&
           (lex_.peek().text == "+" || lex_.peek().text == "-")) {
      Op op = lex_.take().text == "+" ? Op::add : Op::sub;
      lhs = make_node(op, lhs, parse_mul());
    }
    return lhs;
  }

  NodePtr parse_mul() {
    NodePtr lhs = parse_unary();
    while (lex_.peek().kind == Tok::op &&
           (lex_.peek().text == "*" || lex_.peek().text == "/")) {
      Op op = lex_.take().text == "*" ? Op::mul : Op::div;
      lhs = make_node(op, lhs, parse_unary());
    }
    return lhs;
  }

  NodePtr parse_unary() {
    if (lex_.peek().kind == Tok::op && lex_.peek().text == "-") {
      lex_.take();
      return make_node(Op::neg, parse_unary());
    }
    return parse_atom();
  }

  NodePtr parse_atom() {
    const Token& tok = lex_.peek();
    switch (tok.kind) {
      case Tok::number: {
        Token t = lex_.take();
        auto node = std::make_shared<ExprNode>();
        node->op = Op::literal;
        node->literal = t.number;
        return node;
      }
      case Tok::string: {
        Token t = lex_.take();
        auto node = std::make_shared<ExprNode>();
        node->op = Op::literal;
        node->literal = t.text;
        return node;
      }
      case Tok::lparen: {
        lex_.take();
        NodePtr inner = parse_or();
        expect(Tok::rparen, "')'");
        return inner;
      }
      case Tok::ident:
        return parse_ident_atom();
      default:
        lex_.fail("expected a value", tok);
    }
  }

  NodePtr parse_ident_atom() {
    Token word = lex_.take();
    const std::string& name = word.text;
    if (name == "true" || name == "false") {
      auto node = std::make_shared<ExprNode>();
      node->op = Op::literal;
      node->literal = (name == "true");
      return node;
    }
    if (name == "product" || name == "fact") return parse_ref(name == "product", word);
    if (name == "count") return parse_call(Op::count, word);
    if (name == "sum") return parse_call(Op::sum, word);
    if (name == "min") return parse_call(Op::min, word);
    if (name == "max") return parse_call(Op::max, word);
    if (lex_.peek().kind == Tok::lparen)
      raise(Errc::unknown_function,
            "unknown function '" + name + "' at line " + std::to_string(word.line) +
                ", column " + std::to_string(word.col));
    lex_.fail("unexpected identifier '" + name + "'", word);
  }

  NodePtr parse_ref(bool is_product, const Token& word) {
    expect(Tok::lparen, "'('");
    if (lex_.peek().kind != Tok::string) lex_.fail("expected a quoted name", lex_.peek());
    Token name = lex_.take();
    expect(Tok::rparen, "')'");
    auto node = std::make_shared<ExprNode>();
    node->op = is_product ? Op::product_ref : Op::fact_ref;
    node->name = name.text;
    while (lex_.peek().kind == Tok::dot) {
      lex_.take();
      if (lex_.peek().kind != Tok::ident) lex_.fail("expected a field name", lex_.peek());
      if (!is_product) lex_.fail("field access is not defined on facts", word);
      node->path.push_back(lex_.take().text);
    }
    return node;
  }

  NodePtr parse_call(Op op, const Token& word) {
    (void)word;
    expect(Tok::lparen, "'('");
    NodePtr arg = parse_or();
    std::string field;
    if (lex_.peek().kind == Tok::comma) {
      lex_.take();
      if (lex_.peek().kind != Tok::ident) lex_.fail("expected a field name", lex_.peek());
      field = lex_.take().text;
    }
    expect(Tok::rparen, "')'");
    auto node = std::make_shared<ExprNode>();
    node->op = op;
    node->lhs = arg;
    node->field = field;
    return node;
  }

  Lexer lex_;
};

// ------------------------------------------------------------ evaluator

[[noreturn]] void eval_fail(const std::string& msg) {
  raise(Errc::evaluation_error, msg);
}

std::string value_kind(const Value& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "list";
  if (v.is_object()) return "record";
  return "null";
}

double as_number(const Value& v, const char* what) {
  if (!v.is_number()) eval_fail(std::string(what) + " expects a number, got " + value_kind(v));
  return v.get<double>();
}

bool as_bool(const Value& v, const char* what) {
  if (!v.is_boolean()) eval_fail(std::string(what) + " expects a boolean, got " + value_kind(v));
  return v.get<bool>();
}

Value apply_field(const Value& v, const std::string& field) {
  if (v.is_object()) {
    auto it = v.find(field);
    if (it == v.end()) eval_fail("record has no field '" + field + "'");
    return *it;
  }
  if (v.is_array()) {
    Value out = Value::array();
    for (const auto& item : v) out.push_back(apply_field(item, field));
    return out;
  }
  eval_fail("field '" + field + "' applied to a " + value_kind(v));
}

Value as_list(const Value& v, const char* what) {
  if (!v.is_array()) eval_fail(std::string(what) + " expects a list, got " + value_kind(v));
  return v;
}

Value aggregate(Op op, const Value& list, const std::string& field) {
  Value items = field.empty() ? list : apply_field(list, field);
  items = as_list(items, "aggregate");
  if (op == Op::count) return items.size();
  if (items.empty()) {
    if (op == Op::sum) return 0.0;
    eval_fail("min/max of an empty list");
  }
  double acc = as_number(items[0], "aggregate element");
  for (std::size_t i = 1; i < items.size(); ++i) {
    double x = as_number(items[i], "aggregate element");
    if (op == Op::sum) acc += x;
    else if (op == Op::min) acc = std::min(acc, x);
    else acc = std::max(acc, x);
  }
  return acc;
}

Value compare(Op op, const Value& lhs, const Value& rhs) {
  if (op == Op::in) {
    if (!rhs.is_array()) eval_fail("'in' expects a list on the right, got " + value_kind(rhs));
    for (const auto& item : rhs)
      if (item == lhs) return true;
    return false;
  }
  if (op == Op::eq || op == Op::ne) {
    if (value_kind(lhs) != value_kind(rhs))
      eval_fail("cannot compare " + value_kind(lhs) + " with " + value_kind(rhs));
    bool eq = lhs.is_number() ? lhs.get<double>() == rhs.get<double>() : lhs == rhs;
    return op == Op::eq ? eq : !eq;
  }
  int sign;
  if (lhs.is_number() && rhs.is_number()) {
    double a = lhs.get<double>(), b = rhs.get<double>();
    sign = a < b ? -1 : (a > b ? 1 : 0);
  } else if (lhs.is_string() && rhs.is_string()) {
    const auto& a = lhs.get_ref<const std::string&>();
    const auto& b = rhs.get_ref<const std::string&>();
    sign = a < b ? -1 : (a > b ? 1 : 0);
  } else {
    eval_fail("cannot order " + value_kind(lhs) + " against " + value_kind(rhs));
  }
  switch (op) {
    case Op::lt: return sign < 0;
    case Op::le: return sign <= 0;
    case Op::gt: return sign > 0;
    case Op::ge: return sign >= 0;
    default: eval_fail("bad comparison");
  }
}

Value eval_node(const ExprNode& node, const EvalContext& ctx) {
  switch (node.op) {
    case Op::literal:
      return node.literal;
    case Op::product_ref: {
      const Value* v = ctx.product(node.name);
      if (!v) raise(Errc::missing_product, "product '" + node.name + "' is not present");
      Value out = *v;
      for (const auto& field : node.path) out = apply_field(out, field);
      return out;
    }
    case Op::fact_ref: {
      auto v = ctx.fact(node.name);
      if (!v) eval_fail("fact '" + node.name + "' has no value");
      return *v;
    }
    case Op::logical_not:
      return !as_bool(eval_node(*node.lhs, ctx), "'not'");
    case Op::logical_and: {
      // Both sides always evaluate; errors never hide in a short circuit.
      bool a = as_bool(eval_node(*node.lhs, ctx), "'and'");
      bool b = as_bool(eval_node(*node.rhs, ctx), "'and'");
      return a && b;
    }
    case Op::logical_or: {
      bool a = as_bool(eval_node(*node.lhs, ctx), "'or'");
      bool b = as_bool(eval_node(*node.rhs, ctx), "'or'");
      return a || b;
    }
    case Op::neg:
      return -as_number(eval_node(*node.lhs, ctx), "unary '-'");
    case Op::add:
    case Op::sub:
    case Op::mul:
    case Op::div: {
      double a = as_number(eval_node(*node.lhs, ctx), "arithmetic");
      double b = as_number(eval_node(*node.rhs, ctx), "arithmetic");
      switch (node.op) {
        case Op::add: return a + b;
        case Op::sub: return a - b;
        case Op::mul: return a * b;
        default:
          if (b == 0.0) eval_fail("division by zero");
          return a / b;
      }
    }
    case Op::lt:
    case Op::le:
    case Op::gt:
    case Op::ge:
    case Op::eq:
    case Op::ne:
    case Op::in:
      return compare(node.op, eval_node(*node.lhs, ctx), eval_node(*node.rhs, ctx));
    case Op::count:
    case Op::sum:
    case Op::min:
    case Op::max:
      return aggregate(node.op, eval_node(*node.lhs, ctx), node.field);
  }
  eval_fail("bad expression node");
}

// -------------------------------------------------------- static typing

using Type = Expression::Type;

[[noreturn]] void type_fail(const std::string& msg) {
  raise(Errc::validation_error, msg);
}

bool type_is(Type t, Type want) { return t == want || t == Type::unknown; }

Type infer_node(const ExprNode& node) {
  switch (node.op) {
    case Op::literal:
      if (node.literal.is_boolean()) return Type::boolean;
      if (node.literal.is_number()) return Type::number;
      return Type::string;
    case Op::product_ref:
      return Type::unknown;
    case Op::fact_ref:
      return Type::boolean;
    case Op::logical_not:
      if (!type_is(infer_node(*node.lhs), Type::boolean))
        type_fail("'not' applied to a non-boolean expression");
      return Type::boolean;
    case Op::logical_and:
    case Op::logical_or: {
      const char* word = node.op == Op::logical_and ? "'and'" : "'or'";
      if (!type_is(infer_node(*node.lhs), Type::boolean) ||
          !type_is(infer_node(*node.rhs), Type::boolean))
        type_fail(std::string(word) + " applied to a non-boolean expression");
      return Type::boolean;
    }
    case Op::neg:
      if (!type_is(infer_node(*node.lhs), Type::number))
        type_fail("unary '-' applied to a non-number");
      return Type::number;
    case Op::add:
    case Op::sub:
    case Op::mul:
    case Op::div:
      if (!type_is(infer_node(*node.lhs), Type::number) ||
          !type_is(infer_node(*node.rhs), Type::number))
        type_fail("arithmetic applied to a non-number");
      return Type::number;
    case Op::lt:
    case Op::le:
    case Op::gt:
    case Op::ge: {
      Type a = infer_node(*node.lhs), b = infer_node(*node.rhs);
      auto orderable = [](Type t) {
        return t == Type::number || t == Type::string || t == Type::unknown;
      };
      if (!orderable(a) || !orderable(b) ||
          (a != Type::unknown && b != Type::unknown && a != b))
        type_fail("ordering comparison on incompatible types");
      return Type::boolean;
    }
    case Op::eq:
    case Op::ne: {
      Type a = infer_node(*node.lhs), b = infer_node(*node.rhs);
      if (a != Type::unknown && b != Type::unknown && a != b)
        type_fail("equality comparison on incompatible types");
      return Type::boolean;
    }
    case Op::in:
      infer_node(*node.lhs);
      if (!type_is(infer_node(*node.rhs), Type::list))
        type_fail("'in' needs a list on the right");
      return Type::boolean;
    case Op::count:
    case Op::sum:
    case Op::min:
    case Op::max:
      if (!type_is(infer_node(*node.lhs), Type::list))
        type_fail("aggregate applied to a non-list expression");
      return Type::number;
  }
  type_fail("bad expression node");
}

// ----------------------------------------------------------------- misc

void collect_refs(const ExprNode& node, bool products, std::set<std::string>& out) {
  if (node.op == Op::product_ref && products) out.insert(node.name);
  if (node.op == Op::fact_ref && !products) out.insert(node.name);
  if (node.lhs) collect_refs(*node.lhs, products, out);
  if (node.rhs) collect_refs(*node.rhs, products, out);
}

const char* op_word(Op op) {
  switch (op) {
    case Op::logical_and: return "and";
    case Op::logical_or: return "or";
    case Op::logical_not: return "not";
    case Op::lt: return "lt";
    case Op::le: return "le";
    case Op::gt: return "gt";
    case Op::ge: return "ge";
    case Op::eq: return "eq";
    case Op::ne: return "ne";
    case Op::in: return "in";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::neg: return "neg";
    case Op::count: return "count";
    case Op::sum: return "sum";
    case Op::min: return "min";
    case Op::max: return "max";
    default: return "?";
  }
}

void dump_node(const ExprNode& node, std::ostringstream& out) {
  switch (node.op) {
    case Op::literal:
      out << node.literal.dump();
      return;
    case Op::product_ref:
    case Op::fact_ref:
      out << '(' << (node.op == Op::product_ref ? "product" : "fact") << " \""
          << node.name << '"';
      for (const auto& field : node.path) out << " ." << field;
      out << ')';
      return;
    default:
      out << '(' << op_word(node.op);
      if (node.lhs) {
        out << ' ';
        dump_node(*node.lhs, out);
      }
      if (node.rhs) {
        out << ' ';
        dump_node(*node.rhs, out);
      }
      if (!node.field.empty()) out << " ." << node.field;
      out << ')';
  }
}

}  // namespace

Expression Expression::parse(const std::string& text) {
  if (text.empty()) raise(Errc::syntax_error, "empty expression");
  Parser parser(text);
  Expression expr;
  expr.root_ = parser.parse();
  expr.text_ = text;
  return expr;
}

Value Expression::evaluate(const EvalContext& ctx) const {
  if (!root_) raise(Errc::evaluation_error, "evaluating an empty expression");
  return eval_node(*root_, ctx);
}

bool Expression::evaluate_bool(const EvalContext& ctx) const {
  Value v = evaluate(ctx);
  if (!v.is_boolean())
    raise(Errc::evaluation_error,
          "expression '" + text_ + "' evaluated to " + value_kind(v) + ", expected boolean");
  return v.get<bool>();
}

std::set<std::string> Expression::product_refs() const {
  std::set<std::string> out;
  if (root_) collect_refs(*root_, true, out);
  return out;
}

std::set<std::string> Expression::fact_refs() const {
  std::set<std::string> out;
  if (root_) collect_refs(*root_, false, out);
  return out;
}

Expression::Type Expression::static_type() const {
  if (!root_) raise(Errc::validation_error, "empty expression");
  return infer_node(*root_);
}

std::string Expression::dump() const {
  if (!root_) return "()";
  std::ostringstream out;
  dump_node(*root_, out);
  return out.str();
}

const char* to_string(Expression::Type type) {
  switch (type) {
    case Expression::Type::boolean: return "boolean";
    case Expression::Type::number: return "number";
    case Expression::Type::string: return "string";
    case Expression::Type::list: return "list";
    case Expression::Type::record: return "record";
    case Expression::Type::unknown: return "unknown";
  }
  return "?";
}

}  // namespace de
