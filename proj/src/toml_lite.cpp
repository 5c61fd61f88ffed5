#include "de/toml_lite.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "de/errors.hpp"

namespace de {
namespace {

struct Cursor {
  const std::string& line;
  std::size_t pos = 0;
  const std::string& file;
  int lineno;

  [[noreturn]] void fail(const std::string& msg) const {
    raise(Errc::parse_error, file + ":" + std::to_string(lineno) + ": " + msg);
  }

  void skip_ws() {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
  }

  bool done() {
    skip_ws();
    return pos >= line.size() || line[pos] == '#';
  }

  char peek() const { return pos < line.size() ? line[pos] : '\0'; }
};

bool bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
}

std::string parse_bare_word(Cursor& cur) {
  cur.skip_ws();
  std::size_t start = cur.pos;
  while (cur.pos < cur.line.size() && bare_key_char(cur.line[cur.pos])) ++cur.pos;
  if (cur.pos == start) cur.fail("expected a key");
  return cur.line.substr(start, cur.pos - start);
}

std::string parse_basic_string(Cursor& cur) {
  ++cur.pos;  // opening quote
  std::string out;
  while (true) {
    if (cur.pos >= cur.line.size()) cur.fail("unterminated string");
    char c = cur.line[cur.pos++];
    if (c == '"') return out;
    if (c == '\\') {
      if (cur.pos >= cur.line.size()) cur.fail("unterminated escape");
      char esc = cur.line[cur.pos++];
      switch (esc) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        default: cur.fail(std::string("unknown escape '\\") + esc + "'");
      }
    } else {
      out += c;
    }
  }
}

std::string parse_literal_string(Cursor& cur) {
  ++cur.pos;  // opening quote
  std::size_t end = cur.line.find('\'', cur.pos);
  if (end == std::string::npos) cur.fail("unterminated literal string");
  std::string out = cur.line.substr(cur.pos, end - cur.pos);
  cur.pos = end + 1;
  return out;
}

Value parse_scalar(Cursor& cur) {
  cur.skip_ws();
  char c = cur.peek();
  if (c == '"') return parse_basic_string(cur);
  if (c == '\'') return parse_literal_string(cur);
  std::size_t start = cur.pos;
  while (cur.pos < cur.line.size() && cur.line[cur.pos] != ',' && cur.line[cur.pos] != ']' &&
         cur.line[cur.pos] != '#' && cur.line[cur.pos] != ' ' && cur.line[cur.pos] != '\t')
    ++cur.pos;
  std::string word = cur.line.substr(start, cur.pos - start);
  if (word.empty()) cur.fail("expected a value");
  if (word == "true") return true;
  if (word == "false") return false;
  bool is_float = word.find('.') != std::string::npos ||
                  word.find('e') != std::string::npos ||
                  word.find('E') != std::string::npos;
  try {
    std::size_t used = 0;
    if (is_float) {
      double v = std::stod(word, &used);
      if (used != word.size()) cur.fail("bad number '" + word + "'");
      return v;
    }
    long long v = std::stoll(word, &used);
    if (used != word.size()) cur.fail("bad number '" + word + "'");
    return v;
  } catch (const std::exception&) {
    cur.fail("bad value '" + word + "'");
  }
}

Value parse_value(Cursor& cur) {
  cur.skip_ws();
  if (cur.peek() == '[') {
    ++cur.pos;
    Value arr = Value::array();
    cur.skip_ws();
    if (cur.peek() == ']') {
      ++cur.pos;
      return arr;
    }
    while (true) {
      arr.push_back(parse_scalar(cur));
      cur.skip_ws();
      if (cur.peek() == ',') {
        ++cur.pos;
        cur.skip_ws();
        if (cur.peek() == ']') {  // trailing comma
          ++cur.pos;
          return arr;
        }
        continue;
      }
      if (cur.peek() == ']') {
        ++cur.pos;
        return arr;
      }
      cur.fail("expected ',' or ']' in array");
    }
  }
  return parse_scalar(cur);
}

std::vector<std::string> split_path(const std::string& dotted, Cursor& cur) {
  std::vector<std::string> parts;
  std::string part;
  for (char c : dotted) {
    if (c == '.') {
      if (part.empty()) cur.fail("empty path segment in '" + dotted + "'");
      parts.push_back(part);
      part.clear();
    } else {
      part += c;
    }
  }
  if (part.empty()) cur.fail("empty path segment in '" + dotted + "'");
  parts.push_back(part);
  return parts;
}

// Walks to the table named by `path`. Intermediate arrays-of-tables resolve
// to their last element, per TOML rules.
Value* resolve(Value& root, const std::vector<std::string>& path, std::size_t count,
               Cursor& cur) {
  Value* node = &root;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string& seg = path[i];
    if (!node->is_object()) cur.fail("'" + seg + "' is not inside a table");
    Value& child = (*node)[seg];
    if (child.is_null()) child = Value::object();
    if (child.is_array()) {
      if (child.empty()) cur.fail("'" + seg + "' is an empty table array");
      node = &child.back();
    } else if (child.is_object()) {
      node = &child;
    } else {
      cur.fail("'" + seg + "' is already a value");
    }
  }
  return node;
}

}  // namespace

Value parse_toml_lite(const std::string& text, const std::string& filename) {
  Value root = Value::object();
  std::vector<std::string> context;  // current table path

  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    Cursor cur{line, 0, filename, lineno};
    if (cur.done()) continue;

    if (cur.peek() == '[') {
      ++cur.pos;
      bool array_of_tables = cur.peek() == '[';
      if (array_of_tables) ++cur.pos;
      std::string dotted = parse_bare_word(cur);
      cur.skip_ws();
      if (cur.peek() != ']') cur.fail("expected ']'");
      ++cur.pos;
      if (array_of_tables) {
        if (cur.peek() != ']') cur.fail("expected ']]'");
        ++cur.pos;
      }
      if (!cur.done()) cur.fail("unexpected text after table header");

      auto path = split_path(dotted, cur);
      if (array_of_tables) {
        Value* parent = resolve(root, path, path.size() - 1, cur);
        Value& arr = (*parent)[path.back()];
        if (arr.is_null()) arr = Value::array();
        if (!arr.is_array()) cur.fail("'" + path.back() + "' is not a table array");
        arr.push_back(Value::object());
      } else {
        Value* table = resolve(root, path, path.size(), cur);
        if (!table->is_object()) cur.fail("'" + dotted + "' is not a table");
      }
      context = path;
      continue;
    }

    std::string key = parse_bare_word(cur);
    if (key.find('.') != std::string::npos) cur.fail("dotted keys are not supported");
    cur.skip_ws();
    if (cur.peek() != '=') cur.fail("expected '=' after key '" + key + "'");
    ++cur.pos;
    Value value = parse_value(cur);
    if (!cur.done()) cur.fail("unexpected text after value for '" + key + "'");

    Value* table = resolve(root, context, context.size(), cur);
    if (table->contains(key)) cur.fail("duplicate key '" + key + "'");
    (*table)[key] = std::move(value);
  }
  return root;
}

Value load_toml_lite(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::io_error, "cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_toml_lite(buf.str(), path);
}

}  // namespace de
