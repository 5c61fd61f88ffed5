#pragma once

#include <string>

#include "de/value.hpp"

namespace de {

// Minimal TOML-style reader backing the engine and scenario config files:
// [table] and [[array-of-tables]] headers, key = value lines, "basic" and
// 'literal' strings, integers, floats, booleans, and single-line arrays of
// scalars. Errors carry file:line positions. See docs/config.md.
Value parse_toml_lite(const std::string& text, const std::string& filename);

Value load_toml_lite(const std::string& path);

}  // namespace de
