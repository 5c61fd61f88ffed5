#pragma once

#include <string>

#include "de/value.hpp"

namespace de::diag {

enum class Level { debug = 0, info = 1, warn = 2, error = 3 };

void set_level(Level level);
Level level();

// Structured diagnostics line on standard error:
//   <iso ts> <level> <channel> <module> <event> <detail>
void log(Level level, TimeMs ts, const std::string& channel, const std::string& module,
         const std::string& event, const std::string& detail);

}  // namespace de::diag
