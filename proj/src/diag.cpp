#include "de/diag.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace de::diag {
namespace {

std::atomic<Level> g_level{Level::warn};
std::mutex g_mu;

const char* level_name(Level level) {
  switch (level) {
    case Level::debug: return "debug";
    case Level::info: return "info";
    case Level::warn: return "warn";
    case Level::error: return "error";
  }
  return "?";
}

}  // namespace

void set_level(Level level) { g_level.store(level); }

Level level() { return g_level.load(); }

void log(Level lvl, TimeMs ts, const std::string& channel, const std::string& module,
         const std::string& event, const std::string& detail) {
  if (lvl < g_level.load()) return;
  std::lock_guard lock(g_mu);
  std::cerr << format_iso8601(ts) << ' ' << level_name(lvl) << ' ' << channel << ' '
            << (module.empty() ? "-" : module) << ' ' << event << ' ' << detail << '\n';
}

}  // namespace de::diag
