#include "de/value.hpp"

#include <cstdio>
#include <ctime>

#include "de/errors.hpp"

namespace de {

std::string format_iso8601(TimeMs ms) {
  std::time_t secs = static_cast<std::time_t>(ms / 1000);
  int frac = static_cast<int>(ms % 1000);
  if (frac < 0) {
    frac += 1000;
    secs -= 1;
  }
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[80];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ",
                tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday, tm.tm_hour,
                tm.tm_min, tm.tm_sec, frac);
  return buf;
}

TimeMs WallClock::now_ms() const {
  std::timespec ts{};
  clock_gettime(CLOCK_REALTIME, &ts);
  return static_cast<TimeMs>(ts.tv_sec) * 1000 + ts.tv_nsec / 1000000;
}

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::duplicate_channel: return "DuplicateChannel";
    case Errc::invalid_name: return "InvalidName";
    case Errc::space_closed: return "SpaceClosed";
    case Errc::block_locked: return "BlockLocked";
    case Errc::duplicate_producer: return "DuplicateProducer";
    case Errc::already_archived: return "AlreadyArchived";
    case Errc::unknown_channel: return "UnknownChannel";
    case Errc::unknown_product: return "UnknownProduct";
    case Errc::syntax_error: return "SyntaxError";
    case Errc::unknown_function: return "UnknownFunction";
    case Errc::cyclic_dependency: return "CyclicDependency";
    case Errc::undefined_fact: return "UndefinedFact";
    case Errc::duplicate_name: return "DuplicateName";
    case Errc::missing_product: return "MissingProduct";
    case Errc::evaluation_error: return "EvaluationError";
    case Errc::unknown_plugin: return "UnknownPlugin";
    case Errc::parameter_error: return "ParameterError";
    case Errc::invalid_transition: return "InvalidTransition";
    case Errc::adapter_unavailable: return "AdapterUnavailable";
    case Errc::io_error: return "IoError";
    case Errc::parse_error: return "ParseError";
    case Errc::validation_error: return "ValidationError";
    case Errc::timeout: return "Timeout";
  }
  return "Error";
}

}  // namespace de
