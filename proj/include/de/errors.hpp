#pragma once

#include <stdexcept>
#include <string>

namespace de {

// Engine-wide error codes. Plugin and framework failures are caught at module
// boundaries and turned into cycle outcomes or diagnostics; these codes keep
// the failure kind machine-readable across that boundary.
enum class Errc {
  duplicate_channel,
  invalid_name,
  space_closed,
  block_locked,
  duplicate_producer,
  already_archived,
  unknown_channel,
  unknown_product,
  syntax_error,
  unknown_function,
  cyclic_dependency,
  undefined_fact,
  duplicate_name,
  missing_product,
  evaluation_error,
  unknown_plugin,
  parameter_error,
  invalid_transition,
  adapter_unavailable,
  io_error,
  parse_error,
  validation_error,
  timeout,
};

const char* errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message),
        code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace de
