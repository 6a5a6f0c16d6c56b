#pragma once

#include <stdexcept>
#include <string>

namespace mvlab {

enum class ErrorKind {
  invalid_spec,  // malformed model data
  regime,        // a theorem's hypotheses on delta/gamma are not met
  numeric,       // overflow, non-finite values, non-convergence that cannot be flagged
  config,        // experiment configuration problems
  io,            // filesystem
  unsupported,   // operation not available for this input
  domain,        // argument outside the mathematical domain
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_spec: return "invalid-spec";
    case ErrorKind::regime: return "regime";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::domain: return "domain";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace mvlab
