#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mcisim {

// Failure classes shared by every module. The server mirrors these as
// protocol error codes and the CLI maps them onto exit codes.
enum class ErrorCode {
  Format,        // unparseable or schema-violating document
  Input,         // bad argument (duplicate id, wrong layout length, ...)
  NotFound,      // unknown instance / session
  Generation,    // scenario generator cannot satisfy category constraints
  Layout,        // rejection sampling exhausted
  Precondition,  // session start requirements not met
  Protocol,      // message sequencing violated (end without begin, ...)
  Role,          // caller role not allowed
  Phase,         // session phase does not allow the action
  Range,         // responder too far from patient
  Expired,       // session clock past the time limit
  Clock,         // non-monotonic clock
  Key,           // unknown tweakable parameter
  ClosedLog,     // append after SessionEnd
  Integrity,     // log/scenario mismatch, unknown references
  Divergence,    // replay regenerated a different event
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Replay divergence carries the first differing seq.
class DivergenceError : public Error {
 public:
  DivergenceError(std::uint64_t seq, const std::string& message)
      : Error(ErrorCode::Divergence, message), seq_(seq) {}

  std::uint64_t seq() const noexcept { return seq_; }

 private:
  std::uint64_t seq_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Format: return "format";
    case ErrorCode::Input: return "input";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::Generation: return "generation";
    case ErrorCode::Layout: return "layout";
    case ErrorCode::Precondition: return "precondition";
    case ErrorCode::Protocol: return "protocol";
    case ErrorCode::Role: return "role";
    case ErrorCode::Phase: return "phase";
    case ErrorCode::Range: return "range";
    case ErrorCode::Expired: return "session_expired";
    case ErrorCode::Clock: return "clock";
    case ErrorCode::Key: return "key";
    case ErrorCode::ClosedLog: return "closed_log";
    case ErrorCode::Integrity: return "integrity";
    case ErrorCode::Divergence: return "divergence";
  }
  return "unknown";
}

}  // namespace mcisim
