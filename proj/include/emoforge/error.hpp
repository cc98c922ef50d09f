#pragma once

#include <stdexcept>
#include <string>

namespace emoforge {

enum class ErrorKind {
  InvalidInput,
  DegenerateInput,
  Shape,
  UnsupportedOp,
  Config,
  InvalidLabel,
  Format,
  InsufficientData,
  UndefinedMetric,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::DegenerateInput: return "degenerate input";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::UnsupportedOp: return "unsupported op";
    case ErrorKind::Config: return "config error";
    case ErrorKind::InvalidLabel: return "invalid label";
    case ErrorKind::Format: return "format error";
    case ErrorKind::InsufficientData: return "insufficient data";
    case ErrorKind::UndefinedMetric: return "undefined metric";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace emoforge
