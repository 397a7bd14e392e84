#pragma once

#include <stdexcept>
#include <string>

namespace gama {

/// Failure category; the CLI maps each one onto a process exit code.
enum class ErrorKind {
  internal,       // exit 1
  config,         // exit 2
  data,           // exit 3
  compatibility,  // exit 4
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  explicit Error(const std::string& what) : Error(ErrorKind::internal, what) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::compatibility: return 4;
    case ErrorKind::internal: break;
  }
  return 1;
}

}  // namespace gama
