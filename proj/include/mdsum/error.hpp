#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mdsum {

// Failure categories surfaced by the command line front end.
enum class ErrorKind { config, io, backend, validation };

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::backend: return "backend";
    case ErrorKind::validation: return "validation";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error config_error(const std::string& msg) { return {ErrorKind::config, msg}; }
inline Error io_error(const std::string& msg) { return {ErrorKind::io, msg}; }
inline Error backend_error(const std::string& msg) { return {ErrorKind::backend, msg}; }
inline Error validation_error(const std::string& msg) { return {ErrorKind::validation, msg}; }

}  // namespace mdsum
