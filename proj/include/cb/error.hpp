#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace cb {

// Broad failure classes; each maps to one CLI exit code.
enum class ErrorKind {
  usage,       // bad arguments, unreadable input files
  validation,  // configuration documents rejected
  provider,    // resource acquisition / mapping
  execution,   // workflow engine
  repository,  // artifact repository
};

int exit_code(ErrorKind kind) noexcept;
const char* to_string(ErrorKind kind) noexcept;

// Module-qualified error, e.g. code "provider.capacity".
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

}  // namespace cb
