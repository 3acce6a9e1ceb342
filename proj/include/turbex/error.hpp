#pragma once

#include <stdexcept>
#include <string>

namespace turbex {

/// Failure categories shared by the core library, the C API and the HTTP layer.
enum class ErrorKind {
  invalid_argument,
  parse,
  schema,
  structure,
  dimension,
  not_found,
  conflict,
  reference,
  configuration,
  io,
  training,
  oracle_refusal,
  empty_distribution,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace turbex
