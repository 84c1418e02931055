#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace seccoder {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition or domain invariant was violated by the caller's input.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed file or payload. `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Remote endpoint unreachable or returned a transport-level failure. Retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Remote endpoint answered, but the answer breaks the wire contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Required external tool is missing or crashed; distinct from a verdict on the input.
class EnvironmentError : public Error {
 public:
  using Error::Error;
};

}  // namespace seccoder
