#pragma once

#include <stdexcept>
#include <string>

namespace figret {

enum class ErrorKind {
  Parameter = 1,
  Structural,
  Protocol,
  Format,
  Io,
  Consistency,
  Numeric,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Bad argument or configuration value.
struct ParameterError : Error {
  explicit ParameterError(const std::string& w) : Error(ErrorKind::Parameter, w) {}
};
// Shapes or layouts that do not line up.
struct StructuralError : Error {
  explicit StructuralError(const std::string& w) : Error(ErrorKind::Structural, w) {}
};
// Training stages invoked out of order.
struct ProtocolError : Error {
  explicit ProtocolError(const std::string& w) : Error(ErrorKind::Protocol, w) {}
};
// Malformed or truncated file.
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error(ErrorKind::Format, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorKind::Io, w) {}
};
// Two inputs that should describe the same records do not.
struct ConsistencyError : Error {
  explicit ConsistencyError(const std::string& w) : Error(ErrorKind::Consistency, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorKind::Numeric, w) {}
};

}  // namespace figret
