#include "figret/error.hpp"

namespace figret {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Structural: return "structural error";
    case ErrorKind::Protocol: return "protocol error";
    case ErrorKind::Format: return "format error";
    case ErrorKind::Io: return "io error";
    case ErrorKind::Consistency: return "consistency error";
    case ErrorKind::Numeric: return "numeric error";
  }
  return "error";
}

}  // namespace figret
