#include "turbex/error.hpp"

namespace turbex {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::parse: return "parse_error";
    case ErrorKind::schema: return "schema_error";
    case ErrorKind::structure: return "structure_error";
    case ErrorKind::dimension: return "dimension_error";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::reference: return "reference_error";
    case ErrorKind::configuration: return "configuration_error";
    case ErrorKind::io: return "io_error";
    case ErrorKind::training: return "training_error";
    case ErrorKind::oracle_refusal: return "oracle_refusal";
    case ErrorKind::empty_distribution: return "empty_distribution";
  }
  return "unknown";
}

}  // namespace turbex
