#include "sisn/error.hpp"

namespace sisn {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kShapeMismatch: return "shape_mismatch";
    case ErrorKind::kMissingFile: return "missing_file";
    case ErrorKind::kUnsupportedFormat: return "unsupported_format";
    case ErrorKind::kTruncatedData: return "truncated_data";
    case ErrorKind::kWriteFailure: return "write_failure";
    case ErrorKind::kParse: return "parse_error";
    case ErrorKind::kVersionMismatch: return "version_mismatch";
    case ErrorKind::kCorrupt: return "corrupt_file";
    case ErrorKind::kScaleMismatch: return "scale_mismatch";
    case ErrorKind::kDivergence: return "divergence";
  }
  return "unknown";
}

}  // namespace sisn
