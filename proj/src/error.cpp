#include "protoclass/error.hpp"

namespace protoclass {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kValidation:
      return "validation";
    case ErrorKind::kData:
      return "data";
    case ErrorKind::kDivergence:
      return "divergence";
  }
  return "unknown";
}

}  // namespace protoclass
