#include "cloudharm/error.hpp"

namespace cloudharm {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::parse: return "parse";
    case ErrorKind::resolution: return "resolution";
    case ErrorKind::validation: return "validation";
    case ErrorKind::build: return "build";
    case ErrorKind::modification: return "modification";
    case ErrorKind::not_found: return "not_found";
    case ErrorKind::resource: return "resource";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::storage: return "storage";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage: return 1;
    case ErrorKind::storage: return 3;
    default: return 2;
  }
}

}  // namespace cloudharm
