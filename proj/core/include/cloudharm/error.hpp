#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cloudharm {

/// Coarse classification of failures. The CLI maps these onto exit codes and
/// the service onto HTTP statuses, so new kinds need a mapping in both.
enum class ErrorKind {
  usage,         // bad arguments, unknown collection, k <= 0
  parse,         // syntactically or structurally malformed input document
  resolution,    // reference to an undeclared group
  validation,    // model invariant broken
  build,         // dangling store references while assembling a model
  modification,  // what-if step could not be applied
  not_found,     // model or document absent
  resource,      // configured limit exceeded (path cap)
  conflict,      // concurrent lineage write
  storage,       // filesystem failure
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Process exit status: 1 usage, 3 storage, 2 everything else.
int exit_code(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message, std::string subject = {})
      : std::runtime_error(std::move(message)), kind_(kind), subject_(std::move(subject)) {}

  ErrorKind kind() const noexcept { return kind_; }

  /// The offending field, id, or reference, when there is one.
  const std::string& subject() const noexcept { return subject_; }

 private:
  ErrorKind kind_;
  std::string subject_;
};

/// Modification errors carry the zero-based index of the failing step.
class ModificationError : public Error {
 public:
  ModificationError(std::size_t step, std::string message, std::string subject = {})
      : Error(ErrorKind::modification, std::move(message), std::move(subject)), step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace cloudharm
