#pragma once

#include <stdexcept>
#include <string>

namespace adatrack {

/// Bad caller input: malformed boxes, mismatched extents, unreadable files.
/// The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// An internal invariant failed. The CLI maps this to exit code 3.
class InvariantViolation : public std::logic_error {
 public:
  explicit InvariantViolation(const std::string& what) : std::logic_error(what) {}
};

}  // namespace adatrack
