#pragma once

#include <stdexcept>
#include <string>

namespace eodeblur {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller-supplied argument violates an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A file could not be read, parsed, or written.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// The predicted working set exceeds the hard (virtual) memory budget.
class BudgetExceeded : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InvalidArgument(message);
}

}  // namespace eodeblur
