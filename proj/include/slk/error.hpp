#pragma once

#include <stdexcept>
#include <string>

namespace slk {

// Input that violates an operation's contract (shapes, spaces, ranges).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced a non-finite or divergent value.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace slk
