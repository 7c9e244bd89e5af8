#pragma once

#include <stdexcept>
#include <string>

namespace gmmssl {

// Invalid input: bad shapes, invalid model parameters, malformed config.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A projection or subspace that is numerically degenerate.
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite intermediate during a loss / gradient evaluation.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, long index)
      : std::runtime_error(what + " (index " + std::to_string(index) + ")"),
        index_(index) {}

  long index() const { return index_; }

 private:
  long index_;
};

}  // namespace gmmssl
