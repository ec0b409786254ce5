#pragma once

#include <stdexcept>
#include <string>

namespace apf {

/// Malformed input, violated precondition, or an inconsistent file.
/// The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values, zero denominators, or divergence during training.
/// The CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace apf
