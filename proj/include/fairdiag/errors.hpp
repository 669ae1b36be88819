#pragma once

#include <stdexcept>
#include <string>

namespace fairdiag {

// Malformed/inconsistent input data (CSV rows, id maps, degenerate columns).
// The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure during computation (NaN loss, undefined metric).
// The CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fairdiag
