#include "fairdiag/tensor.hpp"

#include <cmath>

#include "fairdiag/errors.hpp"

namespace fairdiag {

std::string Tensor::shape_str() const {
  return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::require_finite(const char* what) const {
  if (!all_finite()) {
    throw NumericError(std::string(what) + ": non-finite value in tensor " + shape_str());
  }
}

}  // namespace fairdiag
