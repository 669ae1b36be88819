#pragma once

#include <cstdint>
#include <string>

#include "fairdiag/autodiff.hpp"
#include "fairdiag/rng.hpp"

namespace fairdiag {

// Every parameter draws from its own stream keyed on (seed, id) so that the
// presence of unrelated parameters never shifts another parameter's init.
inline uint64_t id_stream(const std::string& id) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a
  for (unsigned char c : id) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline Parameter uniform_param(const std::string& id, int rows, int cols, double lo, double hi,
                               uint64_t seed) {
  Rng rng = Rng::derive(seed, id_stream(id));
  Tensor t(rows, cols);
  for (size_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(lo, hi);
  return Parameter(id, std::move(t));
}

inline Parameter embedding_param(const std::string& id, int rows, int cols, uint64_t seed) {
  return uniform_param(id, rows, cols, -0.01, 0.01, seed);
}

inline Parameter dense_param(const std::string& id, int fan_in, int rows, int cols, uint64_t seed) {
  const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return uniform_param(id, rows, cols, -s, s, seed);
}

inline Parameter zeros_param(const std::string& id, int rows, int cols) {
  return Parameter(id, Tensor(rows, cols));
}

}  // namespace fairdiag
