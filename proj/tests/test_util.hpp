#pragma once

#include <cstddef>
#include <cstdint>

#include "lightn/matrix.hpp"
#include "lightn/ops.hpp"
#include "lightn/pointcloud.hpp"
#include "lightn/rng.hpp"
#include "lightn/tape.hpp"

namespace lightn::test {

inline Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

inline PointCloud random_cloud(std::size_t n, std::uint64_t seed, double extent = 1.0) {
  return PointCloud::from_matrix(random_matrix(n, 3, seed, -extent, extent));
}

// sum(w .* y) with fixed random weights, so every output entry gets a
// distinct upstream gradient.
inline Var weighted_sum(const Var& y, std::uint64_t seed = 99) {
  Tape& t = *y.tape();
  return sum(mul(y, t.constant(random_matrix(y.rows(), y.cols(), seed))));
}

}  // namespace lightn::test
