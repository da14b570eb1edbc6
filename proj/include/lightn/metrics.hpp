#pragma once

// Geometric quality of a sampled subset.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "lightn/errors.hpp"
#include "lightn/pointcloud.hpp"

namespace lightn {

// Smallest Euclidean distance between two distinct entries of q; +inf below two points.
inline double min_pairwise_distance(const PointCloud& q) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t j = i + 1; j < q.size(); ++j) best = std::min(best, sq_dist(q[i], q[j]));
  return std::sqrt(best);
}

// Largest distance from an input point to its nearest sampled point.
inline double coverage_radius(const PointCloud& q, const PointCloud& p) {
  if (q.empty() || p.empty()) throw DomainError("coverage_radius: empty cloud");
  double worst = 0.0;
  for (const Point& a : p.points) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const Point& b : q.points) nearest = std::min(nearest, sq_dist(a, b));
    worst = std::max(worst, nearest);
  }
  return std::sqrt(worst);
}

}  // namespace lightn
