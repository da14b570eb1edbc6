#pragma once

// Task-irrelevant samplers and the test-time matching used to turn generated
// points into a true subset of the input.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "lightn/errors.hpp"
#include "lightn/pointcloud.hpp"
#include "lightn/rng.hpp"

namespace lightn {

// Extends `selected` greedily to m indices: each step appends the unselected
// point whose minimum squared distance to the selection is largest (lowest
// index on ties). An empty selection starts from index 0.
inline SampleIndices fps_complete(const PointCloud& p, SampleIndices selected, std::size_t m) {
  const std::size_t n = p.size();
  if (m > n) throw DomainError("fps: m = " + std::to_string(m) + " exceeds N = " + std::to_string(n));
  if (selected.size() >= m) return selected;
  std::vector<char> taken(n, 0);
  for (std::size_t i : selected) {
    if (i >= n) throw DomainError("fps: seed index out of range");
    taken[i] = 1;
  }
  if (selected.empty()) {
    selected.push_back(0);
    taken[0] = 1;
  }
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    if (taken[i]) continue;
    for (std::size_t s : selected) min_d[i] = std::min(min_d[i], sq_dist(p[i], p[s]));
  }
  selected.reserve(m);
  while (selected.size() < m) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best == n || min_d[i] > min_d[best]) best = i;
    }
    selected.push_back(best);
    taken[best] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (!taken[i]) min_d[i] = std::min(min_d[i], sq_dist(p[i], p[best]));
    }
  }
  return selected;
}

// Farthest point sampling from `start`.
inline SampleIndices fps(const PointCloud& p, std::size_t m, std::size_t start = 0) {
  if (m < 1) throw DomainError("fps: m must be >= 1");
  if (m > p.size()) {
    throw DomainError("fps: m = " + std::to_string(m) + " exceeds N = " + std::to_string(p.size()));
  }
  if (start >= p.size()) throw DomainError("fps: start index out of range");
  return fps_complete(p, {start}, m);
}

// m distinct indices without replacement (partial Fisher-Yates).
inline SampleIndices random_sample(const PointCloud& p, std::size_t m, std::uint64_t seed) {
  const std::size_t n = p.size();
  if (m < 1) throw DomainError("random_sample: m must be >= 1");
  if (m > n) throw DomainError("random_sample: m = " + std::to_string(m) + " exceeds N = " + std::to_string(n));
  SampleIndices perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(perm[i], perm[j]);
  }
  perm.resize(m);
  return perm;
}

using VoxelKey = std::array<std::int64_t, 3>;

inline Point bbox_min(const PointCloud& p) {
  Point lo = p.empty() ? Point{0.0, 0.0, 0.0} : p[0];
  for (const Point& q : p.points)
    for (std::size_t c = 0; c < 3; ++c) lo[c] = std::min(lo[c], q[c]);
  return lo;
}

// Members of each occupied voxel of the given edge length. The grid is anchored
// at the bounding-box minimum: key = floor((x - min) / edge).
inline std::map<VoxelKey, std::vector<std::size_t>> voxel_occupancy(const PointCloud& p, double edge) {
  if (!(edge > 0.0)) throw DomainError("voxel edge must be positive");
  const Point lo = bbox_min(p);
  std::map<VoxelKey, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < p.size(); ++i) {
    VoxelKey k;
    for (std::size_t c = 0; c < 3; ++c) k[c] = static_cast<std::int64_t>(std::floor((p[i][c] - lo[c]) / edge));
    cells[k].push_back(i);
  }
  return cells;
}

namespace detail {
inline SampleIndices voxel_representatives(const PointCloud& p, double edge) {
  SampleIndices reps;
  for (const auto& [key, members] : voxel_occupancy(p, edge)) {
    Point c{0.0, 0.0, 0.0};
    for (std::size_t i : members)
      for (std::size_t d = 0; d < 3; ++d) c[d] += p[i][d];
    for (double& v : c) v /= static_cast<double>(members.size());
    std::size_t best = members.front();
    for (std::size_t i : members)
      if (sq_dist(p[i], c) < sq_dist(p[best], c)) best = i;
    reps.push_back(best);
  }
  return reps;
}
}  // namespace detail

// Voxel-grid baseline. The edge length is bisected until the occupied voxel
// count is the largest value <= target_m; each voxel contributes the input
// point nearest its centroid, and FPS fills the remainder up to target_m.
inline SampleIndices voxel_sample_indices(const PointCloud& p, std::size_t target_m) {
  p.validate();
  if (target_m < 1) throw DomainError("voxel_sample: target_m must be >= 1");
  const std::size_t m = std::min(target_m, p.size());
  const Point lo = bbox_min(p);
  double extent = 0.0;
  for (const Point& q : p.points)
    for (std::size_t c = 0; c < 3; ++c) extent = std::max(extent, q[c] - lo[c]);
  extent = std::max(extent, 1e-12);

  double small = extent * 1e-9;
  double large = extent * 2.0;  // one voxel holds the whole cloud
  SampleIndices reps;
  if (voxel_occupancy(p, small).size() <= m) {
    reps = detail::voxel_representatives(p, small);
  } else {
    for (int it = 0; it < 100; ++it) {
      const double mid = 0.5 * (small + large);
      if (voxel_occupancy(p, mid).size() > m) small = mid;
      else large = mid;
    }
    reps = detail::voxel_representatives(p, large);
  }
  return fps_complete(p, std::move(reps), m);
}

inline PointCloud voxel_sample(const PointCloud& p, std::size_t target_m) {
  return p.subset(voxel_sample_indices(p, target_m));
}

// Index of the nearest input point for each generated point (lowest index on ties).
inline SampleIndices nn_match(const PointCloud& generated, const PointCloud& p) {
  if (generated.empty() || p.empty()) throw DomainError("nn_match: empty cloud");
  SampleIndices out(generated.size());
  for (std::size_t g = 0; g < generated.size(); ++g) {
    std::size_t best = 0;
    double best_d = sq_dist(generated[g], p[0]);
    for (std::size_t i = 1; i < p.size(); ++i) {
      const double d = sq_dist(generated[g], p[i]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    out[g] = best;
  }
  return out;
}

// Drops repeated indices (first occurrence wins), then FPS-completes to exactly m.
inline SampleIndices dedup_and_complete(const SampleIndices& matched, const PointCloud& p, std::size_t m) {
  if (m > p.size()) {
    throw DomainError("dedup_and_complete: m = " + std::to_string(m) + " exceeds N = " + std::to_string(p.size()));
  }
  std::vector<char> seen(p.size(), 0);
  SampleIndices unique;
  unique.reserve(m);
  for (std::size_t i : matched) {
    if (i >= p.size()) throw DomainError("dedup_and_complete: index out of range");
    if (seen[i]) continue;
    seen[i] = 1;
    unique.push_back(i);
    if (unique.size() == m) break;
  }
  return fps_complete(p, std::move(unique), m);
}

}  // namespace lightn
