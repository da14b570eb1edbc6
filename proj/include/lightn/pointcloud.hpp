#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "lightn/errors.hpp"
#include "lightn/matrix.hpp"

namespace lightn {

using Point = std::array<double, 3>;

// Ordered positions into a PointCloud.
using SampleIndices = std::vector<std::size_t>;

inline double sq_dist(const Point& a, const Point& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// Ordered XYZ point set (no extra per-point features).
struct PointCloud {
  std::vector<Point> points;

  PointCloud() = default;
  explicit PointCloud(std::vector<Point> pts) : points(std::move(pts)) {}

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  const Point& operator[](std::size_t i) const { return points[i]; }
  Point& operator[](std::size_t i) { return points[i]; }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

  // Throws DomainError when empty or any coordinate is non-finite.
  void validate() const {
    if (points.empty()) throw DomainError("point cloud is empty");
    for (const Point& p : points)
      for (double c : p)
        if (!std::isfinite(c)) throw DomainError("point cloud has a non-finite coordinate");
  }

  Matrix to_matrix() const {
    Matrix m(points.size(), 3);
    for (std::size_t i = 0; i < points.size(); ++i)
      for (std::size_t c = 0; c < 3; ++c) m(i, c) = points[i][c];
    return m;
  }

  static PointCloud from_matrix(const Matrix& m) {
    if (m.cols() != 3) throw DimensionError("PointCloud::from_matrix: expected 3 columns, got " + m.shape());
    PointCloud pc;
    pc.points.resize(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t c = 0; c < 3; ++c) pc.points[i][c] = m(i, c);
    return pc;
  }

  PointCloud subset(const SampleIndices& idx) const {
    PointCloud out;
    out.points.reserve(idx.size());
    for (std::size_t i : idx) {
      if (i >= points.size()) throw DomainError("subset index out of range");
      out.points.push_back(points[i]);
    }
    return out;
  }
};

}  // namespace lightn
