#pragma once

// Synthetic labeled shapes used as a small stand-in classification benchmark.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "lightn/errors.hpp"
#include "lightn/pointcloud.hpp"
#include "lightn/rng.hpp"

namespace lightn {

enum class ShapeClass { sphere, cube_surface, cylinder, two_spheres };

inline std::string to_string(ShapeClass s) {
  switch (s) {
    case ShapeClass::sphere: return "sphere";
    case ShapeClass::cube_surface: return "cube_surface";
    case ShapeClass::cylinder: return "cylinder";
    case ShapeClass::two_spheres: return "two_spheres";
  }
  return "unknown";
}

inline ShapeClass parse_shape_class(const std::string& s) {
  if (s == "sphere") return ShapeClass::sphere;
  if (s == "cube_surface") return ShapeClass::cube_surface;
  if (s == "cylinder") return ShapeClass::cylinder;
  if (s == "two_spheres") return ShapeClass::two_spheres;
  throw ConfigError("unknown shape class '" + s + "'");
}

inline std::vector<ShapeClass> all_shape_classes() {
  return {ShapeClass::sphere, ShapeClass::cube_surface, ShapeClass::cylinder, ShapeClass::two_spheres};
}

struct LabeledCloud {
  PointCloud cloud;
  std::size_t label = 0;
};

using Dataset = std::vector<LabeledCloud>;

namespace detail {
inline Point unit_sphere_point(Rng& rng) {
  for (;;) {
    Point p{rng.normal(), rng.normal(), rng.normal()};
    const double r = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    if (r < 1e-12) continue;
    for (double& c : p) c /= r;
    return p;
  }
}
}  // namespace detail

// Area-uniform surface samples of the canonical shape, before any per-cloud
// transform or normalization. Sphere: unit radius. Cube: [-1, 1]^3 surface.
// Cylinder: radius 1, z in [-1, 1], with caps. Two spheres: unit spheres at x = +-1.5.
inline PointCloud sample_shape(ShapeClass shape, std::size_t n, Rng& rng) {
  PointCloud pc;
  pc.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Point p{};
    switch (shape) {
      case ShapeClass::sphere: p = detail::unit_sphere_point(rng); break;
      case ShapeClass::cube_surface: {
        const std::size_t face = static_cast<std::size_t>(rng.below(6));
        const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
        const double s = face % 2 == 0 ? 1.0 : -1.0;
        const std::size_t axis = face / 2;
        p[axis] = s;
        p[(axis + 1) % 3] = u;
        p[(axis + 2) % 3] = v;
        break;
      }
      case ShapeClass::cylinder: {
        // lateral area 4 pi, caps 2 pi in total
        const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        if (rng.uniform() < 2.0 / 3.0) {
          p = {std::cos(theta), std::sin(theta), rng.uniform(-1.0, 1.0)};
        } else {
          const double r = std::sqrt(rng.uniform());
          p = {r * std::cos(theta), r * std::sin(theta), rng.uniform() < 0.5 ? 1.0 : -1.0};
        }
        break;
      }
      case ShapeClass::two_spheres: {
        p = detail::unit_sphere_point(rng);
        p[0] += rng.uniform() < 0.5 ? 1.5 : -1.5;
        break;
      }
    }
    pc.points.push_back(p);
  }
  return pc;
}

// Centers the bounding box at the origin and scales so max |coordinate| = 1.
inline PointCloud normalize_unit_cube(PointCloud pc) {
  pc.validate();
  Point lo = pc[0], hi = pc[0];
  for (const Point& p : pc.points)
    for (std::size_t c = 0; c < 3; ++c) {
      lo[c] = std::min(lo[c], p[c]);
      hi[c] = std::max(hi[c], p[c]);
    }
  double half = 0.0;
  for (std::size_t c = 0; c < 3; ++c) half = std::max(half, 0.5 * (hi[c] - lo[c]));
  if (half <= 0.0) half = 1.0;
  for (Point& p : pc.points)
    for (std::size_t c = 0; c < 3; ++c) p[c] = (p[c] - 0.5 * (lo[c] + hi[c])) / half;
  return pc;
}

// Per-cloud nuisance transforms applied before normalization.
struct SyntheticOptions {
  double axis_scale_jitter = 0.3;  // each axis scaled by U[1 - j, 1 + j]
  bool rotate_z = true;            // uniform rotation about the z axis
  double noise_sigma = 0.01;       // isotropic Gaussian jitter per point
};

// per_class clouds of n points for each class, interleaved by class. Labels
// follow the order of `classes`.
inline Dataset gen_synthetic(const std::vector<ShapeClass>& classes, std::size_t n, std::size_t per_class,
                             std::uint64_t seed, const SyntheticOptions& opt = {}) {
  if (n < 8) throw DomainError("gen_synthetic: n must be >= 8");
  if (classes.empty()) throw DomainError("gen_synthetic: no classes");
  Rng rng(seed);
  Dataset ds;
  ds.reserve(classes.size() * per_class);
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < classes.size(); ++c) {
      PointCloud pc = sample_shape(classes[c], n, rng);
      Point sc{1.0, 1.0, 1.0};
      for (double& s : sc) s = rng.uniform(1.0 - opt.axis_scale_jitter, 1.0 + opt.axis_scale_jitter);
      const double theta = opt.rotate_z ? rng.uniform(0.0, 2.0 * std::numbers::pi) : 0.0;
      const double ct = std::cos(theta), st = std::sin(theta);
      for (Point& p : pc.points) {
        for (std::size_t d = 0; d < 3; ++d) p[d] = p[d] * sc[d] + opt.noise_sigma * rng.normal();
        const double x = ct * p[0] - st * p[1];
        const double y = st * p[0] + ct * p[1];
        p[0] = x;
        p[1] = y;
      }
      ds.push_back({normalize_unit_cube(std::move(pc)), c});
    }
  }
  return ds;
}

}  // namespace lightn
