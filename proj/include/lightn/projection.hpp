#pragma once

// Differentiable soft projection of generated points onto the input cloud.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "lightn/errors.hpp"
#include "lightn/ops.hpp"
#include "lightn/pointcloud.hpp"
#include "lightn/tape.hpp"

namespace lightn {

// Shape of the projection loss T(t).
enum class TemperatureKind { linear, square, cube, quartic, exponential };

inline std::string to_string(TemperatureKind k) {
  switch (k) {
    case TemperatureKind::linear: return "t";
    case TemperatureKind::square: return "t2";
    case TemperatureKind::cube: return "t3";
    case TemperatureKind::quartic: return "t4";
    case TemperatureKind::exponential: return "exp";
  }
  return "unknown";
}

inline TemperatureKind parse_temperature_kind(const std::string& s) {
  if (s == "t") return TemperatureKind::linear;
  if (s == "t2") return TemperatureKind::square;
  if (s == "t3") return TemperatureKind::cube;
  if (s == "t4") return TemperatureKind::quartic;
  if (s == "exp") return TemperatureKind::exponential;
  throw ConfigError("unknown temperature function '" + s + "' (expected t, t2, t3, t4, exp)");
}

struct ProjectionConfig {
  std::size_t k = 7;
  TemperatureKind temperature_kind = TemperatureKind::exponential;
};

struct Neighbor {
  std::size_t index;
  double sq_dist;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// k nearest input points to q by squared distance, ascending; ties by index.
inline std::vector<Neighbor> knn(const PointCloud& p, const Point& q, std::size_t k) {
  if (k > p.size()) {
    throw DomainError("knn: k = " + std::to_string(k) + " exceeds N = " + std::to_string(p.size()));
  }
  std::vector<Neighbor> all(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) all[i] = {i, sq_dist(p[i], q)};
  auto closer = [](const Neighbor& a, const Neighbor& b) {
    return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.index < b.index);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
  all.resize(k);
  return all;
}

// w_i = exp(-d_i / t) / sum_j exp(-d_j / t) for squared distances d and t > 0.
inline std::vector<double> project_weights(const std::vector<double>& sq_dists, double t) {
  if (!(t > 0.0)) throw DomainError("project_weights: temperature must be positive");
  if (sq_dists.empty()) return {};
  const double dmin = *std::min_element(sq_dists.begin(), sq_dists.end());
  std::vector<double> w(sq_dists.size());
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(-(sq_dists[i] - dmin) / t);
    s += w[i];
  }
  for (double& v : w) v /= s;
  return w;
}

// Tape version over an m x k matrix of squared distances and a 1x1 temperature.
inline Var project_weights(const Var& sq_dists, const Var& t) {
  if (!(t.value().item() > 0.0)) throw DomainError("project_weights: temperature must be positive");
  return row_softmax(scale(div_scalar(sq_dists, t), -1.0));
}

// Neighbor table of each generated point: k nearest input indices.
inline std::vector<std::vector<std::size_t>> neighbor_table(const Matrix& generated, const PointCloud& p,
                                                            std::size_t k) {
  std::vector<std::vector<std::size_t>> nbr(generated.rows());
  for (std::size_t i = 0; i < generated.rows(); ++i) {
    const Point q{generated(i, 0), generated(i, 1), generated(i, 2)};
    for (const Neighbor& n : knn(p, q, k)) nbr[i].push_back(n.index);
  }
  return nbr;
}

// z_i = sum over the k nearest input points of w_i p_i. Neighbor selection is
// piecewise constant; gradients reach the generated coordinates and t.
inline Var soft_project(const Var& generated, const Var& input, const PointCloud& input_cloud,
                        const ProjectionConfig& cfg, const Var& t) {
  if (cfg.k < 1) throw DomainError("soft_project: k must be >= 1");
  if (cfg.k > input_cloud.size()) {
    throw DomainError("soft_project: k = " + std::to_string(cfg.k) + " exceeds N = " +
                      std::to_string(input_cloud.size()));
  }
  const auto nbr = neighbor_table(generated.value(), input_cloud, cfg.k);
  const Var w = project_weights(neighbor_sq_dists(generated, input, nbr), t);
  return weighted_gather(w, input, nbr);
}

// Convenience overload that places the input cloud on the tape as a constant.
inline Var soft_project(const Var& generated, const PointCloud& input_cloud, const ProjectionConfig& cfg,
                        const Var& t) {
  Tape& tape = *generated.tape();
  return soft_project(generated, tape.constant(input_cloud.to_matrix()), input_cloud, cfg, t);
}

// Value-only projection used at evaluation time.
inline PointCloud soft_project(const PointCloud& generated, const PointCloud& input_cloud,
                               const ProjectionConfig& cfg, double t) {
  Tape tape;
  const Var z = soft_project(tape.constant(generated.to_matrix()), input_cloud, cfg, tape.constant(Matrix::scalar(t)));
  return PointCloud::from_matrix(z.value());
}

// L_soft = T(t).
inline Var projection_loss(const Var& t, TemperatureKind kind) {
  switch (kind) {
    case TemperatureKind::linear: return scale(t, 1.0);
    case TemperatureKind::square: return square(t);
    case TemperatureKind::cube: return pow_int(t, 3);
    case TemperatureKind::quartic: return pow_int(t, 4);
    case TemperatureKind::exponential: return exp(t);
  }
  throw ConfigError("projection_loss: unknown temperature kind");
}

inline double projection_loss(double t, TemperatureKind kind) {
  Tape tape;
  return projection_loss(tape.constant(Matrix::scalar(t)), kind).value().item();
}

}  // namespace lightn
