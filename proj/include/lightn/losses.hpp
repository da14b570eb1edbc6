#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "lightn/errors.hpp"
#include "lightn/ops.hpp"
#include "lightn/pointcloud.hpp"
#include "lightn/projection.hpp"
#include "lightn/tape.hpp"

namespace lightn {

struct LossConfig {
  double alpha = 1.0;  // repulsion weight
  double beta = 1.0;   // projection-loss weight
  double delta = 1.0;  // task-loss weight
  double h = 0.001;    // repulsion radius
  std::size_t k_rep = 15;
  TemperatureKind temperature_kind = TemperatureKind::exponential;

  void validate() const {
    if (!(h > 0.0)) throw ConfigError("loss: repulsion radius h must be positive");
    if (k_rep < 1) throw ConfigError("loss: k_rep must be >= 1");
    if (!std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(delta)) {
      throw ConfigError("loss: weights must be finite");
    }
  }
};

// Mean squared nearest-neighbor distance from q to p plus from p to q.
inline Var chamfer(const Var& q, const Var& p) {
  if (q.rows() == 0 || p.rows() == 0) throw DomainError("chamfer: empty cloud");
  const Var d = pairwise_sq_dists(q, p);  // M x N
  const Var q_to_p = mean(min_over_rows(transpose(d)));
  const Var p_to_q = mean(min_over_rows(d));
  return add(q_to_p, p_to_q);
}

inline double chamfer(const PointCloud& q, const PointCloud& p) {
  Tape tape;
  return chamfer(tape.constant(q.to_matrix()), tape.constant(p.to_matrix())).value().item();
}

// (1 / (M k)) sum_i sum_{q' in kNN(q_i), q' != q_i} max(0, h^2 - ||q' - q_i||^2).
// k is clamped to M - 1. Fewer than two points yields 0 and sets *degenerate.
inline Var repulsion(const Var& q, const LossConfig& cfg, bool* degenerate = nullptr) {
  Tape& tape = *q.tape();
  const std::size_t m = q.rows();
  if (degenerate) *degenerate = m < 2;
  if (m < 2) return tape.constant(Matrix::scalar(0.0));
  const std::size_t k = std::min(cfg.k_rep, m - 1);
  const Var d = pairwise_sq_dists(q, q);
  const Matrix& dv = d.value();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  pairs.reserve(m * k);
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) {
    order.clear();
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) order.push_back(j);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        return dv(i, a) < dv(i, b) || (dv(i, a) == dv(i, b) && a < b);
                      });
    for (std::size_t j = 0; j < k; ++j) pairs.emplace_back(i, order[j]);
  }
  const Var eta = relu(add_scalar(scale(gather_elements(d, pairs), -1.0), cfg.h * cfg.h));
  return scale(sum(eta), 1.0 / static_cast<double>(m * k));
}

inline double repulsion(const PointCloud& q, const LossConfig& cfg) {
  Tape tape;
  return repulsion(tape.constant(q.to_matrix()), cfg).value().item();
}

struct SamplingLoss {
  Var total;
  Var chamfer;
  Var repulsion;
  Var projection;
};

// L_CD(z, p) + alpha L_repl(z) + beta T(t), on the projected points z.
inline SamplingLoss sampling_loss(const Var& projected, const Var& input, const Var& t, const LossConfig& cfg) {
  cfg.validate();
  SamplingLoss l;
  l.chamfer = chamfer(projected, input);
  l.repulsion = repulsion(projected, cfg);
  l.projection = projection_loss(t, cfg.temperature_kind);
  l.total = add(add(l.chamfer, scale(l.repulsion, cfg.alpha)), scale(l.projection, cfg.beta));
  return l;
}

// sampling + delta * task.
inline Var total_loss(const Var& sampling, const Var& task, const LossConfig& cfg) {
  return add(sampling, scale(task, cfg.delta));
}

inline double total_loss(double sampling, double task, const LossConfig& cfg) { return sampling + cfg.delta * task; }

}  // namespace lightn
