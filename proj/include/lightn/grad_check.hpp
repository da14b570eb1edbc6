#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "lightn/matrix.hpp"
#include "lightn/tape.hpp"

namespace lightn {

// Scalar-valued function built on a fresh tape from a leaf holding x.
using ScalarFn = std::function<Var(Tape&, const Var&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  Matrix analytic;
  Matrix numeric;
};

// Compares the reverse-mode gradient of f at x with central differences.
// Error per entry: |analytic - numeric| / max(1, |numeric|).
inline GradCheckResult grad_check_detailed(const ScalarFn& f, const Matrix& x, double step = 1e-5) {
  GradCheckResult r;
  {
    Tape tape;
    Var xv = tape.leaf(x);
    Var y = f(tape, xv);
    tape.backward(y);
    r.analytic = xv.has_grad() ? xv.grad() : Matrix(x.rows(), x.cols());
  }
  auto eval = [&](const Matrix& at) {
    Tape tape;
    Var xv = tape.leaf(at);
    return f(tape, xv).value().item();
  };
  r.numeric = Matrix(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = eval(probe);
    probe[i] = x[i] - step;
    const double down = eval(probe);
    probe[i] = x[i];
    r.numeric[i] = (up - down) / (2.0 * step);
    const double err = std::abs(r.analytic[i] - r.numeric[i]) / std::max(1.0, std::abs(r.numeric[i]));
    r.max_rel_error = std::max(r.max_rel_error, err);
  }
  return r;
}

inline double grad_check(const ScalarFn& f, const Matrix& x, double step = 1e-5) {
  return grad_check_detailed(f, x, step).max_rel_error;
}

}  // namespace lightn
