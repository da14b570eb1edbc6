#pragma once

// Differentiable operations on Tape variables. Every op computes its forward
// value eagerly and records a gradient rule when any operand needs a gradient.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "lightn/errors.hpp"
#include "lightn/matrix.hpp"
#include "lightn/tape.hpp"

namespace lightn {

namespace detail {

inline Tape& tape_of(const Var& a) {
  if (!a.valid()) throw ContractError("operation on an empty Var");
  return *a.tape();
}

inline Tape& tape_of(const Var& a, const Var& b) {
  Tape& t = tape_of(a);
  t.check_owned(b);
  return t;
}

inline void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
  }
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMajor> view(const Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}
inline Eigen::Map<RowMajor> view(Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

// out += a * b
inline void gemm_acc(const Matrix& a, const Matrix& b, Matrix& out) { view(out).noalias() += view(a) * view(b); }

// out += a * b^T
inline void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  view(out).noalias() += view(a) * view(b).transpose();
}

// out += a^T * b
inline void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  view(out).noalias() += view(a).transpose() * view(b);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Products

inline Var matmul(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: " + av.shape() + " x " + bv.shape() + " inner dimensions differ");
  }
  Matrix out(av.rows(), bv.cols());
  detail::gemm_acc(av, bv, out);
  instrument::mac_counter += static_cast<std::uint64_t>(av.rows()) * av.cols() * bv.cols();
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    if (tp.requires_grad(ia)) detail::gemm_nt_acc(g, tp.value(ib), tp.grad_buffer(ia));
    if (tp.requires_grad(ib)) detail::gemm_tn_acc(tp.value(ia), g, tp.grad_buffer(ib));
  });
}

// x * x^T. Only the upper triangle is computed and mirrored, so the result is
// exactly symmetric and costs n(n+1)/2 * d multiply-accumulates.
inline Var gram(const Var& x) {
  Tape& t = detail::tape_of(x);
  const Matrix& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  Matrix out(n, n);
  {
    auto o = detail::view(out);
    o.selfadjointView<Eigen::Upper>().rankUpdate(detail::view(xv));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) out(j, i) = out(i, j);
  }
  instrument::mac_counter += static_cast<std::uint64_t>(n) * (n + 1) / 2 * d;
  const std::size_t ix = x.id();
  return t.record(std::move(out), {x}, [ix](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    Matrix sym(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) sym(i, j) = g(i, j) + g(j, i);
    detail::gemm_acc(sym, tp.value(ix), tp.grad_buffer(ix));
  });
}

inline Var transpose(const Var& x) {
  Tape& t = detail::tape_of(x);
  const std::size_t ix = x.id();
  return t.record(x.value().transposed(), {x}, [ix](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) gx(j, i) += g(i, j);
  });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a, b);
  detail::require_same_shape("add", a.value(), b.value());
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    for (std::size_t id : {ia, ib}) {
      if (!tp.requires_grad(id)) continue;
      Matrix& gb = tp.grad_buffer(id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a, b);
  detail::require_same_shape("sub", a.value(), b.value());
  Matrix out = a.value();
  const Matrix& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    if (tp.requires_grad(ia)) {
      Matrix& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(ib)) {
      Matrix& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

// Hadamard product.
inline Var mul(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a, b);
  detail::require_same_shape("mul", a.value(), b.value());
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    if (tp.requires_grad(ia)) {
      const Matrix& bv = tp.value(ib);
      Matrix& ga = tp.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(ib)) {
      const Matrix& av = tp.value(ia);
      Matrix& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

inline Var scale(const Var& x, double s) {
  Tape& t = detail::tape_of(x);
  Matrix out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
  const std::size_t ix = x.id();
  return t.record(std::move(out), {x}, [ix, s](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += s * g[i];
  });
}

inline Var add_scalar(const Var& x, double s) {
  Tape& t = detail::tape_of(x);
  Matrix out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s;
  const std::size_t ix = x.id();
  return t.record(std::move(out), {x}, [ix](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

// x / s for a 1x1 variable s.
inline Var div_scalar(const Var& x, const Var& s) {
  Tape& t = detail::tape_of(x, s);
  const Matrix& xv = x.value();
  const double sv = s.value().item();
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] / sv;
  const std::size_t ix = x.id(), is = s.id();
  return t.record(std::move(out), {x, s}, [ix, is](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    const Matrix& xv = tp.value(ix);
    const double sv = tp.value(is)[0];
    if (tp.requires_grad(ix)) {
      Matrix& gx = tp.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / sv;
    }
    if (tp.requires_grad(is)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc -= g[i] * xv[i] / (sv * sv);
      tp.grad_buffer(is)[0] += acc;
    }
  });
}

inline Var relu(const Var& x) {
  Tape& t = detail::tape_of(x);
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  const std::size_t ix = x.id();
  return t.record(std::move(out), {x}, [ix](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    const Matrix& xv = tp.value(ix);
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
  });
}

inline Var exp(const Var& x) {
  Tape& t = detail::tape_of(x);
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::exp(xv[i]);
  const std::size_t ix = x.id();
  return t.record(std::move(out), {x}, [ix](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    const Matrix& y = tp.value(self);
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
  });
}

inline Var square(const Var& x) {
  Tape& t = detail::tape_of(x);
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * xv[i];
  const std::size_t ix = x.id();
  return t.record(std::move(out), {x}, [ix](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    const Matrix& xv = tp.value(ix);
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * xv[i] * g[i];
  });
}

// Integer power x^p, p >= 1.
inline Var pow_int(const Var& x, int p) {
  if (p < 1) throw DomainError("pow_int: exponent must be >= 1");
  Tape& t = detail::tape_of(x);
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::pow(xv[i], p);
  const std::size_t ix = x.id();
  return t.record(std::move(out), {x}, [ix, p](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    const Matrix& xv = tp.value(ix);
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * p * std::pow(xv[i], p - 1);
  });
}

// x + b with the 1 x cols row vector b broadcast over rows.
inline Var add_row_bias(const Var& x, const Var& b) {
  Tape& t = detail::tape_of(x, b);
  const Matrix& xv = x.value();
  const Matrix& bv = b.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw DimensionError("add_row_bias: bias " + bv.shape() + " does not broadcast over " + xv.shape());
  }
  Matrix out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += bv[j];
  const std::size_t ix = x.id(), ib = b.id();
  return t.record(std::move(out), {x, b}, [ix, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    if (tp.requires_grad(ix)) {
      Matrix& gx = tp.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (tp.requires_grad(ib)) {
      Matrix& gb = tp.grad_buffer(ib);
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
    }
  });
}

// x * w + b, b broadcast over rows.
inline Var linear(const Var& x, const Var& w, const Var& b) {
  if (x.cols() != w.rows()) {
    throw DimensionError("linear: input " + x.value().shape() + " vs weights " + w.value().shape());
  }
  if (b.rows() != 1 || b.cols() != w.cols()) {
    throw DimensionError("linear: bias " + b.value().shape() + " vs weights " + w.value().shape());
  }
  return add_row_bias(matmul(x, w), b);
}

// ---------------------------------------------------------------------------
// Reductions

inline Var sum(const Var& x) {
  Tape& t = detail::tape_of(x);
  const Matrix& xv = x.value();
  if (xv.empty()) throw DomainError("sum: empty input");
  double s = 0.0;
  for (double v : xv.data()) s += v;
  const std::size_t ix = x.id();
  return t.record(Matrix::scalar(s), {x}, [ix](Tape& tp, std::size_t self) {
    const double g = tp.grad_of(self)[0];
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

// Sum divided by the entry count (a true division, not a reciprocal scale).
inline Var mean(const Var& x) {
  Tape& t = detail::tape_of(x);
  const Matrix& xv = x.value();
  if (xv.empty()) throw DomainError("mean: empty input");
  const double n = static_cast<double>(xv.size());
  double s = 0.0;
  for (double v : xv.data()) s += v;
  const std::size_t ix = x.id();
  return t.record(Matrix::scalar(s / n), {x}, [ix, n](Tape& tp, std::size_t self) {
    const double g = tp.grad_of(self)[0] / n;
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

namespace detail {
template <class Better>
Var extremum_over_rows(const Var& x, const char* name, Better better) {
  Tape& t = tape_of(x);
  const Matrix& xv = x.value();
  if (xv.empty()) throw DomainError(std::string(name) + ": empty input");
  Matrix out(1, xv.cols());
  std::vector<std::size_t> arg(xv.cols(), 0);
  for (std::size_t j = 0; j < xv.cols(); ++j) {
    double best = xv(0, j);
    for (std::size_t i = 1; i < xv.rows(); ++i) {
      if (better(xv(i, j), best)) {  // strict: ties keep the lowest index
        best = xv(i, j);
        arg[j] = i;
      }
    }
    out[j] = best;
  }
  const std::size_t ix = x.id();
  return t.record(std::move(out), {x}, [ix, arg = std::move(arg)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t j = 0; j < arg.size(); ++j) gx(arg[j], j) += g[j];
  });
}
}  // namespace detail

// Columnwise maximum over rows -> 1 x cols. Gradient goes to the argmax row.
inline Var max_over_rows(const Var& x) {
  return detail::extremum_over_rows(x, "max_over_rows", [](double a, double b) { return a > b; });
}

// Columnwise minimum over rows -> 1 x cols. Gradient goes to the argmin row.
inline Var min_over_rows(const Var& x) {
  return detail::extremum_over_rows(x, "min_over_rows", [](double a, double b) { return a < b; });
}

// ---------------------------------------------------------------------------
// Normalizations

// Softmax along each row with max subtraction.
inline Var row_softmax(const Var& x) {
  Tape& t = detail::tape_of(x);
  const Matrix& xv = x.value();
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    auto in = xv.row(i);
    auto o = out.row(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : in) mx = std::max(mx, v);
    double s = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      s += o[j];
    }
    for (double& v : o) v /= s;
  }
  const std::size_t ix = x.id();
  return t.record(std::move(out), {x}, [ix](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    const Matrix& y = tp.value(self);
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

// Per-row normalization to zero mean / unit variance over the columns, then
// per-column gain and shift (both 1 x cols).
inline Var layer_norm(const Var& x, const Var& gain, const Var& shift, double eps = 1e-5) {
  Tape& t = detail::tape_of(x, gain);
  t.check_owned(shift);
  const Matrix& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  if (gain.rows() != 1 || gain.cols() != d || shift.rows() != 1 || shift.cols() != d) {
    throw DimensionError("layer_norm: gain/shift must be 1x" + std::to_string(d));
  }
  Matrix xhat(n, d);
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (double v : xv.row(i)) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : xv.row(i)) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) xhat(i, j) = (xv(i, j) - mu) * inv_std[i];
  }
  const Matrix& gv = gain.value();
  const Matrix& sv = shift.value();
  Matrix out(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out(i, j) = xhat(i, j) * gv[j] + sv[j];

  const std::size_t ix = x.id(), ig = gain.id(), is = shift.id();
  return t.record(std::move(out), {x, gain, shift},
                  [ix, ig, is, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.grad_of(self);
                    const std::size_t n = g.rows(), d = g.cols();
                    if (tp.requires_grad(ig)) {
                      Matrix& gg = tp.grad_buffer(ig);
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) gg[j] += g(i, j) * xhat(i, j);
                    }
                    if (tp.requires_grad(is)) {
                      Matrix& gs = tp.grad_buffer(is);
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t j = 0; j < d; ++j) gs[j] += g(i, j);
                    }
                    if (tp.requires_grad(ix)) {
                      const Matrix& gv = tp.value(ig);
                      Matrix& gx = tp.grad_buffer(ix);
                      const double inv_d = 1.0 / static_cast<double>(d);
                      for (std::size_t i = 0; i < n; ++i) {
                        double mean_dy = 0.0, mean_dy_xhat = 0.0;
                        for (std::size_t j = 0; j < d; ++j) {
                          const double dy = g(i, j) * gv[j];
                          mean_dy += dy;
                          mean_dy_xhat += dy * xhat(i, j);
                        }
                        mean_dy *= inv_d;
                        mean_dy_xhat *= inv_d;
                        for (std::size_t j = 0; j < d; ++j) {
                          const double dy = g(i, j) * gv[j];
                          gx(i, j) += inv_std[i] * (dy - mean_dy - xhat(i, j) * mean_dy_xhat);
                        }
                      }
                    }
                  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Var reshape(const Var& x, std::size_t rows, std::size_t cols) {
  Tape& t = detail::tape_of(x);
  const Matrix& xv = x.value();
  if (rows * cols != xv.size()) {
    throw DimensionError("reshape: cannot view " + xv.shape() + " as " + Matrix::shape_string(rows, cols));
  }
  Matrix out(rows, cols, std::vector<double>(xv.data().begin(), xv.data().end()));
  const std::size_t ix = x.id();
  return t.record(std::move(out), {x}, [ix](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

// Horizontal concatenation of equal-height blocks.
inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DomainError("concat_cols: no operands");
  Tape& t = detail::tape_of(parts.front());
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  for (const Var& p : parts) {
    t.check_owned(p);
    if (p.rows() != n) throw DimensionError("concat_cols: row counts differ");
    total += p.cols();
  }
  Matrix out(n, total);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Matrix& pv = p.value();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < pv.cols(); ++j) out(i, off + j) = pv(i, j);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += pv.cols();
  }
  return t.record(std::move(out), parts, [ids, offsets](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.requires_grad(ids[k])) continue;
      Matrix& gp = tp.grad_buffer(ids[k]);
      for (std::size_t i = 0; i < gp.rows(); ++i)
        for (std::size_t j = 0; j < gp.cols(); ++j) gp(i, j) += g(i, offsets[k] + j);
    }
  });
}

// Selected entries x(i, j) as a 1 x K row.
inline Var gather_elements(const Var& x, const std::vector<std::pair<std::size_t, std::size_t>>& at) {
  Tape& t = detail::tape_of(x);
  const Matrix& xv = x.value();
  Matrix out(1, at.size());
  for (std::size_t k = 0; k < at.size(); ++k) {
    if (at[k].first >= xv.rows() || at[k].second >= xv.cols()) {
      throw DimensionError("gather_elements: index outside " + xv.shape());
    }
    out[k] = xv(at[k].first, at[k].second);
  }
  const std::size_t ix = x.id();
  return t.record(std::move(out), {x}, [ix, at](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    Matrix& gx = tp.grad_buffer(ix);
    for (std::size_t k = 0; k < at.size(); ++k) gx(at[k].first, at[k].second) += g[k];
  });
}

// ---------------------------------------------------------------------------
// Geometry

// D(i, j) = ||a_i - b_j||^2 for point rows of equal width.
inline Var pairwise_sq_dists(const Var& a, const Var& b) {
  Tape& t = detail::tape_of(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.cols()) {
    throw DimensionError("pairwise_sq_dists: point widths differ " + av.shape() + " vs " + bv.shape());
  }
  const std::size_t m = av.rows(), n = bv.rows(), d = av.cols();
  Matrix out(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = av.row(i).data();
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = bv.row(j).data();
      double s = 0.0;
      for (std::size_t p = 0; p < d; ++p) {
        const double diff = ai[p] - bj[p];
        s += diff * diff;
      }
      out(i, j) = s;
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    const Matrix& av = tp.value(ia);
    const Matrix& bv = tp.value(ib);
    const bool ga_on = tp.requires_grad(ia), gb_on = tp.requires_grad(ib);
    Matrix* ga = ga_on ? &tp.grad_buffer(ia) : nullptr;
    Matrix* gb = gb_on ? &tp.grad_buffer(ib) : nullptr;
    const std::size_t d = av.cols();
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) {
        const double gij = g(i, j);
        if (gij == 0.0) continue;
        for (std::size_t p = 0; p < d; ++p) {
          const double v = 2.0 * gij * (av(i, p) - bv(j, p));
          if (ga) (*ga)(i, p) += v;
          if (gb) (*gb)(j, p) -= v;
        }
      }
    }
  });
}

// D(i, j) = ||q_i - p_{nbr[i][j]}||^2 for a fixed neighbor table.
inline Var neighbor_sq_dists(const Var& q, const Var& p, const std::vector<std::vector<std::size_t>>& nbr) {
  Tape& t = detail::tape_of(q, p);
  const Matrix& qv = q.value();
  const Matrix& pv = p.value();
  if (qv.cols() != pv.cols()) throw DimensionError("neighbor_sq_dists: point widths differ");
  if (nbr.size() != qv.rows()) throw DimensionError("neighbor_sq_dists: neighbor table height");
  const std::size_t k = nbr.empty() ? 0 : nbr.front().size();
  const std::size_t d = qv.cols();
  Matrix out(qv.rows(), k);
  for (std::size_t i = 0; i < qv.rows(); ++i) {
    if (nbr[i].size() != k) throw DimensionError("neighbor_sq_dists: ragged neighbor table");
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t pj = nbr[i][j];
      if (pj >= pv.rows()) throw DimensionError("neighbor_sq_dists: neighbor index out of range");
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = qv(i, c) - pv(pj, c);
        s += diff * diff;
      }
      out(i, j) = s;
    }
  }
  const std::size_t iq = q.id(), ip = p.id();
  return t.record(std::move(out), {q, p}, [iq, ip, nbr](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    const Matrix& qv = tp.value(iq);
    const Matrix& pv = tp.value(ip);
    Matrix* gq = tp.requires_grad(iq) ? &tp.grad_buffer(iq) : nullptr;
    Matrix* gp = tp.requires_grad(ip) ? &tp.grad_buffer(ip) : nullptr;
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) {
        const std::size_t pj = nbr[i][j];
        for (std::size_t c = 0; c < qv.cols(); ++c) {
          const double v = 2.0 * g(i, j) * (qv(i, c) - pv(pj, c));
          if (gq) (*gq)(i, c) += v;
          if (gp) (*gp)(pj, c) -= v;
        }
      }
    }
  });
}

// z_i = sum_j w(i, j) * p_{nbr[i][j]}.
inline Var weighted_gather(const Var& w, const Var& p, const std::vector<std::vector<std::size_t>>& nbr) {
  Tape& t = detail::tape_of(w, p);
  const Matrix& wv = w.value();
  const Matrix& pv = p.value();
  if (nbr.size() != wv.rows()) throw DimensionError("weighted_gather: neighbor table height");
  Matrix out(wv.rows(), pv.cols());
  for (std::size_t i = 0; i < wv.rows(); ++i) {
    if (nbr[i].size() != wv.cols()) throw DimensionError("weighted_gather: neighbor table width");
    for (std::size_t j = 0; j < wv.cols(); ++j) {
      const std::size_t pj = nbr[i][j];
      if (pj >= pv.rows()) throw DimensionError("weighted_gather: neighbor index out of range");
      for (std::size_t c = 0; c < pv.cols(); ++c) out(i, c) += wv(i, j) * pv(pj, c);
    }
  }
  const std::size_t iw = w.id(), ip = p.id();
  return t.record(std::move(out), {w, p}, [iw, ip, nbr](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad_of(self);
    const Matrix& wv = tp.value(iw);
    const Matrix& pv = tp.value(ip);
    Matrix* gw = tp.requires_grad(iw) ? &tp.grad_buffer(iw) : nullptr;
    Matrix* gp = tp.requires_grad(ip) ? &tp.grad_buffer(ip) : nullptr;
    for (std::size_t i = 0; i < wv.rows(); ++i) {
      for (std::size_t j = 0; j < wv.cols(); ++j) {
        const std::size_t pj = nbr[i][j];
        double acc = 0.0;
        for (std::size_t c = 0; c < pv.cols(); ++c) {
          acc += g(i, c) * pv(pj, c);
          if (gp) (*gp)(pj, c) += g(i, c) * wv(i, j);
        }
        if (gw) (*gw)(i, j) += acc;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Classification

// -log softmax(logits)[label] for a 1 x C logit row.
inline Var softmax_cross_entropy(const Var& logits, std::size_t label) {
  Tape& t = detail::tape_of(logits);
  const Matrix& lv = logits.value();
  if (lv.rows() != 1) throw DimensionError("softmax_cross_entropy: expects a 1xC row, got " + lv.shape());
  if (label >= lv.cols()) throw DomainError("softmax_cross_entropy: label out of range");
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : lv.data()) mx = std::max(mx, v);
  Matrix prob(1, lv.cols());
  double s = 0.0;
  for (std::size_t j = 0; j < lv.cols(); ++j) {
    prob[j] = std::exp(lv[j] - mx);
    s += prob[j];
  }
  for (std::size_t j = 0; j < lv.cols(); ++j) prob[j] /= s;
  const double loss = -(lv[label] - mx - std::log(s));
  const std::size_t il = logits.id();
  return t.record(Matrix::scalar(loss), {logits}, [il, label, prob = std::move(prob)](Tape& tp, std::size_t self) {
    const double g = tp.grad_of(self)[0];
    Matrix& gl = tp.grad_buffer(il);
    for (std::size_t j = 0; j < prob.size(); ++j) gl[j] += g * (prob[j] - (j == label ? 1.0 : 0.0));
  });
}

}  // namespace lightn
