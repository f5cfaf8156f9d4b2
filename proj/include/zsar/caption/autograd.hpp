#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "zsar/core/error.hpp"
#include "zsar/core/matrix.hpp"

namespace zsar::ag {

class Tape;

// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records operations for one forward pass. With recording off (inference) no
// backward closures are stored.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }

  Var constant(Matrix value) { return push(std::move(value), false); }

  // Leaf whose gradient is added into *grad_sink by backward(). The value is
  // referenced, not copied, and must outlive the tape.
  Var parameter(const Matrix& value, Matrix* grad_sink) {
    Node n;
    n.ref = &value;
    n.sink = grad_sink;
    n.needs_grad = recording_ && grad_sink != nullptr;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  const Matrix& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.value;
  }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  // Gradient buffer of a node, allocated on first use.
  Matrix& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !value(id).empty()) n.grad = Matrix(value(id).rows(), value(id).cols());
    return n.grad;
  }

  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var push(Matrix value, bool needs_grad, Backward backward = {}) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = recording_ && needs_grad;
    if (n.needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  void backward(Var root) {
    if (!recording_) throw ConfigError("backward() on a non-recording tape");
    if (value(root.id()).size() != 1) throw DataError("backward() root must be a scalar");
    grad(root.id())(0, 0) = 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.sink) *n.sink += n.grad;
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix grad;
    Backward backward;
    Matrix* sink = nullptr;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  bool recording_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

namespace detail {
inline Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape() || a.tape() == nullptr) throw ConfigError("vars from different tapes");
  return *a.tape();
}
}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape& t = detail::tape_of(a, b);
  Matrix out = zsar::matmul(a.value(), b.value());
  const bool ng = t.needs_grad(a.id()) || t.needs_grad(b.id());
  return t.push(std::move(out), ng, [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai) += matmul_transposed(g, t.value(bi));
    if (t.needs_grad(bi)) t.grad(bi) += zsar::matmul(t.value(ai).transpose(), g);
  });
}

// a * b^T
inline Var matmul_bt(Var a, Var b) {
  Tape& t = detail::tape_of(a, b);
  Matrix out = matmul_transposed(a.value(), b.value());
  const bool ng = t.needs_grad(a.id()) || t.needs_grad(b.id());
  return t.push(std::move(out), ng, [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai) += zsar::matmul(g, t.value(bi));
    if (t.needs_grad(bi)) t.grad(bi) += zsar::matmul(g.transpose(), t.value(ai));
  });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::tape_of(a, b);
  if (!a.value().same_shape(b.value()))
    throw DataError("add: shape mismatch " + a.value().shape_string() + " vs " + b.value().shape_string());
  Matrix out = a.value() + b.value();
  const bool ng = t.needs_grad(a.id()) || t.needs_grad(b.id());
  return t.push(std::move(out), ng, [ai = a.id(), bi = b.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai) += g;
    if (t.needs_grad(bi)) t.grad(bi) += g;
  });
}

// a + broadcast(bias) where bias is 1 x cols(a).
inline Var add_row(Var a, Var bias) {
  Tape& t = detail::tape_of(a, bias);
  if (bias.rows() != 1 || bias.cols() != a.cols())
    throw DataError("add_row: bias " + bias.value().shape_string() + " does not fit " +
                    a.value().shape_string());
  Matrix out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bias.value()(0, c);
  const bool ng = t.needs_grad(a.id()) || t.needs_grad(bias.id());
  return t.push(std::move(out), ng, [ai = a.id(), bi = bias.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ai)) t.grad(ai) += g;
    if (t.needs_grad(bi)) {
      Matrix& gb = t.grad(bi);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb(0, c) += g(r, c);
    }
  });
}

inline Var scale(Var a, double s) {
  Tape& t = *a.tape();
  return t.push(a.value() * s, t.needs_grad(a.id()), [ai = a.id(), s](Tape& t, std::size_t self) {
    t.grad(ai) += t.grad(self) * s;
  });
}

// Elementwise product with a constant (used for dropout masks).
inline Var mask_multiply(Var a, Matrix mask) {
  Tape& t = *a.tape();
  if (!mask.same_shape(a.value())) throw DataError("mask_multiply: shape mismatch");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] *= mask.values()[i];
  return t.push(std::move(out), t.needs_grad(a.id()),
                [ai = a.id(), m = std::move(mask)](Tape& t, std::size_t self) {
                  const Matrix& g = t.grad(self);
                  Matrix& ga = t.grad(ai);
                  for (std::size_t i = 0; i < g.size(); ++i) ga.values()[i] += g.values()[i] * m.values()[i];
                });
}

inline Var relu(Var a) {
  Tape& t = *a.tape();
  Matrix out = a.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return t.push(std::move(out), t.needs_grad(a.id()), [ai = a.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& x = t.value(ai);
    Matrix& ga = t.grad(ai);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x.values()[i] > 0.0) ga.values()[i] += g.values()[i];
  });
}

// Row softmax. With `causal`, entry (i, j) for j > i gets weight exactly 0 and
// takes no part in the row maximum or normaliser.
inline Var softmax_rows(Var a, bool causal = false) {
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const std::size_t limit = causal ? std::min(r + 1, x.cols()) : x.cols();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < limit; ++c) mx = std::max(mx, x(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < limit; ++c) {
      y(r, c) = std::exp(x(r, c) - mx);
      sum += y(r, c);
    }
    for (std::size_t c = 0; c < limit; ++c) y(r, c) /= sum;
  }
  return t.push(std::move(y), t.needs_grad(a.id()), [ai = a.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad(ai);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dotp = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dotp += g(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += y(r, c) * (g(r, c) - dotp);
    }
  });
}

inline Var log_softmax_rows(Var a) {
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < x.cols(); ++c) mx = std::max(mx, x(r, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) sum += std::exp(x(r, c) - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t c = 0; c < x.cols(); ++c) y(r, c) = x(r, c) - lse;
  }
  return t.push(std::move(y), t.needs_grad(a.id()), [ai = a.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix& ga = t.grad(ai);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double gsum = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) gsum += g(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) ga(r, c) += g(r, c) - std::exp(y(r, c)) * gsum;
    }
  });
}

// Row-wise layer normalisation with learned gain and bias (1 x cols each).
inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-6) {
  Tape& t = detail::tape_of(x, gain);
  const Matrix& xv = x.value();
  const std::size_t n = xv.cols();
  if (gain.cols() != n || bias.cols() != n) throw DataError("layer_norm: parameter width mismatch");
  Matrix xhat(xv.rows(), n), y(xv.rows(), n);
  std::vector<double> inv_std(xv.rows());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += xv(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat(r, c) = (xv(r, c) - mean) * inv_std[r];
      y(r, c) = xhat(r, c) * gain.value()(0, c) + bias.value()(0, c);
    }
  }
  const bool ng = t.needs_grad(x.id()) || t.needs_grad(gain.id()) || t.needs_grad(bias.id());
  return t.push(std::move(y), ng,
                [xi = x.id(), gi = gain.id(), bi = bias.id(), xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
                  const Matrix& g = t.grad(self);
                  const Matrix& gamma = t.value(gi);
                  const std::size_t n = g.cols();
                  if (t.needs_grad(gi) || t.needs_grad(bi)) {
                    Matrix& gg = t.grad(gi);
                    Matrix& gb = t.grad(bi);
                    for (std::size_t r = 0; r < g.rows(); ++r)
                      for (std::size_t c = 0; c < n; ++c) {
                        if (t.needs_grad(gi)) gg(0, c) += g(r, c) * xhat(r, c);
                        if (t.needs_grad(bi)) gb(0, c) += g(r, c);
                      }
                  }
                  if (!t.needs_grad(xi)) return;
                  Matrix& gx = t.grad(xi);
                  for (std::size_t r = 0; r < g.rows(); ++r) {
                    double sum_d = 0.0, sum_dx = 0.0;
                    for (std::size_t c = 0; c < n; ++c) {
                      const double d = g(r, c) * gamma(0, c);
                      sum_d += d;
                      sum_dx += d * xhat(r, c);
                    }
                    const double inv_n = 1.0 / static_cast<double>(n);
                    for (std::size_t c = 0; c < n; ++c) {
                      const double d = g(r, c) * gamma(0, c);
                      gx(r, c) += inv_std[r] * (d - inv_n * sum_d - xhat(r, c) * inv_n * sum_dx);
                    }
                  }
                });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DataError("concat_cols: no inputs");
  Tape& t = *parts.front().tape();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  bool ng = false;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DataError("concat_cols: row count mismatch");
    cols += p.cols();
    ng = ng || t.needs_grad(p.id());
  }
  Matrix out(rows, cols);
  std::vector<std::pair<std::size_t, std::size_t>> layout;  // (id, col offset)
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < p.cols(); ++c) out(r, off + c) = p.value()(r, c);
    layout.emplace_back(p.id(), off);
    off += p.cols();
  }
  return t.push(std::move(out), ng, [layout = std::move(layout)](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    for (const auto& [id, off] : layout) {
      if (!t.needs_grad(id)) continue;
      Matrix& gp = t.grad(id);
      for (std::size_t r = 0; r < gp.rows(); ++r)
        for (std::size_t c = 0; c < gp.cols(); ++c) gp(r, c) += g(r, off + c);
    }
  });
}

// Rows of `table` selected by ids.
inline Var gather_rows(Var table, std::vector<std::size_t> ids) {
  Tape& t = *table.tape();
  const Matrix& tv = table.value();
  Matrix out(ids.size(), tv.cols());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= tv.rows()) throw DataError("gather_rows: id out of range");
    for (std::size_t c = 0; c < tv.cols(); ++c) out(r, c) = tv(ids[r], c);
  }
  return t.push(std::move(out), t.needs_grad(table.id()),
                [ti = table.id(), ids = std::move(ids)](Tape& t, std::size_t self) {
                  const Matrix& g = t.grad(self);
                  Matrix& gt = t.grad(ti);
                  for (std::size_t r = 0; r < ids.size(); ++r)
                    for (std::size_t c = 0; c < g.cols(); ++c) gt(ids[r], c) += g(r, c);
                });
}

// sum_r w_r * sum_c target(r,c) * (log target(r,c) - logp(r,c)) / sum_r w_r,
// i.e. the mean KL(target || p) over rows with positive weight.
inline Var weighted_kl(Var logp, Matrix target, std::vector<double> row_weight) {
  Tape& t = *logp.tape();
  const Matrix& lp = logp.value();
  if (!target.same_shape(lp) || row_weight.size() != lp.rows())
    throw DataError("weighted_kl: shape mismatch");
  double total_w = 0.0;
  for (double w : row_weight) total_w += w;
  double loss = 0.0;
  if (total_w > 0.0) {
    for (std::size_t r = 0; r < lp.rows(); ++r) {
      if (row_weight[r] == 0.0) continue;
      double row = 0.0;
      for (std::size_t c = 0; c < lp.cols(); ++c) {
        const double q = target(r, c);
        if (q > 0.0) row += q * (std::log(q) - lp(r, c));
      }
      loss += row_weight[r] * row;
    }
    loss /= total_w;
  }
  Matrix out(1, 1, loss);
  return t.push(std::move(out), t.needs_grad(logp.id()),
                [li = logp.id(), q = std::move(target), w = std::move(row_weight), total_w](
                    Tape& t, std::size_t self) {
                  if (total_w <= 0.0) return;
                  const double g = t.grad(self)(0, 0);
                  Matrix& gl = t.grad(li);
                  for (std::size_t r = 0; r < q.rows(); ++r)
                    for (std::size_t c = 0; c < q.cols(); ++c)
                      gl(r, c) -= g * w[r] * q(r, c) / total_w;
                });
}

}  // namespace zsar::ag
