#pragma once

// Matrix-valued reverse-mode automatic differentiation.
//
// A Var wraps a shared node holding a value and (when it requires a
// gradient) an accumulated adjoint. Operations whose inputs are all constant
// produce constants and record nothing, so the same code path serves both
// training (leaves created by a Tape) and inference (plain constants).

#include "fsar/core.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace fsar::ad {

class Tape;

struct Node {
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  Tape* tape = nullptr;
  std::function<void(const Matrix&)> backprop;
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const { return node_->value(0, 0); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

inline Var constant(Matrix value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

inline Var scalar_constant(double v) { return constant(Matrix::Constant(1, 1, v)); }

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Trainable leaf. Its gradient accumulates across backward() calls until reset.
  Var leaf(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    node->tape = this;
    return Var(std::move(node));
  }

  void record(std::shared_ptr<Node> node) { nodes_.push_back(std::move(node)); }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates to every leaf.
  void backward(const Var& out) {
    if (out.rows() != 1 || out.cols() != 1) {
      throw Error(Errc::shape_mismatch, "backward() needs a scalar output");
    }
    if (!out.requires_grad()) return;
    out.node()->grad = Matrix::Ones(1, 1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node& n = **it;
      if (n.grad.size() != 0 && n.backprop) n.backprop(n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
};

inline void accumulate(const Var& v, const Matrix& g) {
  Node* n = v.node();
  if (!n->requires_grad) return;
  if (n->grad.size() == 0) {
    n->grad = g;
  } else {
    n->grad += g;
  }
}

/// Builds an op result. `backprop` receives the output adjoint and must call
/// accumulate() on each input that needs it.
template <class Backprop>
Var make_op(Matrix value, std::initializer_list<Var> inputs, Backprop&& backprop) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  Tape* tape = nullptr;
  for (const Var& in : inputs) {
    if (in.requires_grad()) {
      tape = in.node()->tape;
      break;
    }
  }
  if (tape != nullptr) {
    node->requires_grad = true;
    node->tape = tape;
    node->backprop = std::forward<Backprop>(backprop);
    tape->record(node);
  }
  return Var(std::move(node));
}

template <class Backprop>
Var make_op_n(Matrix value, const std::vector<Var>& inputs, Backprop&& backprop) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  Tape* tape = nullptr;
  for (const Var& in : inputs) {
    if (in.requires_grad()) {
      tape = in.node()->tape;
      break;
    }
  }
  if (tape != nullptr) {
    node->requires_grad = true;
    node->tape = tape;
    node->backprop = std::forward<Backprop>(backprop);
    tape->record(node);
  }
  return Var(std::move(node));
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(Errc::dimension_mismatch, std::string(op) + ": operand shapes differ");
  }
}

inline Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw Error(Errc::dimension_mismatch, "matmul: inner dimensions differ");
  return make_op(a.value() * b.value(), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) accumulate(b, a.value().transpose() * g);
  });
}

/// a * b^T
inline Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw Error(Errc::dimension_mismatch, "matmul_nt: column counts differ");
  return make_op(a.value() * b.value().transpose(), {a, b}, [a, b](const Matrix& g) {
    if (a.requires_grad()) accumulate(a, g * b.value());
    if (b.requires_grad()) accumulate(b, g.transpose() * a.value());
  });
}

inline Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [a, b](const Matrix& g) {
    accumulate(a, g);
    accumulate(b, g);
  });
}

inline Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [a, b](const Matrix& g) {
    accumulate(a, g);
    accumulate(b, -g);
  });
}

/// Adds a 1 x C row to every row of a.
inline Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw Error(Errc::dimension_mismatch, "add_row: bias width differs");
  }
  Matrix v = a.value().rowwise() + RowVector(row.value());
  return make_op(std::move(v), {a, row}, [a, row](const Matrix& g) {
    accumulate(a, g);
    if (row.requires_grad()) accumulate(row, g.colwise().sum());
  });
}

inline Var add_constant(const Var& a, const Matrix& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) {
    throw Error(Errc::dimension_mismatch, "add_constant: shapes differ");
  }
  return make_op(a.value() + c, {a}, [a](const Matrix& g) { accumulate(a, g); });
}

/// mul * a + shift, elementwise.
inline Var affine(const Var& a, double mul, double shift) {
  Matrix v = (a.value().array() * mul + shift).matrix();
  return make_op(std::move(v), {a}, [a, mul](const Matrix& g) { accumulate(a, g * mul); });
}

inline Var scale(const Var& a, double s) { return affine(a, s, 0.0); }

/// a times a 1x1 Var.
inline Var scale_by(const Var& a, const Var& s) {
  const double sv = s.scalar();
  return make_op(a.value() * sv, {a, s}, [a, s, sv](const Matrix& g) {
    if (a.requires_grad()) accumulate(a, g * sv);
    if (s.requires_grad()) accumulate(s, Matrix::Constant(1, 1, g.cwiseProduct(a.value()).sum()));
  });
}

inline Var exp(const Var& a) {
  Matrix v = a.value().array().exp().matrix();
  Matrix out = v;
  return make_op(std::move(v), {a}, [a, out](const Matrix& g) { accumulate(a, g.cwiseProduct(out)); });
}

/// Zeroes the gradient outside [lo, hi]; used only to absorb rounding.
inline Var clamp(const Var& a, double lo, double hi) {
  Matrix v = a.value().cwiseMax(lo).cwiseMin(hi);
  return make_op(std::move(v), {a}, [a, lo, hi](const Matrix& g) {
    Matrix masked = g;
    const Matrix& x = a.value();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x.data()[i] < lo || x.data()[i] > hi) masked.data()[i] = 0.0;
    }
    accumulate(a, masked);
  });
}

namespace detail {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace detail

/// tanh-approximated GELU.
inline Var gelu(const Var& a) {
  const Matrix& x = a.value();
  Matrix v(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double z = x.data()[i];
    v.data()[i] = 0.5 * z * (1.0 + std::tanh(detail::kGeluC * (z + detail::kGeluA * z * z * z)));
  }
  return make_op(std::move(v), {a}, [a](const Matrix& g) {
    const Matrix& x = a.value();
    Matrix d(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double z = x.data()[i];
      const double th = std::tanh(detail::kGeluC * (z + detail::kGeluA * z * z * z));
      const double dth = (1.0 - th * th) * detail::kGeluC * (1.0 + 3.0 * detail::kGeluA * z * z);
      d.data()[i] = g.data()[i] * (0.5 * (1.0 + th) + 0.5 * z * dth);
    }
    accumulate(a, d);
  });
}

inline Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  if (gain.cols() != cols || bias.cols() != cols) {
    throw Error(Errc::dimension_mismatch, "layer_norm: parameter width differs");
  }
  Matrix xhat(rows, cols);
  RowVector inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.value().row(r).mean();
    const double var = (x.value().row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.value().row(r).array() - mean) * inv_std(r);
  }
  Matrix y = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  y.rowwise() += RowVector(bias.value());
  return make_op(std::move(y), {x, gain, bias}, [x, gain, bias, xhat, inv_std](const Matrix& g) {
    if (gain.requires_grad()) accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
    if (bias.requires_grad()) accumulate(bias, g.colwise().sum());
    if (x.requires_grad()) {
      const double n = static_cast<double>(xhat.cols());
      Matrix gx(xhat.rows(), xhat.cols());
      for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
        RowVector gh = g.row(r).cwiseProduct(gain.value().row(0));
        const double m1 = gh.sum() / n;
        const double m2 = gh.cwiseProduct(xhat.row(r)).sum() / n;
        gx.row(r) = ((gh.array() - m1 - xhat.row(r).array() * m2) * inv_std(r)).matrix();
      }
      accumulate(x, gx);
    }
  });
}

inline Var softmax_rows(const Var& a) {
  Matrix y = a.value();
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double m = y.row(r).maxCoeff();
    y.row(r) = (y.row(r).array() - m).exp().matrix();
    y.row(r) /= y.row(r).sum();
  }
  Matrix out = y;
  return make_op(std::move(y), {a}, [a, out](const Matrix& g) {
    Matrix gx(out.rows(), out.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double dot = g.row(r).dot(out.row(r));
      gx.row(r) = out.row(r).cwiseProduct((g.row(r).array() - dot).matrix());
    }
    accumulate(a, gx);
  });
}

/// Scales each row to unit L2 norm. A zero row is an error.
inline Var l2_normalize_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix y(x.rows(), x.cols());
  RowVector norms(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    norms(r) = x.row(r).norm();
    if (!(norms(r) > 0.0)) throw Error(Errc::zero_vector, "cannot normalize a zero-norm row");
    y.row(r) = x.row(r) / norms(r);
  }
  Matrix out = y;
  return make_op(std::move(y), {a}, [a, out, norms](const Matrix& g) {
    Matrix gx(out.rows(), out.cols());
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double dot = g.row(r).dot(out.row(r));
      gx.row(r) = (g.row(r) - out.row(r) * dot) / norms(r);
    }
    accumulate(a, gx);
  });
}

/// Mean over rows, returning 1 x C.
inline Var mean_rows(const Var& a) {
  const double n = static_cast<double>(a.rows());
  Matrix v = a.value().colwise().sum() / n;
  return make_op(std::move(v), {a}, [a, n](const Matrix& g) {
    Matrix gx = g.replicate(a.rows(), 1) / n;
    accumulate(a, gx);
  });
}

inline Var sum(const Var& a) {
  return make_op(Matrix::Constant(1, 1, a.value().sum()), {a}, [a](const Matrix& g) {
    accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

inline Var slice_rows(const Var& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows()) {
    throw Error(Errc::dimension_mismatch, "slice_rows: range out of bounds");
  }
  Matrix v = a.value().middleRows(begin, count);
  return make_op(std::move(v), {a}, [a, begin, count](const Matrix& g) {
    Matrix gx = Matrix::Zero(a.rows(), a.cols());
    gx.middleRows(begin, count) = g;
    accumulate(a, gx);
  });
}

inline Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw Error(Errc::dimension_mismatch, "slice_cols: range out of bounds");
  }
  Matrix v = a.value().middleCols(begin, count);
  return make_op(std::move(v), {a}, [a, begin, count](const Matrix& g) {
    Matrix gx = Matrix::Zero(a.rows(), a.cols());
    gx.middleCols(begin, count) = g;
    accumulate(a, gx);
  });
}

inline Var vstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(Errc::dimension_mismatch, "vstack: no inputs");
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  for (const Var& p : parts) {
    if (p.cols() != cols) throw Error(Errc::dimension_mismatch, "vstack: column counts differ");
    rows += p.rows();
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return make_op_n(std::move(v), parts, [parts](const Matrix& g) {
    Eigen::Index at = 0;
    for (const Var& p : parts) {
      if (p.requires_grad()) accumulate(p, g.middleRows(at, p.rows()));
      at += p.rows();
    }
  });
}

inline Var hstack(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(Errc::dimension_mismatch, "hstack: no inputs");
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  for (const Var& p : parts) {
    if (p.rows() != rows) throw Error(Errc::dimension_mismatch, "hstack: row counts differ");
    cols += p.cols();
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (const Var& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  return make_op_n(std::move(v), parts, [parts](const Matrix& g) {
    Eigen::Index at = 0;
    for (const Var& p : parts) {
      if (p.requires_grad()) accumulate(p, g.middleCols(at, p.cols()));
      at += p.cols();
    }
  });
}

/// Arithmetic mean of same-shaped Vars.
inline Var mean(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(Errc::dimension_mismatch, "mean: no inputs");
  Matrix v = parts.front().value();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    require_same_shape(parts.front(), parts[i], "mean");
    v += parts[i].value();
  }
  const double n = static_cast<double>(parts.size());
  v /= n;
  return make_op_n(std::move(v), parts, [parts, n](const Matrix& g) {
    Matrix share = g / n;
    for (const Var& p : parts) accumulate(p, share);
  });
}

/// -log softmax(logits)[label] for a 1 x n logit row, with the probability
/// floored at `floor` before the log.
inline Var cross_entropy(const Var& logits, Eigen::Index label, double floor = 1e-12) {
  if (logits.rows() != 1) throw Error(Errc::shape_mismatch, "cross_entropy: logits must be a row");
  if (label < 0 || label >= logits.cols()) {
    throw Error(Errc::label_out_of_range, "label " + std::to_string(label) + " outside " +
                                              std::to_string(logits.cols()) + " classes");
  }
  RowVector p = logits.value().row(0);
  p = (p.array() - p.maxCoeff()).exp().matrix();
  p /= p.sum();
  const double pl = p(label);
  const bool floored = !(pl > floor);
  const double loss = -std::log(floored ? floor : pl);
  return make_op(Matrix::Constant(1, 1, loss), {logits}, [logits, p, label, floored](const Matrix& g) {
    if (floored) return;
    Matrix gx = p;
    gx(0, label) -= 1.0;
    accumulate(logits, gx * g(0, 0));
  });
}

}  // namespace fsar::ad
