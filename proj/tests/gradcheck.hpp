#pragma once

// Central finite-difference check for scalar functions of matrix inputs.

#include "fsar/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace fsar::testing {

using ScalarFn = std::function<ad::Var(const std::vector<ad::Var>&)>;

/// Worst per-tensor relative error ||g_analytic - g_numeric|| / max(norms).
/// A tensor whose gradient is below `negligible` times the largest norm over
/// all inputs is judged against that largest norm instead. Without that, a
/// parameter the output is exactly invariant to (an attention key bias, say)
/// would compare rounding noise against an exact zero and report an error of 1.
inline double gradient_error(const std::vector<Matrix>& inputs, const ScalarFn& f, double h = 1e-6,
                             double negligible = 1e-6) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  for (const Matrix& m : inputs) vars.push_back(tape.leaf(m));
  ad::Var out = f(vars);
  tape.backward(out);

  std::vector<Matrix> analytic, numeric;
  double largest = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Matrix a = vars[i].grad();
    if (a.size() == 0) a = Matrix::Zero(inputs[i].rows(), inputs[i].cols());
    Matrix n(inputs[i].rows(), inputs[i].cols());
    for (Eigen::Index k = 0; k < inputs[i].size(); ++k) {
      auto eval = [&](double delta) {
        std::vector<ad::Var> probe;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          Matrix m = inputs[j];
          if (j == i) m.data()[k] += delta;
          probe.push_back(ad::constant(m));
        }
        return f(probe).scalar();
      };
      n.data()[k] = (eval(h) - eval(-h)) / (2.0 * h);
    }
    largest = std::max({largest, a.norm(), n.norm()});
    analytic.push_back(std::move(a));
    numeric.push_back(std::move(n));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    double scale = std::max(analytic[i].norm(), numeric[i].norm());
    if (scale < negligible * largest) scale = largest;
    if (scale > 0.0) worst = std::max(worst, (analytic[i] - numeric[i]).norm() / scale);
  }
  return worst;
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

/// sum_ij x_ij * w_ij for a fixed random w, so every output entry carries its
/// own weight into the gradient.
inline ad::Var weighted_sum(const ad::Var& x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  const Matrix w = random_matrix(x.rows(), x.cols(), rng);
  std::vector<ad::Var> rows;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    rows.push_back(ad::matmul_nt(ad::slice_rows(x, r, 1), ad::constant(Matrix(w.row(r)))));
  }
  return ad::sum(ad::vstack(rows));
}

}  // namespace fsar::testing
