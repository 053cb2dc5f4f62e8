#pragma once

// Temporal alignment metrics between a query and a support video.
//
// SIGN CONVENTION: every metric here returns a SIMILARITY, i.e. a negated
// alignment cost. Higher means more alike. The few-shot head exponentiates
// these scores directly, so returning a distance would invert the ranking.

#include "fsar/autodiff.hpp"
#include "fsar/core.hpp"
#include "fsar/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace fsar {

enum class MetricKind { otam, bi_mhm, mean_cosine };

inline const char* metric_name(MetricKind k) {
  switch (k) {
    case MetricKind::otam: return "otam";
    case MetricKind::bi_mhm: return "bi_mhm";
    case MetricKind::mean_cosine: return "mean_cosine";
  }
  return "otam";
}

inline MetricKind parse_metric(std::string_view s) {
  if (s == "otam") return MetricKind::otam;
  if (s == "bi_mhm") return MetricKind::bi_mhm;
  if (s == "mean_cosine") return MetricKind::mean_cosine;
  throw Error(Errc::invalid_config, "unknown metric '" + std::string(s) + "'");
}

struct OtamOptions {
  /// Soft-min smoothing; 0 selects the exact (hard) minimum.
  double lambda = 0.1;
  bool bidirectional = true;
  /// Zero-cost pad columns around the support axis. Off gives plain DTW.
  bool relax_boundary = true;
};

struct MetricConfig {
  MetricKind kind = MetricKind::otam;
  OtamOptions otam;
};

// ---------------------------------------------------------------------------
// Cost matrix

/// cost(i, j) = 1 - cos(query row i, support row j), clamped to [0, 2].
inline ad::Var cost_matrix(const ad::Var& fq, const ad::Var& fs) {
  if (fq.cols() != fs.cols()) throw Error(Errc::dimension_mismatch, "cost_matrix: feature widths differ");
  ad::Var sim = ad::matmul_nt(ad::l2_normalize_rows(fq), ad::l2_normalize_rows(fs));
  return ad::clamp(ad::affine(sim, -1.0, 1.0), 0.0, 2.0);
}

inline CostMatrix cost_matrix(const FrameFeatures& fq, const FrameFeatures& fs) {
  return cost_matrix(ad::constant(fq), ad::constant(fs)).value();
}

// ---------------------------------------------------------------------------
// OTAM dynamic programme

namespace detail {

struct SoftMin {
  double value;
  double weights[3];
};

/// -lambda * log(sum exp(-x / lambda)) over n <= 3 candidates, with the
/// derivative of the result w.r.t. each candidate. lambda == 0 is the hard
/// minimum with first-index tie-breaking.
inline SoftMin soft_min(const double* x, int n, double lambda) {
  SoftMin out{};
  int arg = 0;
  for (int k = 1; k < n; ++k) {
    if (x[k] < x[arg]) arg = k;
  }
  const double m = x[arg];
  if (lambda == 0.0 || n == 1) {
    out.value = m;
    for (int k = 0; k < n; ++k) out.weights[k] = k == arg ? 1.0 : 0.0;
    return out;
  }
  double s = 0.0;
  double e[3];
  for (int k = 0; k < n; ++k) {
    e[k] = std::exp(-(x[k] - m) / lambda);
    s += e[k];
  }
  out.value = m - lambda * std::log(s);
  for (int k = 0; k < n; ++k) out.weights[k] = e[k] / s;
  return out;
}

/// One-direction alignment cost and, optionally, its gradient w.r.t. `cost`.
///
/// Padded layout (relax_boundary): columns 0 and W-1 are zero-cost pads,
/// column j in [1, W-2] holds support frame j-1. Allowed moves into a cell:
///   row 0            : right
///   left pad column  : down
///   interior column  : diagonal, right
///   right pad column : diagonal, right, down
/// The path runs from (0, 0) to (rows-1, W-1), so it may enter and leave the
/// support sequence anywhere while stepping through it in order.
///
/// Without relaxation this is classic DTW on the raw matrix with moves
/// {diagonal, down, right} from (0, 0) to (rows-1, cols-1).
inline double alignment_cost(const CostMatrix& cost, double lambda, bool relax, Matrix* grad) {
  const Eigen::Index rows = cost.rows();
  const Eigen::Index width = relax ? cost.cols() + 2 : cost.cols();
  auto cell_cost = [&](Eigen::Index i, Eigen::Index j) -> double {
    if (!relax) return cost(i, j);
    return (j == 0 || j == width - 1) ? 0.0 : cost(i, j - 1);
  };

  struct Pred {
    int n = 0;
    Eigen::Index r[3];
    Eigen::Index c[3];
    double w[3];
  };
  Matrix acc(rows, width);
  std::vector<Pred> preds(static_cast<std::size_t>(rows * width));

  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < width; ++j) {
      Pred& p = preds[static_cast<std::size_t>(i * width + j)];
      auto add = [&](Eigen::Index r, Eigen::Index c) {
        p.r[p.n] = r;
        p.c[p.n] = c;
        ++p.n;
      };
      if (i == 0) {
        if (j > 0) add(0, j - 1);
      } else if (relax) {
        if (j == 0) {
          add(i - 1, 0);
        } else if (j < width - 1) {
          add(i - 1, j - 1);
          add(i, j - 1);
        } else {
          add(i - 1, j - 1);
          add(i, j - 1);
          add(i - 1, j);
        }
      } else {
        if (j == 0) {
          add(i - 1, 0);
        } else {
          add(i - 1, j - 1);
          add(i - 1, j);
          add(i, j - 1);
        }
      }
      double base = 0.0;
      if (p.n > 0) {
        double x[3];
        for (int k = 0; k < p.n; ++k) x[k] = acc(p.r[k], p.c[k]);
        const SoftMin sm = soft_min(x, p.n, lambda);
        base = sm.value;
        for (int k = 0; k < p.n; ++k) p.w[k] = sm.weights[k];
      }
      acc(i, j) = cell_cost(i, j) + base;
    }
  }

  if (grad != nullptr) {
    Matrix adj = Matrix::Zero(rows, width);
    adj(rows - 1, width - 1) = 1.0;
    for (Eigen::Index i = rows - 1; i >= 0; --i) {
      for (Eigen::Index j = width - 1; j >= 0; --j) {
        const double a = adj(i, j);
        if (a == 0.0) continue;
        const Pred& p = preds[static_cast<std::size_t>(i * width + j)];
        for (int k = 0; k < p.n; ++k) adj(p.r[k], p.c[k]) += a * p.w[k];
      }
    }
    *grad = relax ? Matrix(adj.middleCols(1, cost.cols())) : adj;
  }
  return acc(rows - 1, width - 1);
}

inline void check_cost(const CostMatrix& cost, double lambda) {
  if (cost.rows() < 1 || cost.cols() < 1) throw Error(Errc::shape_mismatch, "empty cost matrix");
  if (!cost.allFinite()) throw Error(Errc::non_finite, "cost matrix has non-finite entries");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(Errc::invalid_config, "OTAM lambda must be >= 0");
}

}  // namespace detail

/// Negated OTAM alignment cost (higher = more similar). With `bidirectional`
/// the same programme on the transposed matrix is added.
inline double otam_score(const CostMatrix& cost, const OtamOptions& opt = {}) {
  detail::check_cost(cost, opt.lambda);
  double total = detail::alignment_cost(cost, opt.lambda, opt.relax_boundary, nullptr);
  if (opt.bidirectional) {
    total += detail::alignment_cost(cost.transpose(), opt.lambda, opt.relax_boundary, nullptr);
  }
  return -total;
}

inline double otam_score(const CostMatrix& cost, double lambda, bool bidirectional) {
  return otam_score(cost, OtamOptions{lambda, bidirectional, true});
}

/// Differentiable OTAM score. At lambda = 0 the gradient is the subgradient
/// of the hard minimum (first index wins ties), which is non-smooth.
inline ad::Var otam_score(const ad::Var& cost, const OtamOptions& opt = {}) {
  detail::check_cost(cost.value(), opt.lambda);
  Matrix g_fwd;
  Matrix g_bwd;
  const bool want_grad = cost.requires_grad();
  double total = detail::alignment_cost(cost.value(), opt.lambda, opt.relax_boundary, want_grad ? &g_fwd : nullptr);
  if (opt.bidirectional) {
    const Matrix transposed = cost.value().transpose();
    total += detail::alignment_cost(transposed, opt.lambda, opt.relax_boundary, want_grad ? &g_bwd : nullptr);
  }
  const bool bidir = opt.bidirectional;
  return ad::make_op(Matrix::Constant(1, 1, -total), {cost}, [cost, g_fwd, g_bwd, bidir](const Matrix& g) {
    Matrix d = g_fwd;
    if (bidir) d += g_bwd.transpose();
    ad::accumulate(cost, d * -g(0, 0));
  });
}

/// Exhaustive enumeration of every admissible path; test oracle for
/// otam_score at lambda = 0. Written against forward moves so it does not
/// share the programme's predecessor logic.
inline double brute_force_otam(const CostMatrix& cost, bool bidirectional, bool relax_boundary = true) {
  constexpr Eigen::Index kMax = 7;
  if (cost.rows() > kMax || cost.cols() > kMax) {
    throw Error(Errc::size_exceeded, "brute_force_otam handles at most 7 x 7 matrices");
  }
  detail::check_cost(cost, 0.0);

  auto one_direction = [relax_boundary](const CostMatrix& c) {
    const Eigen::Index rows = c.rows();
    const Eigen::Index width = relax_boundary ? c.cols() + 2 : c.cols();
    auto at = [&](Eigen::Index i, Eigen::Index j) {
      if (!relax_boundary) return c(i, j);
      return (j == 0 || j == width - 1) ? 0.0 : c(i, j - 1);
    };
    auto is_pad = [&](Eigen::Index j) { return relax_boundary && (j == 0 || j == width - 1); };
    double best = std::numeric_limits<double>::infinity();
    // Depth-first walk; cost accumulated along the path.
    auto walk = [&](auto&& self, Eigen::Index i, Eigen::Index j, double so_far) -> void {
      so_far += at(i, j);
      if (i == rows - 1 && j == width - 1) {
        best = std::min(best, so_far);
        return;
      }
      if (j + 1 < width) self(self, i, j + 1, so_far);  // right
      if (i + 1 < rows && j + 1 < width) {
        // In the padded layout a diagonal step never lands in the left pad.
        self(self, i + 1, j + 1, so_far);
      }
      if (i + 1 < rows && (!relax_boundary || is_pad(j))) self(self, i + 1, j, so_far);  // down
    };
    walk(walk, 0, 0, 0.0);
    return best;
  };

  double total = one_direction(cost);
  if (bidirectional) total += one_direction(cost.transpose());
  return -total;
}

// ---------------------------------------------------------------------------
// Bi-MHM and the mean-cosine baseline

/// -(mean over rows of row minima + mean over columns of column minima).
inline ad::Var bi_mhm_score(const ad::Var& cost) {
  const Matrix& c = cost.value();
  if (c.rows() < 1 || c.cols() < 1) throw Error(Errc::shape_mismatch, "empty cost matrix");
  std::vector<Eigen::Index> row_arg(static_cast<std::size_t>(c.rows()));
  std::vector<Eigen::Index> col_arg(static_cast<std::size_t>(c.cols()));
  double row_term = 0.0;
  double col_term = 0.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    Eigen::Index arg;
    row_term += c.row(i).minCoeff(&arg);
    row_arg[static_cast<std::size_t>(i)] = arg;
  }
  for (Eigen::Index j = 0; j < c.cols(); ++j) {
    Eigen::Index arg;
    col_term += c.col(j).minCoeff(&arg);
    col_arg[static_cast<std::size_t>(j)] = arg;
  }
  const double rows = static_cast<double>(c.rows());
  const double cols = static_cast<double>(c.cols());
  const double score = -(row_term / rows + col_term / cols);
  return ad::make_op(Matrix::Constant(1, 1, score), {cost}, [cost, row_arg, col_arg, rows, cols](const Matrix& g) {
    Matrix d = Matrix::Zero(cost.rows(), cost.cols());
    for (std::size_t i = 0; i < row_arg.size(); ++i) d(static_cast<Eigen::Index>(i), row_arg[i]) -= 1.0 / rows;
    for (std::size_t j = 0; j < col_arg.size(); ++j) d(col_arg[j], static_cast<Eigen::Index>(j)) -= 1.0 / cols;
    ad::accumulate(cost, d * g(0, 0));
  });
}

inline double bi_mhm_score(const CostMatrix& cost) { return bi_mhm_score(ad::constant(cost)).scalar(); }

/// cos(gap(fq), gap(fs)).
inline ad::Var mean_cosine_score(const ad::Var& fq, const ad::Var& fs) {
  if (fq.cols() != fs.cols()) throw Error(Errc::dimension_mismatch, "mean_cosine_score: feature widths differ");
  ad::Var a = ad::l2_normalize_rows(ad::mean_rows(fq));
  ad::Var b = ad::l2_normalize_rows(ad::mean_rows(fs));
  return ad::clamp(ad::matmul_nt(a, b), -1.0, 1.0);
}

inline double mean_cosine_score(const FrameFeatures& fq, const FrameFeatures& fs) {
  return mean_cosine_score(ad::constant(fq), ad::constant(fs)).scalar();
}

/// Query-support similarity under the configured metric.
inline ad::Var similarity(const MetricConfig& cfg, const ad::Var& fq, const ad::Var& fs) {
  switch (cfg.kind) {
    case MetricKind::otam: return otam_score(cost_matrix(fq, fs), cfg.otam);
    case MetricKind::bi_mhm: return bi_mhm_score(cost_matrix(fq, fs));
    case MetricKind::mean_cosine: return mean_cosine_score(fq, fs);
  }
  throw Error(Errc::invalid_config, "unknown metric kind");
}

inline double similarity(const MetricConfig& cfg, const FrameFeatures& fq, const FrameFeatures& fs) {
  return similarity(cfg, ad::constant(fq), ad::constant(fs)).scalar();
}

}  // namespace fsar
