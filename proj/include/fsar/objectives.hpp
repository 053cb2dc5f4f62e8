#pragma once

// Prediction heads and losses: video-text matching, few-shot metric
// classification, the joint loss, and the geometric ensemble of the two heads.

#include "fsar/autodiff.hpp"
#include "fsar/core.hpp"
#include "fsar/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace fsar {

inline constexpr double kProbabilityFloor = 1e-12;

struct ClassDistribution {
  std::vector<double> probs;
  std::vector<std::uint32_t> class_ids;

  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  }

  void validate() const {
    if (probs.size() != class_ids.size()) throw Error(Errc::class_set_mismatch, "probs and class ids differ in length");
    double total = 0.0;
    for (double p : probs) {
      if (!(p >= 0.0) || !std::isfinite(p)) throw Error(Errc::non_finite, "invalid probability entry");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw Error(Errc::non_finite, "probabilities do not sum to 1");
  }
};

/// Learnable temperature stored as log(tau); tau is kept inside [1e-3, 100].
struct Temperature {
  static constexpr double kMin = 1e-3;
  static constexpr double kMax = 100.0;

  double log_tau = std::log(0.07);

  static Temperature from_tau(double tau) {
    if (!(tau > 0.0)) throw Error(Errc::invalid_config, "temperature must be positive");
    Temperature t;
    t.log_tau = std::log(std::clamp(tau, kMin, kMax));
    return t;
  }

  double tau() const { return std::exp(log_tau); }
  void clamp() { log_tau = std::clamp(log_tau, std::log(kMin), std::log(kMax)); }
};

struct LossWeights {
  double alpha = 1.0;
  double beta = 0.25;

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(Errc::invalid_config, "alpha must be >= 0");
    if (!(beta >= 0.0 && beta <= 1.0)) throw Error(Errc::invalid_config, "beta must lie in [0, 1]");
  }
};

/// Numerically stable softmax of a score vector.
inline std::vector<double> stable_softmax(const std::vector<double>& scores) {
  const double m = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] - m);
    total += p[i];
  }
  for (double& x : p) x /= total;
  return p;
}

inline std::vector<std::uint32_t> default_ids(std::size_t n) {
  std::vector<std::uint32_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0u);
  return ids;
}

// ---------------------------------------------------------------------------
// Video-text matching

/// Stacks text vectors into an n x C matrix of unit rows.
inline Matrix normalized_text_matrix(const std::vector<RowVector>& texts) {
  if (texts.empty()) throw Error(Errc::class_set_mismatch, "need at least one text feature");
  Matrix m(static_cast<Eigen::Index>(texts.size()), texts.front().size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].size() != m.cols()) throw Error(Errc::dimension_mismatch, "text features differ in width");
    const double n = texts[i].norm();
    if (!(n > 0.0)) throw Error(Errc::zero_vector, "zero-norm text feature");
    m.row(static_cast<Eigen::Index>(i)) = texts[i] / n;
  }
  return m;
}

/// 1 x n logits cos(gap(features), w_j) / tau. `log_tau` is a 1x1 Var.
inline ad::Var video_text_logits(const ad::Var& features, const Matrix& unit_texts, const ad::Var& log_tau) {
  if (features.cols() != unit_texts.cols()) {
    throw Error(Errc::dimension_mismatch, "video features and text features differ in width");
  }
  ad::Var pooled = ad::l2_normalize_rows(ad::mean_rows(features));
  ad::Var cosines = ad::clamp(ad::matmul_nt(pooled, ad::constant(unit_texts)), -1.0, 1.0);
  return ad::scale_by(cosines, ad::exp(ad::scale(log_tau, -1.0)));
}

inline ClassDistribution video_text_probs(const FrameFeatures& features, const std::vector<RowVector>& texts,
                                          double tau, std::vector<std::uint32_t> class_ids = {}) {
  if (!(tau > 0.0)) throw Error(Errc::invalid_config, "temperature must be positive");
  if (class_ids.empty()) class_ids = default_ids(texts.size());
  if (class_ids.size() != texts.size()) throw Error(Errc::class_set_mismatch, "class ids and texts differ in length");
  const Matrix unit = normalized_text_matrix(texts);
  ad::Var logits = video_text_logits(ad::constant(features), unit, ad::scalar_constant(std::log(tau)));
  const RowVector row = logits.value().row(0);
  ClassDistribution d;
  d.probs = stable_softmax(std::vector<double>(row.data(), row.data() + row.size()));
  d.class_ids = std::move(class_ids);
  return d;
}

/// Mean negative log-probability of each video's label over `texts`.
inline double video_text_loss(const std::vector<FrameFeatures>& features, const std::vector<int>& labels,
                              const std::vector<RowVector>& texts, double tau) {
  if (features.size() != labels.size() || features.empty()) {
    throw Error(Errc::shape_mismatch, "need one label per video");
  }
  const Matrix unit = normalized_text_matrix(texts);
  const ad::Var log_tau = ad::scalar_constant(std::log(tau));
  double total = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    total += ad::cross_entropy(video_text_logits(ad::constant(features[i]), unit, log_tau), labels[i], kProbabilityFloor)
                 .scalar();
  }
  return total / static_cast<double>(features.size());
}

// ---------------------------------------------------------------------------
// Few-shot head

/// Softmax of raw similarity scores; no temperature.
inline ClassDistribution few_shot_probs(const std::vector<double>& scores, std::vector<std::uint32_t> class_ids = {}) {
  if (scores.size() < 2) throw Error(Errc::shape_mismatch, "few-shot head needs N >= 2 scores");
  for (double s : scores) {
    if (!std::isfinite(s)) throw Error(Errc::non_finite, "non-finite similarity score");
  }
  if (class_ids.empty()) class_ids = default_ids(scores.size());
  if (class_ids.size() != scores.size()) throw Error(Errc::class_set_mismatch, "class ids and scores differ in length");
  return {stable_softmax(scores), std::move(class_ids)};
}

/// -log p[label] with p floored at 1e-12.
inline double few_shot_loss(const ClassDistribution& dist, int true_label) {
  if (true_label < 0 || static_cast<std::size_t>(true_label) >= dist.probs.size()) {
    throw Error(Errc::label_out_of_range, "label " + std::to_string(true_label) + " outside " +
                                              std::to_string(dist.probs.size()) + " classes");
  }
  return -std::log(std::max(dist.probs[static_cast<std::size_t>(true_label)], kProbabilityFloor));
}

inline double joint_loss(double l_vt, double l_fs, double alpha) {
  if (!(alpha >= 0.0)) throw Error(Errc::invalid_config, "alpha must be >= 0");
  return l_vt + alpha * l_fs;
}

inline ad::Var joint_loss(const ad::Var& l_vt, const ad::Var& l_fs, double alpha) {
  return ad::add(l_vt, ad::scale(l_fs, alpha));
}

// ---------------------------------------------------------------------------
// Ensemble

/// p_vt^beta * p_fs^(1-beta), renormalised. The endpoints return the
/// corresponding input unchanged.
inline ClassDistribution ensemble_probs(const ClassDistribution& p_vt, const ClassDistribution& p_fs, double beta) {
  if (p_vt.class_ids != p_fs.class_ids || p_vt.probs.size() != p_fs.probs.size()) {
    throw Error(Errc::class_set_mismatch, "ensemble inputs cover different class lists");
  }
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(Errc::invalid_config, "beta must lie in [0, 1]");
  if (beta == 0.0) return p_fs;
  if (beta == 1.0) return p_vt;
  std::vector<double> logits(p_vt.probs.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    logits[i] = beta * std::log(std::max(p_vt.probs[i], kProbabilityFloor)) +
                (1.0 - beta) * std::log(std::max(p_fs.probs[i], kProbabilityFloor));
  }
  return {stable_softmax(logits), p_vt.class_ids};
}

}  // namespace fsar
