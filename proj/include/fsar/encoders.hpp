#pragma once

// Visual and text encoders into the shared C-dimensional embedding space.
//
// The visual encoder is a per-frame MLP (D_raw -> hidden... -> C); rows never
// interact, so temporal mixing is left to the modulation Transformer. The
// text encoder is a frozen, seeded embedding table keyed by the expanded
// prompt string, optionally correlated with the synthetic latent class
// vectors through `informativeness`.

#include "fsar/autodiff.hpp"
#include "fsar/core.hpp"
#include "fsar/data.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace fsar {

class PromptTemplate {
 public:
  static constexpr std::string_view kPlaceholder = "[CLS]";

  PromptTemplate() : PromptTemplate("a photo of [CLS]") {}

  explicit PromptTemplate(std::string text) : text_(std::move(text)) {
    const auto first = text_.find(kPlaceholder);
    if (first == std::string::npos || text_.find(kPlaceholder, first + 1) != std::string::npos) {
      throw Error(Errc::invalid_config, "prompt template '" + text_ + "' must contain exactly one [CLS]");
    }
  }

  std::string expand(const std::string& class_name) const {
    std::string out = text_;
    out.replace(out.find(kPlaceholder), kPlaceholder.size(), class_name);
    return out;
  }

  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

// ---------------------------------------------------------------------------
// Visual encoder

struct VisualEncoderParams {
  std::vector<Matrix> weights;  // in x out
  std::vector<Matrix> biases;   // 1 x out

  int input_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.front().rows()); }
  int output_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.back().cols()); }

  /// `hidden_layers` GELU layers of width `hidden`, then a linear map to `out_dim`.
  static VisualEncoderParams init(int in_dim, int hidden, int hidden_layers, int out_dim, Rng& rng) {
    if (in_dim < 1 || out_dim < 1 || hidden_layers < 0 || (hidden_layers > 0 && hidden < 1)) {
      throw Error(Errc::invalid_config, "visual encoder dimensions must be positive");
    }
    VisualEncoderParams p;
    std::normal_distribution<double> normal(0.0, 1.0);
    int fan_in = in_dim;
    for (int l = 0; l <= hidden_layers; ++l) {
      const int fan_out = l == hidden_layers ? out_dim : hidden;
      Matrix w(fan_in, fan_out);
      const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = sd * normal(rng);
      p.weights.push_back(std::move(w));
      p.biases.push_back(Matrix::Zero(1, fan_out));
      fan_in = fan_out;
    }
    return p;
  }

  template <class F>
  void for_each(F&& f) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      f("encoder.w" + std::to_string(l), weights[l]);
      f("encoder.b" + std::to_string(l), biases[l]);
    }
  }
};

struct VisualEncoderVars {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
};

/// Trainable leaves when `tape` is given, constants otherwise.
inline VisualEncoderVars bind(const VisualEncoderParams& p, ad::Tape* tape) {
  VisualEncoderVars v;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    v.weights.push_back(tape ? tape->leaf(p.weights[l]) : ad::constant(p.weights[l]));
    v.biases.push_back(tape ? tape->leaf(p.biases[l]) : ad::constant(p.biases[l]));
  }
  return v;
}

inline ad::Var encode_video(const VisualEncoderVars& enc, const ad::Var& frames) {
  if (enc.weights.empty()) throw Error(Errc::invalid_config, "visual encoder has no layers");
  if (frames.cols() != enc.weights.front().rows()) {
    throw Error(Errc::dimension_mismatch, "frame dim " + std::to_string(frames.cols()) + " but encoder expects " +
                                              std::to_string(enc.weights.front().rows()));
  }
  ad::Var h = frames;
  for (std::size_t l = 0; l < enc.weights.size(); ++l) {
    h = ad::add_row(ad::matmul(h, enc.weights[l]), enc.biases[l]);
    if (l + 1 < enc.weights.size()) h = ad::gelu(h);
  }
  return h;
}

/// t raw frames (t x D_raw) -> FrameFeatures (t x C).
inline FrameFeatures encode_video(const VisualEncoderParams& params, const Matrix& frames) {
  return encode_video(bind(params, nullptr), ad::constant(frames)).value();
}

// ---------------------------------------------------------------------------
// Text encoder

struct TextEncoderParams {
  int dim = 32;
  /// Raw frame dimension of the synthetic world; only used when informativeness > 0.
  int raw_dim = 32;
  std::uint64_t table_seed = 11;
  std::uint64_t semantic_seed = 7;
  double informativeness = 0.0;
  bool normalize = true;
};

/// Frozen text encoder: holds no trainable state, so training can never move
/// its outputs.
class TextEncoder {
 public:
  TextEncoder() : TextEncoder(TextEncoderParams{}) {}

  explicit TextEncoder(TextEncoderParams params) : params_(params) {
    if (params_.dim < 1) throw Error(Errc::invalid_config, "text dim must be positive");
    if (!(params_.informativeness >= 0.0 && params_.informativeness <= 1.0)) {
      throw Error(Errc::invalid_config, "text_informativeness must lie in [0, 1]");
    }
    if (params_.informativeness > 0.0) {
      if (params_.raw_dim < 1) throw Error(Errc::invalid_config, "raw dim must be positive");
      Rng rng(splitmix64(params_.semantic_seed ^ 0x7465787450726f6aULL));
      std::normal_distribution<double> normal(0.0, 1.0);
      projection_.resize(params_.dim, params_.raw_dim);
      for (Eigen::Index i = 0; i < projection_.size(); ++i) projection_.data()[i] = normal(rng);
    }
  }

  const TextEncoderParams& params() const { return params_; }

  RowVector encode(const std::string& class_name, const PromptTemplate& tmpl = PromptTemplate()) const {
    if (class_name.empty()) throw Error(Errc::empty_name, "class name is empty");
    const std::string expanded = tmpl.expand(class_name);
    RowVector w = latent_vector(params_.table_seed, "text:" + expanded, params_.dim).transpose();
    w.normalize();
    const double rho = params_.informativeness;
    if (rho > 0.0) {
      const Eigen::VectorXd z = latent_class_vector(params_.semantic_seed, class_name, params_.raw_dim);
      RowVector semantic = (projection_ * z).transpose();
      semantic.normalize();
      w = rho * semantic + std::sqrt(std::max(0.0, 1.0 - rho * rho)) * w;
    }
    if (params_.normalize) w.normalize();
    return w;
  }

 private:
  TextEncoderParams params_;
  Matrix projection_;
};

inline RowVector encode_text(const TextEncoder& encoder, const std::string& class_name,
                             const PromptTemplate& tmpl = PromptTemplate()) {
  return encoder.encode(class_name, tmpl);
}

// ---------------------------------------------------------------------------
// Pooling and similarity

inline RowVector gap(const FrameFeatures& features) {
  if (features.rows() < 1) throw Error(Errc::shape_mismatch, "gap() needs at least one row");
  return features.colwise().sum() / static_cast<double>(features.rows());
}

inline double cosine_similarity(const RowVector& a, const RowVector& b) {
  if (a.size() != b.size()) throw Error(Errc::dimension_mismatch, "cosine_similarity: lengths differ");
  const double na = a.norm();
  const double nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw Error(Errc::zero_vector, "cosine_similarity of a zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

}  // namespace fsar
