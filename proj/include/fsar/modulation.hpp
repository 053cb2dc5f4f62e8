#pragma once

// Temporal Transformer and text-guided prototype modulation.
//
// Support prototypes get the class text vector appended as an extra token
// (frames keep positions 0..t-1, text sits at position t); the first t output
// rows are the modulated prototype. Queries go through the same parameters
// without a text token.

#include "fsar/autodiff.hpp"
#include "fsar/core.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace fsar {

enum class PositionalEncoding { sinusoidal, none };

inline PositionalEncoding parse_positional(std::string_view s) {
  if (s == "sinusoidal") return PositionalEncoding::sinusoidal;
  if (s == "none") return PositionalEncoding::none;
  throw Error(Errc::invalid_config, "unknown positional encoding '" + std::string(s) + "'");
}

inline const char* positional_name(PositionalEncoding p) {
  return p == PositionalEncoding::sinusoidal ? "sinusoidal" : "none";
}

struct TransformerConfig {
  int layers = 1;
  int heads = 4;
  int dim = 32;
  int ff_dim = 64;
  PositionalEncoding positional = PositionalEncoding::sinusoidal;

  void validate() const {
    if (layers < 1) throw Error(Errc::invalid_config, "transformer needs >= 1 layer");
    if (heads < 1 || dim < 1 || dim % heads != 0) {
      throw Error(Errc::invalid_config, "model dim " + std::to_string(dim) + " not divisible by " +
                                            std::to_string(heads) + " heads");
    }
    if (ff_dim < 1) throw Error(Errc::invalid_config, "ff_dim must be positive");
  }
};

struct TransformerLayer {
  Matrix ln1_gain, ln1_bias;
  Matrix wq, wk, wv, wo;
  Matrix bq, bk, bv, bo;
  Matrix ln2_gain, ln2_bias;
  Matrix w1, b1, w2, b2;
};

/// One parameter set, shared by the support and query paths.
struct TransformerParams {
  TransformerConfig config;
  std::vector<TransformerLayer> layers;

  static TransformerParams init(const TransformerConfig& cfg, Rng& rng) {
    cfg.validate();
    TransformerParams p;
    p.config = cfg;
    std::normal_distribution<double> normal(0.0, 1.0);
    auto gaussian = [&](int r, int c, double sd) {
      Matrix m(r, c);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = sd * normal(rng);
      return m;
    };
    const int c = cfg.dim;
    const int f = cfg.ff_dim;
    const double sd_c = 1.0 / std::sqrt(static_cast<double>(c));
    const double sd_f = 1.0 / std::sqrt(static_cast<double>(f));
    for (int l = 0; l < cfg.layers; ++l) {
      TransformerLayer L;
      L.ln1_gain = Matrix::Ones(1, c);
      L.ln1_bias = Matrix::Zero(1, c);
      L.wq = gaussian(c, c, sd_c);
      L.wk = gaussian(c, c, sd_c);
      L.wv = gaussian(c, c, sd_c);
      L.wo = gaussian(c, c, sd_c);
      L.bq = Matrix::Zero(1, c);
      L.bk = Matrix::Zero(1, c);
      L.bv = Matrix::Zero(1, c);
      L.bo = Matrix::Zero(1, c);
      L.ln2_gain = Matrix::Ones(1, c);
      L.ln2_bias = Matrix::Zero(1, c);
      L.w1 = gaussian(c, f, sd_c);
      L.b1 = Matrix::Zero(1, f);
      L.w2 = gaussian(f, c, sd_f);
      L.b2 = Matrix::Zero(1, c);
      p.layers.push_back(std::move(L));
    }
    return p;
  }

  template <class F>
  void for_each(F&& f) {
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string pre = "transformer." + std::to_string(l) + ".";
      TransformerLayer& L = layers[l];
      f(pre + "ln1_gain", L.ln1_gain);
      f(pre + "ln1_bias", L.ln1_bias);
      f(pre + "wq", L.wq);
      f(pre + "wk", L.wk);
      f(pre + "wv", L.wv);
      f(pre + "wo", L.wo);
      f(pre + "bq", L.bq);
      f(pre + "bk", L.bk);
      f(pre + "bv", L.bv);
      f(pre + "bo", L.bo);
      f(pre + "ln2_gain", L.ln2_gain);
      f(pre + "ln2_bias", L.ln2_bias);
      f(pre + "w1", L.w1);
      f(pre + "b1", L.b1);
      f(pre + "w2", L.w2);
      f(pre + "b2", L.b2);
    }
  }
};

struct TransformerLayerVars {
  ad::Var ln1_gain, ln1_bias, wq, wk, wv, wo, bq, bk, bv, bo, ln2_gain, ln2_bias, w1, b1, w2, b2;
};

struct TransformerVars {
  TransformerConfig config;
  std::vector<TransformerLayerVars> layers;
};

inline TransformerVars bind(const TransformerParams& p, ad::Tape* tape) {
  auto v = [tape](const Matrix& m) { return tape ? tape->leaf(m) : ad::constant(m); };
  TransformerVars out;
  out.config = p.config;
  for (const TransformerLayer& L : p.layers) {
    out.layers.push_back({v(L.ln1_gain), v(L.ln1_bias), v(L.wq), v(L.wk), v(L.wv), v(L.wo), v(L.bq), v(L.bk),
                          v(L.bv), v(L.bo), v(L.ln2_gain), v(L.ln2_bias), v(L.w1), v(L.b1), v(L.w2), v(L.b2)});
  }
  return out;
}

/// Standard sinusoidal table, rows = positions.
inline Matrix sinusoidal_encoding(int positions, int dim) {
  Matrix pe(positions, dim);
  for (int pos = 0; pos < positions; ++pos) {
    for (int i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      pe(pos, i) = (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
    }
  }
  return pe;
}

namespace detail {

inline ad::Var attention(const TransformerLayerVars& L, const ad::Var& h, int heads) {
  ad::Var q = ad::add_row(ad::matmul(h, L.wq), L.bq);
  ad::Var k = ad::add_row(ad::matmul(h, L.wk), L.bk);
  ad::Var v = ad::add_row(ad::matmul(h, L.wv), L.bv);
  const Eigen::Index width = h.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(width));
  std::vector<ad::Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int head = 0; head < heads; ++head) {
    ad::Var qh = ad::slice_cols(q, head * width, width);
    ad::Var kh = ad::slice_cols(k, head * width, width);
    ad::Var vh = ad::slice_cols(v, head * width, width);
    ad::Var weights = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt));
    outs.push_back(ad::matmul(weights, vh));
  }
  ad::Var merged = heads == 1 ? outs.front() : ad::hstack(outs);
  return ad::add_row(ad::matmul(merged, L.wo), L.bo);
}

}  // namespace detail

/// Pre-norm self-attention encoder over M tokens; M x C in, M x C out.
inline ad::Var temporal_transformer(const TransformerVars& tr, const ad::Var& seq) {
  if (seq.rows() < 1) throw Error(Errc::shape_mismatch, "transformer input has no tokens");
  if (seq.cols() != tr.config.dim) {
    throw Error(Errc::dimension_mismatch, "transformer expects width " + std::to_string(tr.config.dim) + ", got " +
                                              std::to_string(seq.cols()));
  }
  ad::Var x = seq;
  if (tr.config.positional == PositionalEncoding::sinusoidal) {
    x = ad::add_constant(x, sinusoidal_encoding(static_cast<int>(seq.rows()), tr.config.dim));
  }
  for (const TransformerLayerVars& L : tr.layers) {
    x = ad::add(x, detail::attention(L, ad::layer_norm(x, L.ln1_gain, L.ln1_bias), tr.config.heads));
    ad::Var h = ad::layer_norm(x, L.ln2_gain, L.ln2_bias);
    ad::Var ff = ad::add_row(ad::matmul(ad::gelu(ad::add_row(ad::matmul(h, L.w1), L.b1)), L.w2), L.b2);
    x = ad::add(x, ff);
  }
  return x;
}

inline Matrix temporal_transformer(const TransformerParams& params, const Matrix& seq) {
  return temporal_transformer(bind(params, nullptr), ad::constant(seq)).value();
}

/// Appends the text token after frame t, runs the Transformer, and keeps the
/// first t output rows.
inline ad::Var modulate_support(const TransformerVars& tr, const ad::Var& support, const RowVector& text) {
  if (text.size() != support.cols()) {
    throw Error(Errc::dimension_mismatch, "text width " + std::to_string(text.size()) + " vs feature width " +
                                              std::to_string(support.cols()));
  }
  const Eigen::Index t = support.rows();
  ad::Var stacked = ad::vstack({support, ad::constant(Matrix(text))});
  return ad::slice_rows(temporal_transformer(tr, stacked), 0, t);
}

inline Matrix modulate_support(const TransformerParams& params, const Matrix& support, const RowVector& text) {
  return modulate_support(bind(params, nullptr), ad::constant(support), text).value();
}

inline ad::Var transform_query(const TransformerVars& tr, const ad::Var& query) {
  return temporal_transformer(tr, query);
}

inline Matrix transform_query(const TransformerParams& params, const Matrix& query) {
  return transform_query(bind(params, nullptr), ad::constant(query)).value();
}

/// Elementwise mean of K same-shaped feature matrices, computed as
/// x0 + sum_k (x_k - x0) / K so that K identical inputs return x0 bit-exactly.
inline ad::Var average_support_shots(const std::vector<ad::Var>& shots) {
  if (shots.empty()) throw Error(Errc::shape_mismatch, "average_support_shots needs K >= 1");
  if (shots.size() == 1) return shots.front();
  const Matrix& first = shots.front().value();
  Matrix delta = Matrix::Zero(first.rows(), first.cols());
  for (const ad::Var& s : shots) {
    if (s.rows() != first.rows() || s.cols() != first.cols()) {
      throw Error(Errc::shape_mismatch, "support shots differ in shape");
    }
    delta += s.value() - first;
  }
  const double k = static_cast<double>(shots.size());
  Matrix value = first + delta / k;
  return ad::make_op_n(std::move(value), shots, [shots, k](const Matrix& g) {
    Matrix share = g / k;
    for (const ad::Var& s : shots) ad::accumulate(s, share);
  });
}

inline FrameFeatures average_support_shots(const std::vector<FrameFeatures>& shots) {
  std::vector<ad::Var> vars;
  vars.reserve(shots.size());
  for (const auto& s : shots) vars.push_back(ad::constant(s));
  return average_support_shots(vars).value();
}

}  // namespace fsar
