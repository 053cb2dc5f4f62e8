#pragma once

// The full model and its episode-level forward pass.
//
//   frames --encode_video--> features --average shots--> prototype
//   prototype + class text --modulate_support--> modulated prototype
//   query features --transform_query--> transformed query
//   similarity(transformed query, modulated prototype) --softmax--> few-shot head
//   gap(features) vs class texts --softmax(cos / tau)--> video-text head

#include "fsar/autodiff.hpp"
#include "fsar/config.hpp"
#include "fsar/core.hpp"
#include "fsar/data.hpp"
#include "fsar/encoders.hpp"
#include "fsar/metrics.hpp"
#include "fsar/modulation.hpp"
#include "fsar/objectives.hpp"

#include <string>
#include <vector>

namespace fsar {

/// Trainable state plus the config that produced it. A checkpoint is exactly
/// this value.
struct Model {
  RunConfig config;
  VisualEncoderParams encoder;
  TransformerParams transformer;
  Matrix log_tau = Matrix::Constant(1, 1, std::log(0.07));
  std::uint64_t step = 0;

  static Model init(const RunConfig& cfg, int frame_dim) {
    cfg.validate();
    Model m;
    m.config = cfg;
    Rng rng = derive_rng(cfg.seed, 0x696e6974);  // "init"
    m.encoder = VisualEncoderParams::init(frame_dim, cfg.encoder_hidden, cfg.encoder_layers, cfg.embed_dim, rng);
    m.transformer = TransformerParams::init(cfg.transformer_config(), rng);
    m.log_tau(0, 0) = Temperature::from_tau(cfg.tau_init).log_tau;
    return m;
  }

  int frame_dim() const { return encoder.input_dim(); }
  double tau() const { return std::exp(log_tau(0, 0)); }

  /// Visits every trainable tensor in a fixed order. BoundModel::for_each_var
  /// mirrors this order.
  template <class F>
  void for_each_parameter(F&& f) {
    encoder.for_each(f);
    transformer.for_each(f);
    f(std::string("log_tau"), log_tau);
  }

  template <class F>
  void for_each_parameter(F&& f) const {
    const_cast<Model*>(this)->for_each_parameter([&](const std::string& name, Matrix& m) { f(name, std::as_const(m)); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_parameter([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }
};

inline TextEncoder make_text_encoder(const RunConfig& cfg, int frame_dim) {
  TextEncoderParams p;
  p.dim = cfg.embed_dim;
  p.raw_dim = frame_dim;
  p.table_seed = cfg.text_seed;
  p.semantic_seed = cfg.text_semantic_seed;
  p.informativeness = cfg.text_informativeness;
  p.normalize = cfg.text_normalize;
  return TextEncoder(p);
}

inline TextEncoder make_text_encoder(const Model& model) { return make_text_encoder(model.config, model.frame_dim()); }

struct BoundModel {
  VisualEncoderVars encoder;
  TransformerVars transformer;
  ad::Var log_tau;

  template <class F>
  void for_each_var(F&& f) const {
    for (std::size_t l = 0; l < encoder.weights.size(); ++l) {
      f(encoder.weights[l]);
      f(encoder.biases[l]);
    }
    for (const TransformerLayerVars& L : transformer.layers) {
      for (const ad::Var* v : {&L.ln1_gain, &L.ln1_bias, &L.wq, &L.wk, &L.wv, &L.wo, &L.bq, &L.bk, &L.bv, &L.bo,
                               &L.ln2_gain, &L.ln2_bias, &L.w1, &L.b1, &L.w2, &L.b2}) {
        f(*v);
      }
    }
    f(log_tau);
  }
};

inline BoundModel bind(const Model& m, ad::Tape* tape) {
  return {bind(m.encoder, tape), bind(m.transformer, tape), tape ? tape->leaf(m.log_tau) : ad::constant(m.log_tau)};
}

// ---------------------------------------------------------------------------
// Episode inputs

/// Sparse-sampled frames for every support and query video of an episode.
struct EpisodeFrames {
  std::vector<std::vector<Matrix>> support;  // [way][shot], each t x D_raw
  std::vector<Matrix> queries;
};

inline EpisodeFrames gather_frames(const Dataset& data, const Episode& ep, int t, SampleMode mode, Rng* rng = nullptr,
                                   double augment_sigma = 0.0) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto take = [&](std::size_t idx) {
    Matrix f = sparse_sample_frames(data.sample(idx), t, mode, rng);
    if (augment_sigma > 0.0 && rng != nullptr) {
      for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] += augment_sigma * normal(*rng);
    }
    return f;
  };
  EpisodeFrames out;
  out.support.resize(ep.support.size());
  for (std::size_t c = 0; c < ep.support.size(); ++c) {
    for (std::size_t idx : ep.support[c]) out.support[c].push_back(take(idx));
  }
  for (const Query& q : ep.queries) out.queries.push_back(take(q.sample));
  return out;
}

// ---------------------------------------------------------------------------
// Forward pass

/// Per-class text vectors for an episode, in local label order.
inline std::vector<RowVector> episode_texts(const Dataset& data, const Episode& ep, const TextEncoder& text,
                                            const PromptTemplate& tmpl) {
  std::vector<RowVector> out;
  out.reserve(ep.class_ids.size());
  for (auto id : ep.class_ids) out.push_back(text.encode(data.classes().name_of(id), tmpl));
  return out;
}

struct EpisodeForward {
  std::vector<std::vector<ad::Var>> support_features;  // encoder output per shot
  std::vector<ad::Var> query_features;
  std::vector<ad::Var> prototypes;        // modulated (or raw, if ablated) per class
  std::vector<ad::Var> query_embeddings;  // transformed (or raw) per query
  std::vector<ad::Var> scores;            // 1 x way similarity row per query
};

/// Runs the few-shot path: encode, average shots, modulate, score.
inline EpisodeForward forward_few_shot(const BoundModel& m, const RunConfig& cfg, const EpisodeFrames& frames,
                                       const std::vector<RowVector>& class_texts) {
  EpisodeForward out;
  const MetricConfig metric = cfg.metric_config();
  for (std::size_t c = 0; c < frames.support.size(); ++c) {
    std::vector<ad::Var> shots;
    for (const Matrix& f : frames.support[c]) shots.push_back(encode_video(m.encoder, ad::constant(f)));
    ad::Var proto = average_support_shots(shots);
    if (cfg.use_modulation) proto = modulate_support(m.transformer, proto, class_texts[c]);
    out.support_features.push_back(std::move(shots));
    out.prototypes.push_back(proto);
  }
  for (const Matrix& f : frames.queries) {
    ad::Var q = encode_video(m.encoder, ad::constant(f));
    out.query_features.push_back(q);
    ad::Var emb = cfg.use_modulation ? transform_query(m.transformer, q) : q;
    out.query_embeddings.push_back(emb);
    std::vector<ad::Var> row;
    row.reserve(out.prototypes.size());
    for (const ad::Var& p : out.prototypes) row.push_back(similarity(metric, emb, p));
    out.scores.push_back(ad::hstack(row));
  }
  return out;
}

struct EpisodeLoss {
  ad::Var total;
  ad::Var video_text;  // empty when the objective is ablated
  ad::Var few_shot;    // empty when alpha == 0
};

/// Joint loss on one training episode. The video-text term covers every
/// support and query video against all base classes; the few-shot term is the
/// cross-entropy of each query over the episode classes.
inline EpisodeLoss episode_loss(const BoundModel& m, const RunConfig& cfg, const Dataset& data, const Episode& ep,
                                const EpisodeFrames& frames, const TextEncoder& text, const Matrix& base_unit_texts) {
  const PromptTemplate tmpl(cfg.prompt_template);
  EpisodeLoss out;
  const bool need_few_shot = cfg.alpha != 0.0;

  std::vector<std::vector<ad::Var>> support_features;
  std::vector<ad::Var> query_features;
  EpisodeForward fwd;
  if (need_few_shot) {
    fwd = forward_few_shot(m, cfg, frames, episode_texts(data, ep, text, tmpl));
    support_features = fwd.support_features;
    query_features = fwd.query_features;
  } else {
    for (const auto& group : frames.support) {
      std::vector<ad::Var> shots;
      for (const Matrix& f : group) shots.push_back(encode_video(m.encoder, ad::constant(f)));
      support_features.push_back(std::move(shots));
    }
    for (const Matrix& f : frames.queries) query_features.push_back(encode_video(m.encoder, ad::constant(f)));
  }

  if (cfg.use_video_text) {
    std::vector<ad::Var> terms;
    auto add_term = [&](const ad::Var& feat, std::uint32_t class_id) {
      const int label = data.classes().base_index(class_id);
      if (label < 0) {
        throw Error(Errc::label_out_of_range, "class " + data.classes().name_of(class_id) + " is not a base class");
      }
      terms.push_back(ad::cross_entropy(video_text_logits(feat, base_unit_texts, m.log_tau), label, kProbabilityFloor));
    };
    for (std::size_t c = 0; c < support_features.size(); ++c) {
      for (const ad::Var& f : support_features[c]) add_term(f, ep.class_ids[c]);
    }
    for (std::size_t q = 0; q < query_features.size(); ++q) {
      add_term(query_features[q], ep.class_ids[static_cast<std::size_t>(ep.queries[q].label)]);
    }
    out.video_text = ad::mean(terms);
  }

  if (need_few_shot) {
    std::vector<ad::Var> terms;
    for (std::size_t q = 0; q < fwd.scores.size(); ++q) {
      terms.push_back(ad::cross_entropy(fwd.scores[q], ep.queries[q].label, kProbabilityFloor));
    }
    out.few_shot = ad::mean(terms);
  }

  if (out.video_text.node() && out.few_shot.node()) {
    out.total = joint_loss(out.video_text, out.few_shot, cfg.alpha);
  } else if (out.video_text.node()) {
    out.total = out.video_text;
  } else {
    out.total = ad::scale(out.few_shot, cfg.alpha);
  }
  return out;
}

/// Unit-norm text matrix over the base classes in base split order.
inline Matrix base_text_matrix(const Dataset& data, const TextEncoder& text, const PromptTemplate& tmpl) {
  std::vector<RowVector> rows;
  for (auto id : data.classes().base_ids) rows.push_back(text.encode(data.classes().name_of(id), tmpl));
  return normalized_text_matrix(rows);
}

// ---------------------------------------------------------------------------
// Prediction

enum class PredictMode { fewshot, ensemble, zeroshot };

inline const char* mode_name(PredictMode m) {
  switch (m) {
    case PredictMode::fewshot: return "fewshot";
    case PredictMode::ensemble: return "ensemble";
    case PredictMode::zeroshot: return "zeroshot";
  }
  return "fewshot";
}

inline PredictMode parse_mode(std::string_view s) {
  if (s == "fewshot") return PredictMode::fewshot;
  if (s == "ensemble") return PredictMode::ensemble;
  if (s == "zeroshot") return PredictMode::zeroshot;
  throw Error(Errc::usage, "unknown mode '" + std::string(s) + "'");
}

/// One distribution per query over the episode classes (in local label order).
/// zeroshot never touches support videos; ensemble mixes both heads with beta.
inline std::vector<ClassDistribution> predict_episode(const Model& model, const Dataset& data, const Episode& ep,
                                                      PredictMode mode, double beta, const TextEncoder& text) {
  const RunConfig& cfg = model.config;
  if (data.frame_dim() != model.frame_dim()) {
    throw Error(Errc::dimension_mismatch, "dataset frame dim " + std::to_string(data.frame_dim()) +
                                              " but model expects " + std::to_string(model.frame_dim()));
  }
  if (mode != PredictMode::fewshot && !cfg.use_video_text) {
    throw Error(Errc::mode_config_conflict,
                std::string(mode_name(mode)) + " mode needs a model trained with the video-text objective");
  }
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(Errc::invalid_config, "beta must lie in [0, 1]");

  const PromptTemplate tmpl(cfg.prompt_template);
  const std::vector<RowVector> texts = episode_texts(data, ep, text, tmpl);
  const BoundModel m = bind(model, nullptr);

  std::vector<ClassDistribution> out;
  out.reserve(ep.queries.size());

  if (mode == PredictMode::zeroshot) {
    // Query frames only; support videos define nothing but the class list.
    for (const Query& q : ep.queries) {
      const Matrix f = sparse_sample_frames(data.sample(q.sample), cfg.frames, SampleMode::eval);
      out.push_back(video_text_probs(encode_video(m.encoder, ad::constant(f)).value(), texts, model.tau(), ep.class_ids));
    }
    return out;
  }

  const EpisodeFrames frames = gather_frames(data, ep, cfg.frames, SampleMode::eval);
  const EpisodeForward fwd = forward_few_shot(m, cfg, frames, texts);
  for (std::size_t q = 0; q < fwd.scores.size(); ++q) {
    const RowVector s = fwd.scores[q].value().row(0);
    ClassDistribution p_fs = few_shot_probs(std::vector<double>(s.data(), s.data() + s.size()), ep.class_ids);
    if (mode == PredictMode::fewshot) {
      out.push_back(std::move(p_fs));
    } else {
      ClassDistribution p_vt = video_text_probs(fwd.query_features[q].value(), texts, model.tau(), ep.class_ids);
      out.push_back(ensemble_probs(p_vt, p_fs, beta));
    }
  }
  return out;
}

inline std::vector<ClassDistribution> predict_episode(const Model& model, const Dataset& data, const Episode& ep,
                                                      PredictMode mode) {
  return predict_episode(model, data, ep, mode, model.config.beta, make_text_encoder(model));
}

}  // namespace fsar
