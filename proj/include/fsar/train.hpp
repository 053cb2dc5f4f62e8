#pragma once

// Episodic training: sample a base-split episode, take the joint loss, step
// Adam on every trainable tensor. The text encoder has no trainable state.
// Single-threaded and fully determined by the config (seed included).

#include "fsar/autodiff.hpp"
#include "fsar/config.hpp"
#include "fsar/data.hpp"
#include "fsar/model.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace fsar {

struct TrainTelemetry {
  int step = 0;
  double loss = 0.0;
  double video_text_loss = 0.0;
  double few_shot_loss = 0.0;
  double tau = 0.0;
};

using TelemetrySink = std::function<void(const TrainTelemetry&)>;

class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// `grads[i]` may be empty, meaning zero.
  void step(std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
    if (m_.empty()) {
      for (Matrix* p : params) {
        m_.push_back(Matrix::Zero(p->rows(), p->cols()));
        v_.push_back(Matrix::Zero(p->rows(), p->cols()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (grads[i].size() != 0) {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
      } else {
        m_[i] *= beta1_;
        v_[i] *= beta2_;
      }
      *params[i] -= (lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_)).matrix();
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<Matrix> m_, v_;
  long long t_ = 0;
};

/// Rounds every trainable tensor to the nearest float so that a checkpoint
/// file (32-bit storage) reproduces the in-memory model exactly.
inline void quantize_to_float(Model& model) {
  model.for_each_parameter([](const std::string&, Matrix& m) { m = m.cast<float>().cast<double>(); });
}

inline Dataset resolve_dataset(const RunConfig& cfg) {
  return cfg.data_path.empty() ? generate_synthetic(cfg.synthetic) : load_dataset(cfg.data_path);
}

inline Model train(const RunConfig& cfg, const Dataset& data, const TelemetrySink& sink = {}) {
  cfg.validate();
  if (static_cast<int>(data.classes().base_ids.size()) < cfg.way) {
    throw Error(Errc::insufficient_classes, "base split has " + std::to_string(data.classes().base_ids.size()) +
                                                " classes, training needs " + std::to_string(cfg.way));
  }
  Model model = Model::init(cfg, data.frame_dim());
  const TextEncoder text = make_text_encoder(model);
  const Matrix base_texts = base_text_matrix(data, text, PromptTemplate(cfg.prompt_template));

  Adam adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  std::vector<Matrix*> params;
  model.for_each_parameter([&](const std::string&, Matrix& m) { params.push_back(&m); });

  Rng rng = derive_rng(cfg.seed, 0x747261696e);  // "train"
  for (int step = 1; step <= cfg.train_episodes; ++step) {
    const Episode ep = sample_episode(data, Split::base, cfg.way, cfg.shot, cfg.queries_per_class, rng);
    const EpisodeFrames frames = gather_frames(data, ep, cfg.frames, SampleMode::train, &rng, cfg.augment_noise);

    ad::Tape tape;
    const BoundModel bound = bind(model, &tape);
    const EpisodeLoss loss = episode_loss(bound, cfg, data, ep, frames, text, base_texts);
    const double value = loss.total.scalar();
    if (!std::isfinite(value)) {
      throw Error(Errc::non_finite, "training loss became non-finite at step " + std::to_string(step));
    }
    tape.backward(loss.total);

    std::vector<Matrix> grads;
    grads.reserve(params.size());
    bound.for_each_var([&](const ad::Var& v) { grads.push_back(v.grad()); });
    adam.step(params, grads);
    model.log_tau(0, 0) = std::clamp(model.log_tau(0, 0), std::log(Temperature::kMin), std::log(Temperature::kMax));
    model.step = static_cast<std::uint64_t>(step);

    if (sink && cfg.log_every > 0 && (step % cfg.log_every == 0 || step == cfg.train_episodes)) {
      TrainTelemetry t;
      t.step = step;
      t.loss = value;
      t.video_text_loss = loss.video_text.node() ? loss.video_text.scalar() : 0.0;
      t.few_shot_loss = loss.few_shot.node() ? loss.few_shot.scalar() : 0.0;
      t.tau = model.tau();
      sink(t);
    }
  }
  quantize_to_float(model);
  return model;
}

inline Model train(const RunConfig& cfg, const TelemetrySink& sink = {}) {
  cfg.validate();
  return train(cfg, resolve_dataset(cfg), sink);
}

}  // namespace fsar
