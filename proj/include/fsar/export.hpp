#pragma once

// Per-video feature dump for external visualisation (t-SNE and the like).
//
// CSV, one row per (video, kind, frame):
//   video_id,class_id,split,kind,frame,f0,...,f{C-1}
// kind is one of
//   raw                encode_video output
//   support_modulated  modulate_support with the video's own class text
//   query_transformed  transform_query output
// Values are printed with 17 significant digits, enough to round-trip doubles.

#include "fsar/data.hpp"
#include "fsar/model.hpp"

#include <iomanip>
#include <limits>
#include <ostream>

namespace fsar {

inline void export_features(const Model& model, const Dataset& data, std::ostream& out) {
  if (data.frame_dim() != model.frame_dim()) {
    throw Error(Errc::dimension_mismatch, "dataset frame dim does not match the model");
  }
  const RunConfig& cfg = model.config;
  const TextEncoder text = make_text_encoder(model);
  const PromptTemplate tmpl(cfg.prompt_template);
  const BoundModel m = bind(model, nullptr);

  out << "video_id,class_id,split,kind,frame";
  for (int c = 0; c < cfg.embed_dim; ++c) out << ",f" << c;
  out << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);

  auto emit = [&](const VideoSample& s, const char* split, const char* kind, const Matrix& feats) {
    for (Eigen::Index k = 0; k < feats.rows(); ++k) {
      out << s.video_id << ',' << s.class_id << ',' << split << ',' << kind << ',' << k;
      for (Eigen::Index c = 0; c < feats.cols(); ++c) out << ',' << feats(k, c);
      out << '\n';
    }
  };

  for (const VideoSample& s : data.samples()) {
    const char* split = data.classes().in_split(s.class_id, Split::base) ? "base" : "novel";
    const Matrix frames = sparse_sample_frames(s, cfg.frames, SampleMode::eval);
    const ad::Var raw = encode_video(m.encoder, ad::constant(frames));
    const RowVector w = text.encode(data.classes().name_of(s.class_id), tmpl);
    emit(s, split, "raw", raw.value());
    emit(s, split, "support_modulated", modulate_support(m.transformer, raw, w).value());
    emit(s, split, "query_transformed", transform_query(m.transformer, raw).value());
  }
  if (!out) throw Error(Errc::io_failure, "failed writing feature export");
}

}  // namespace fsar
