#pragma once

// Run configuration and its text form.
//
// Files are UTF-8, one `key = value` per line; `#` starts a comment and blank
// lines are ignored. Unknown keys, duplicate keys, and unparsable values are
// hard errors. `seed` is mandatory. to_config_text() emits every key in a
// fixed order with round-trip-exact numbers, so the text doubles as the
// embedded form inside checkpoints and as the input to config_hash().

#include "fsar/core.hpp"
#include "fsar/data.hpp"
#include "fsar/metrics.hpp"
#include "fsar/modulation.hpp"
#include "fsar/objectives.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fsar {

struct RunConfig {
  // data
  std::string data_path;  ///< empty: generate from `synthetic`
  SyntheticSpec synthetic;

  // episodes
  int way = 5;
  int shot = 1;
  int queries_per_class = 2;
  int eval_queries_per_class = 1;
  int frames = 8;

  // encoders
  int embed_dim = 32;
  int encoder_hidden = 64;
  int encoder_layers = 1;
  double text_informativeness = 0.0;
  std::uint64_t text_seed = 11;
  std::uint64_t text_semantic_seed = 7;
  std::string prompt_template = "a photo of [CLS]";
  bool text_normalize = true;

  // modulation
  int transformer_layers = 1;
  int transformer_heads = 4;
  int transformer_ff_dim = 64;
  PositionalEncoding positional = PositionalEncoding::sinusoidal;

  // metric
  MetricKind metric = MetricKind::otam;
  double otam_lambda = 0.1;
  bool otam_bidirectional = true;
  bool otam_relax_boundary = true;

  // objectives
  double alpha = 1.0;
  double beta = 0.25;
  double tau_init = 0.07;

  // optimiser (Adam)
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // schedule
  int train_episodes = 2000;
  int eval_episodes = 10000;
  double augment_noise = 0.0;
  int log_every = 100;
  std::uint64_t seed = 0;
  bool use_video_text = true;
  bool use_modulation = true;

  TransformerConfig transformer_config() const {
    return {transformer_layers, transformer_heads, embed_dim, transformer_ff_dim, positional};
  }
  MetricConfig metric_config() const { return {metric, {otam_lambda, otam_bidirectional, otam_relax_boundary}}; }
  LossWeights loss_weights() const { return {alpha, beta}; }

  void validate() const {
    auto bad = [](const std::string& m) { throw Error(Errc::invalid_config, m); };
    if (data_path.empty()) {
      try {
        synthetic.validate();
      } catch (const Error& e) {
        bad(std::string("synthetic: ") + e.what());
      }
    }
    if (way < 2 || way > 1000) bad("way must lie in [2, 1000]");
    if (shot < 1 || shot > 1000) bad("shot must lie in [1, 1000]");
    if (queries_per_class < 1 || queries_per_class > 1000) bad("queries_per_class must lie in [1, 1000]");
    if (eval_queries_per_class < 1 || eval_queries_per_class > 1000) bad("eval_queries_per_class must lie in [1, 1000]");
    if (frames < 1 || frames > 4096) bad("frames must lie in [1, 4096]");
    if (embed_dim < 1 || encoder_hidden < 1 || encoder_layers < 0) bad("encoder dimensions must be positive");
    if (!(text_informativeness >= 0.0 && text_informativeness <= 1.0)) bad("text_informativeness must lie in [0, 1]");
    PromptTemplate check(prompt_template);
    transformer_config().validate();
    if (!(otam_lambda >= 0.0) || !std::isfinite(otam_lambda)) bad("otam_lambda must be >= 0");
    loss_weights().validate();
    if (!(tau_init >= Temperature::kMin && tau_init <= Temperature::kMax)) bad("tau_init must lie in [1e-3, 100]");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) bad("learning_rate must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) bad("adam_beta1 must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) bad("adam_beta2 must lie in [0, 1)");
    if (!(adam_eps > 0.0)) bad("adam_eps must be positive");
    if (train_episodes < 0) bad("train_episodes must be >= 0");
    if (eval_episodes < 1) bad("eval_episodes must be >= 1");
    if (!(augment_noise >= 0.0) || !std::isfinite(augment_noise)) bad("augment_noise must be >= 0");
    if (log_every < 0) bad("log_every must be >= 0");
    if (!use_video_text && alpha == 0.0) bad("alpha = 0 with the video-text objective off trains nothing");
  }
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw Error(Errc::invalid_config, "key '" + key + "': '" + v + "' is not a finite number");
  }
  return out;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw Error(Errc::invalid_config, "key '" + key + "': '" + v + "' is not an integer");
  }
  return out;
}

inline int parse_int32(const std::string& key, const std::string& v) {
  const long long x = parse_int(key, v);
  if (x < -2147483648LL || x > 2147483647LL) throw Error(Errc::invalid_config, "key '" + key + "': out of range");
  return static_cast<int>(x);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw Error(Errc::invalid_config, "key '" + key + "': '" + v + "' is not an unsigned integer");
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw Error(Errc::invalid_config, "key '" + key + "': '" + v + "' is not a boolean");
}

template <class T>
struct Field {
  std::string key;
  std::function<std::string(const T&)> get;
  std::function<void(T&, const std::string&)> set;
};

template <class T>
Field<T> int_field(std::string key, int T::*m) {
  return {key, [m](const T& c) { return std::to_string(c.*m); },
          [m, key](T& c, const std::string& v) { c.*m = parse_int32(key, v); }};
}
template <class T>
Field<T> u64_field(std::string key, std::uint64_t T::*m) {
  return {key, [m](const T& c) { return std::to_string(c.*m); },
          [m, key](T& c, const std::string& v) { c.*m = parse_u64(key, v); }};
}
template <class T>
Field<T> double_field(std::string key, double T::*m) {
  return {key, [m](const T& c) { return format_double(c.*m); },
          [m, key](T& c, const std::string& v) { c.*m = parse_double(key, v); }};
}
template <class T>
Field<T> bool_field(std::string key, bool T::*m) {
  return {key, [m](const T& c) { return std::string(c.*m ? "true" : "false"); },
          [m, key](T& c, const std::string& v) { c.*m = parse_bool(key, v); }};
}
template <class T>
Field<T> string_field(std::string key, std::string T::*m) {
  return {key, [m](const T& c) { return c.*m; }, [m](T& c, const std::string& v) { c.*m = v; }};
}

inline std::vector<Field<SyntheticSpec>> synthetic_fields() {
  using S = SyntheticSpec;
  return {
      int_field<S>("num_classes", &S::num_classes),
      int_field<S>("samples_per_class", &S::samples_per_class),
      int_field<S>("frame_dim", &S::frame_dim),
      int_field<S>("frames_min", &S::frames_min),
      int_field<S>("frames_max", &S::frames_max),
      double_field<S>("signal_strength", &S::class_signal_strength),
      double_field<S>("noise_sigma", &S::visual_noise_sigma),
      {"temporal_pattern", [](const S& s) { return std::string(pattern_name(s.temporal_pattern)); },
       [](S& s, const std::string& v) { s.temporal_pattern = parse_pattern(v); }},
      double_field<S>("base_fraction", &S::base_fraction),
      u64_field<S>("semantic_seed", &S::semantic_seed),
      u64_field<S>("seed", &S::seed),
  };
}

inline std::vector<Field<RunConfig>> run_fields() {
  using R = RunConfig;
  std::vector<Field<R>> f = {
      string_field<R>("data", &R::data_path),
      int_field<R>("way", &R::way),
      int_field<R>("shot", &R::shot),
      int_field<R>("queries_per_class", &R::queries_per_class),
      int_field<R>("eval_queries_per_class", &R::eval_queries_per_class),
      int_field<R>("frames", &R::frames),
      int_field<R>("embed_dim", &R::embed_dim),
      int_field<R>("encoder_hidden", &R::encoder_hidden),
      int_field<R>("encoder_layers", &R::encoder_layers),
      double_field<R>("text_informativeness", &R::text_informativeness),
      u64_field<R>("text_seed", &R::text_seed),
      u64_field<R>("text_semantic_seed", &R::text_semantic_seed),
      string_field<R>("prompt_template", &R::prompt_template),
      bool_field<R>("text_normalize", &R::text_normalize),
      int_field<R>("transformer_layers", &R::transformer_layers),
      int_field<R>("transformer_heads", &R::transformer_heads),
      int_field<R>("transformer_ff_dim", &R::transformer_ff_dim),
      {"positional", [](const R& c) { return std::string(positional_name(c.positional)); },
       [](R& c, const std::string& v) { c.positional = parse_positional(v); }},
      {"metric", [](const R& c) { return std::string(metric_name(c.metric)); },
       [](R& c, const std::string& v) { c.metric = parse_metric(v); }},
      double_field<R>("otam_lambda", &R::otam_lambda),
      bool_field<R>("otam_bidirectional", &R::otam_bidirectional),
      bool_field<R>("otam_relax_boundary", &R::otam_relax_boundary),
      double_field<R>("alpha", &R::alpha),
      double_field<R>("beta", &R::beta),
      double_field<R>("tau_init", &R::tau_init),
      double_field<R>("learning_rate", &R::learning_rate),
      double_field<R>("adam_beta1", &R::adam_beta1),
      double_field<R>("adam_beta2", &R::adam_beta2),
      double_field<R>("adam_eps", &R::adam_eps),
      int_field<R>("train_episodes", &R::train_episodes),
      int_field<R>("eval_episodes", &R::eval_episodes),
      double_field<R>("augment_noise", &R::augment_noise),
      int_field<R>("log_every", &R::log_every),
      u64_field<R>("seed", &R::seed),
      bool_field<R>("use_video_text", &R::use_video_text),
      bool_field<R>("use_modulation", &R::use_modulation),
  };
  for (auto& s : synthetic_fields()) {
    const std::string key = "synthetic." + s.key;
    auto get = s.get;
    auto set = s.set;
    f.push_back({key, [get](const R& c) { return get(c.synthetic); },
                 [set](R& c, const std::string& v) { set(c.synthetic, v); }});
  }
  return f;
}

/// Splits text into (line number, key, value) triples.
struct Entry {
  int line;
  std::string key;
  std::string value;
};

inline std::vector<Entry> parse_entries(std::string_view text) {
  std::vector<Entry> out;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    // Comments run from '#' to end of line. Prompt templates cannot contain '#'.
    const auto hash = raw.find('#');
    std::string line = trim(hash == std::string::npos ? std::string_view(raw) : std::string_view(raw).substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(Errc::invalid_config, "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    out.push_back({line_no, trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1))});
  }
  return out;
}

template <class T>
void apply(T& target, const std::vector<Field<T>>& fields, const std::vector<Entry>& entries,
           std::set<std::string>* seen_out = nullptr) {
  std::set<std::string> seen;
  for (const Entry& e : entries) {
    const Field<T>* field = nullptr;
    for (const auto& f : fields) {
      if (f.key == e.key) field = &f;
    }
    if (field == nullptr) {
      throw Error(Errc::invalid_config, "line " + std::to_string(e.line) + ": unknown key '" + e.key + "'");
    }
    if (!seen.insert(e.key).second) {
      throw Error(Errc::invalid_config, "line " + std::to_string(e.line) + ": duplicate key '" + e.key + "'");
    }
    field->set(target, e.value);
  }
  if (seen_out) *seen_out = std::move(seen);
}

}  // namespace config_detail

inline RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::set<std::string> seen;
  config_detail::apply(cfg, config_detail::run_fields(), config_detail::parse_entries(text), &seen);
  if (!seen.count("seed")) throw Error(Errc::invalid_config, "missing mandatory key 'seed'");
  cfg.validate();
  return cfg;
}

inline RunConfig load_config(const std::string& path) { return parse_config(io::read_file(path)); }

inline std::string to_config_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : config_detail::run_fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

inline std::uint64_t config_hash(const RunConfig& cfg) { return fnv1a(to_config_text(cfg)); }

inline bool operator==(const RunConfig& a, const RunConfig& b) { return to_config_text(a) == to_config_text(b); }

/// Synthetic-spec files use the same syntax with unprefixed keys
/// (num_classes, noise_sigma, ...). Every key is optional.
inline SyntheticSpec parse_synthetic_spec(std::string_view text) {
  SyntheticSpec spec;
  config_detail::apply(spec, config_detail::synthetic_fields(), config_detail::parse_entries(text));
  spec.validate();
  return spec;
}

inline std::string to_spec_text(const SyntheticSpec& spec) {
  std::string out;
  for (const auto& f : config_detail::synthetic_fields()) out += f.key + " = " + f.get(spec) + "\n";
  return out;
}

}  // namespace fsar
