#pragma once

// Datasets of labeled frame sequences, base/novel class splits, episodic
// N-way K-shot sampling, TSN-style sparse frame sampling, a seeded synthetic
// generator, and the FSARDS1 dataset container.

#include "fsar/core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fsar {

using FrameMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct VideoSample {
  std::uint32_t video_id = 0;
  std::uint32_t class_id = 0;
  /// L x D_raw, one raw frame per row.
  FrameMatrix frames;

  int length() const { return static_cast<int>(frames.rows()); }
  int frame_dim() const { return static_cast<int>(frames.cols()); }
};

enum class Split { base, novel };

inline const char* split_name(Split s) { return s == Split::base ? "base" : "novel"; }

struct ClassEntry {
  std::uint32_t id = 0;
  std::string name;
};

struct ClassTable {
  std::vector<ClassEntry> entries;
  std::vector<std::uint32_t> base_ids;
  std::vector<std::uint32_t> novel_ids;

  const ClassEntry* find(std::uint32_t id) const {
    for (const auto& e : entries) {
      if (e.id == id) return &e;
    }
    return nullptr;
  }

  const std::string& name_of(std::uint32_t id) const {
    const ClassEntry* e = find(id);
    if (e == nullptr) throw Error(Errc::label_out_of_range, "unknown class id " + std::to_string(id));
    return e->name;
  }

  const std::vector<std::uint32_t>& ids(Split s) const { return s == Split::base ? base_ids : novel_ids; }

  bool in_split(std::uint32_t id, Split s) const {
    const auto& v = ids(s);
    return std::find(v.begin(), v.end(), id) != v.end();
  }

  /// Position of `id` within the base split; the B-way label used by the
  /// video-text objective during training.
  int base_index(std::uint32_t id) const {
    auto it = std::find(base_ids.begin(), base_ids.end(), id);
    if (it == base_ids.end()) return -1;
    return static_cast<int>(it - base_ids.begin());
  }

  void validate() const {
    for (auto id : base_ids) {
      if (std::find(novel_ids.begin(), novel_ids.end(), id) != novel_ids.end()) {
        throw Error(Errc::invalid_spec, "class " + std::to_string(id) + " is in both base and novel splits");
      }
      if (find(id) == nullptr) throw Error(Errc::invalid_spec, "split names unknown class " + std::to_string(id));
    }
    for (auto id : novel_ids) {
      if (find(id) == nullptr) throw Error(Errc::invalid_spec, "split names unknown class " + std::to_string(id));
    }
  }

  friend bool operator==(const ClassTable& a, const ClassTable& b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
      if (a.entries[i].id != b.entries[i].id || a.entries[i].name != b.entries[i].name) return false;
    }
    return a.base_ids == b.base_ids && a.novel_ids == b.novel_ids;
  }
};

/// Immutable after construction; safe to share between readers.
class Dataset {
 public:
  Dataset() = default;

  Dataset(int frame_dim, ClassTable classes, std::vector<VideoSample> samples)
      : frame_dim_(frame_dim), classes_(std::move(classes)), samples_(std::move(samples)) {
    classes_.validate();
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      const VideoSample& s = samples_[i];
      if (s.frame_dim() != frame_dim_) {
        throw Error(Errc::dimension_mismatch, "video " + std::to_string(s.video_id) + " has frame dim " +
                                                  std::to_string(s.frame_dim()) + ", dataset uses " +
                                                  std::to_string(frame_dim_));
      }
      if (s.length() < 1) throw Error(Errc::invalid_spec, "video " + std::to_string(s.video_id) + " has no frames");
      if (!s.frames.allFinite()) throw Error(Errc::non_finite, "video " + std::to_string(s.video_id));
      if (!classes_.in_split(s.class_id, Split::base) && !classes_.in_split(s.class_id, Split::novel)) {
        throw Error(Errc::invalid_spec, "video " + std::to_string(s.video_id) + " has class " +
                                            std::to_string(s.class_id) + " outside both splits");
      }
      by_class_[s.class_id].push_back(i);
    }
  }

  int frame_dim() const { return frame_dim_; }
  const ClassTable& classes() const { return classes_; }
  const std::vector<VideoSample>& samples() const { return samples_; }
  const VideoSample& sample(std::size_t i) const { return samples_.at(i); }

  const std::vector<std::size_t>& samples_of(std::uint32_t class_id) const {
    static const std::vector<std::size_t> kEmpty;
    auto it = by_class_.find(class_id);
    return it == by_class_.end() ? kEmpty : it->second;
  }

  friend bool operator==(const Dataset& a, const Dataset& b) {
    if (a.frame_dim_ != b.frame_dim_ || !(a.classes_ == b.classes_) || a.samples_.size() != b.samples_.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.samples_.size(); ++i) {
      const auto& x = a.samples_[i];
      const auto& y = b.samples_[i];
      if (x.video_id != y.video_id || x.class_id != y.class_id || x.frames.rows() != y.frames.rows() ||
          x.frames.cols() != y.frames.cols()) {
        return false;
      }
      if (std::memcmp(x.frames.data(), y.frames.data(), sizeof(float) * x.frames.size()) != 0) return false;
    }
    return true;
  }

 private:
  int frame_dim_ = 0;
  ClassTable classes_;
  std::vector<VideoSample> samples_;
  std::map<std::uint32_t, std::vector<std::size_t>> by_class_;
};

// ---------------------------------------------------------------------------
// Episodes

struct Query {
  std::size_t sample = 0;  ///< index into Dataset::samples()
  int label = 0;           ///< local label in [0, way)
};

/// One N-way K-shot task. Group order defines local labels.
struct Episode {
  int way = 0;
  int shot = 0;
  std::vector<std::vector<std::size_t>> support;
  std::vector<Query> queries;
  std::vector<std::uint32_t> class_ids;

  void validate(const Dataset& data) const {
    if (static_cast<int>(support.size()) != way || static_cast<int>(class_ids.size()) != way) {
      throw Error(Errc::shape_mismatch, "episode must hold exactly `way` support groups");
    }
    for (int i = 0; i < way; ++i) {
      if (static_cast<int>(support[i].size()) != shot) {
        throw Error(Errc::shape_mismatch, "support group " + std::to_string(i) + " does not hold `shot` samples");
      }
      for (auto idx : support[i]) {
        if (data.sample(idx).class_id != class_ids[i]) {
          throw Error(Errc::class_set_mismatch, "support group " + std::to_string(i) + " mixes classes");
        }
      }
      for (int j = 0; j < i; ++j) {
        if (class_ids[i] == class_ids[j]) throw Error(Errc::class_set_mismatch, "episode repeats a class");
      }
    }
    for (const Query& q : queries) {
      if (q.label < 0 || q.label >= way) throw Error(Errc::label_out_of_range, "query label outside episode");
      if (data.sample(q.sample).class_id != class_ids[q.label]) {
        throw Error(Errc::class_set_mismatch, "query label does not match its class");
      }
    }
  }

  friend bool operator==(const Episode& a, const Episode& b) {
    if (a.way != b.way || a.shot != b.shot || a.support != b.support || a.class_ids != b.class_ids ||
        a.queries.size() != b.queries.size()) {
      return false;
    }
    for (std::size_t i = 0; i < a.queries.size(); ++i) {
      if (a.queries[i].sample != b.queries[i].sample || a.queries[i].label != b.queries[i].label) return false;
    }
    return true;
  }
};

/// Draws N classes from `split`, then K support and `queries_per_class`
/// disjoint query samples per class. All randomness comes from `rng`.
inline Episode sample_episode(const Dataset& data, Split split, int way, int shot, int queries_per_class, Rng& rng) {
  if (way < 1 || shot < 1 || queries_per_class < 0) {
    throw Error(Errc::invalid_config, "episode needs way >= 1, shot >= 1, queries >= 0");
  }
  std::vector<std::uint32_t> pool = data.classes().ids(split);
  if (static_cast<int>(pool.size()) < way) {
    throw Error(Errc::insufficient_classes, std::string(split_name(split)) + " split has " +
                                                std::to_string(pool.size()) + " classes, need " +
                                                std::to_string(way));
  }
  // Partial Fisher-Yates: the first `way` entries become the episode classes.
  for (int i = 0; i < way; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
  }

  Episode ep;
  ep.way = way;
  ep.shot = shot;
  ep.class_ids.assign(pool.begin(), pool.begin() + way);
  ep.support.resize(static_cast<std::size_t>(way));
  const std::size_t need = static_cast<std::size_t>(shot + queries_per_class);
  for (int c = 0; c < way; ++c) {
    std::vector<std::size_t> members = data.samples_of(ep.class_ids[c]);
    if (members.size() < need) {
      throw Error(Errc::insufficient_samples, "class " + data.classes().name_of(ep.class_ids[c]) + " in " +
                                                  split_name(split) + " split has " + std::to_string(members.size()) +
                                                  " samples, need " + std::to_string(need));
    }
    for (std::size_t i = 0; i < need; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, members.size() - 1);
      std::swap(members[i], members[pick(rng)]);
    }
    ep.support[c].assign(members.begin(), members.begin() + shot);
    for (std::size_t i = static_cast<std::size_t>(shot); i < need; ++i) ep.queries.push_back({members[i], c});
  }
  return ep;
}

// ---------------------------------------------------------------------------
// Sparse frame sampling

enum class SampleMode { train, eval };

/// Splits [0, L) into t equal segments and picks one index per segment:
/// the segment centre floor((k + 0.5) L / t) in eval mode, a uniform draw in
/// train mode. Segments shorter than one frame (L < t) fall back to the centre,
/// so indices repeat instead of padding.
inline std::vector<int> sparse_sample_indices(int length, int t, SampleMode mode, Rng* rng = nullptr) {
  if (t < 1) throw Error(Errc::invalid_config, "frame count t must be >= 1");
  if (length < 1) throw Error(Errc::invalid_spec, "video has no frames");
  std::vector<int> idx(static_cast<std::size_t>(t));
  const long long L = length;
  const long long T = t;
  for (long long k = 0; k < T; ++k) {
    const long long centre = ((2 * k + 1) * L) / (2 * T);
    long long chosen = centre;
    if (mode == SampleMode::train) {
      if (rng == nullptr) throw Error(Errc::invalid_config, "train-mode sampling needs an rng");
      const long long begin = (k * L) / T;
      const long long end = ((k + 1) * L) / T;
      if (end > begin) {
        std::uniform_int_distribution<long long> pick(begin, end - 1);
        chosen = pick(*rng);
      }
    }
    idx[static_cast<std::size_t>(k)] = static_cast<int>(chosen);
  }
  return idx;
}

/// t x D_raw frames in double precision, selected by sparse_sample_indices.
inline Matrix sparse_sample_frames(const VideoSample& sample, int t, SampleMode mode, Rng* rng = nullptr) {
  const auto idx = sparse_sample_indices(sample.length(), t, mode, rng);
  Matrix out(t, sample.frame_dim());
  for (int k = 0; k < t; ++k) out.row(k) = sample.frames.row(idx[static_cast<std::size_t>(k)]).cast<double>();
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

enum class TemporalPattern { static_, drifting, permuted_motif };

inline const char* pattern_name(TemporalPattern p) {
  switch (p) {
    case TemporalPattern::static_: return "static";
    case TemporalPattern::drifting: return "drifting";
    case TemporalPattern::permuted_motif: return "permuted-motif";
  }
  return "static";
}

inline TemporalPattern parse_pattern(std::string_view s) {
  if (s == "static") return TemporalPattern::static_;
  if (s == "drifting") return TemporalPattern::drifting;
  if (s == "permuted-motif") return TemporalPattern::permuted_motif;
  throw Error(Errc::invalid_config, "unknown temporal pattern '" + std::string(s) + "'");
}

struct SyntheticSpec {
  int num_classes = 30;
  int samples_per_class = 20;
  int frame_dim = 32;
  int frames_min = 8;
  int frames_max = 16;
  double class_signal_strength = 1.0;
  double visual_noise_sigma = 0.2;
  TemporalPattern temporal_pattern = TemporalPattern::static_;
  /// Fraction of classes assigned to the base split, rounded to a count.
  double base_fraction = 64.0 / 88.0;
  /// Seeds the name -> latent class vector map shared with the text encoder.
  std::uint64_t semantic_seed = 7;
  std::uint64_t seed = 1;

  int base_count() const { return static_cast<int>(std::lround(base_fraction * num_classes)); }

  void validate() const {
    auto bad = [](const std::string& m) { throw Error(Errc::invalid_spec, m); };
    if (num_classes < 2) bad("num_classes must be >= 2");
    if (samples_per_class < 1) bad("samples_per_class must be >= 1");
    if (frame_dim < 1) bad("frame_dim must be >= 1");
    if (frames_min < 1) bad("frames_min must be >= 1");
    if (frames_max < frames_min) bad("frames_max must be >= frames_min");
    if (!(class_signal_strength >= 0.0) || !std::isfinite(class_signal_strength)) bad("signal strength must be >= 0");
    if (!(visual_noise_sigma >= 0.0) || !std::isfinite(visual_noise_sigma)) bad("noise sigma must be >= 0");
    if (!(base_fraction > 0.0 && base_fraction < 1.0)) bad("base_fraction must lie in (0, 1)");
    const int nb = base_count();
    if (nb < 1 || nb >= num_classes) bad("base_fraction leaves an empty split");
  }
};

inline std::string synthetic_class_name(int i) {
  std::ostringstream os;
  os << "class_" << std::setw(3) << std::setfill('0') << i;
  return os.str();
}

/// Standard-normal vector determined by (semantic_seed, key).
inline Eigen::VectorXd latent_vector(std::uint64_t semantic_seed, std::string_view key, int dim) {
  Rng rng(splitmix64(fnv1a(key) ^ splitmix64(semantic_seed)));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = normal(rng);
  return v;
}

inline Eigen::VectorXd latent_class_vector(std::uint64_t semantic_seed, std::string_view class_name, int dim) {
  return latent_vector(semantic_seed, class_name, dim);
}

namespace detail {

constexpr int kMotifCount = 4;

inline std::vector<int> motif_order(std::uint64_t semantic_seed, const std::string& name) {
  std::vector<int> order(kMotifCount);
  for (int i = 0; i < kMotifCount; ++i) order[i] = i;
  Rng rng(splitmix64(fnv1a(name + "#order") ^ semantic_seed));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace detail

/// Noise-free content of frame k of an L-frame video of class `name`.
inline Eigen::VectorXd synthetic_frame_signal(const SyntheticSpec& spec, const std::string& name, int k, int length) {
  const int d = spec.frame_dim;
  const Eigen::VectorXd z = latent_class_vector(spec.semantic_seed, name, d);
  switch (spec.temporal_pattern) {
    case TemporalPattern::static_:
      return spec.class_signal_strength * z;
    case TemporalPattern::drifting: {
      const Eigen::VectorXd z2 = latent_vector(spec.semantic_seed, name + "#drift", d);
      const double theta = length > 1 ? (std::numbers::pi / 2.0) * k / (length - 1) : 0.0;
      return spec.class_signal_strength * (std::cos(theta) * z + std::sin(theta) * z2);
    }
    case TemporalPattern::permuted_motif: {
      const auto order = detail::motif_order(spec.semantic_seed, name);
      const int seg = (k * detail::kMotifCount) / length;
      const Eigen::VectorXd motif =
          latent_vector(spec.semantic_seed, "motif_" + std::to_string(order[static_cast<std::size_t>(seg)]), d);
      return spec.class_signal_strength * (0.5 * z + motif);
    }
  }
  return z;
}

inline Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  ClassTable table;
  for (int c = 0; c < spec.num_classes; ++c) {
    table.entries.push_back({static_cast<std::uint32_t>(c), synthetic_class_name(c)});
  }
  std::vector<std::uint32_t> order(static_cast<std::size_t>(spec.num_classes));
  for (int c = 0; c < spec.num_classes; ++c) order[static_cast<std::size_t>(c)] = static_cast<std::uint32_t>(c);
  std::shuffle(order.begin(), order.end(), rng);
  const int nb = spec.base_count();
  table.base_ids.assign(order.begin(), order.begin() + nb);
  table.novel_ids.assign(order.begin() + nb, order.end());
  std::sort(table.base_ids.begin(), table.base_ids.end());
  std::sort(table.novel_ids.begin(), table.novel_ids.end());

  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_int_distribution<int> length_dist(spec.frames_min, spec.frames_max);
  std::vector<VideoSample> samples;
  samples.reserve(static_cast<std::size_t>(spec.num_classes) * spec.samples_per_class);
  std::uint32_t next_id = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    const std::string& name = table.entries[static_cast<std::size_t>(c)].name;
    for (int s = 0; s < spec.samples_per_class; ++s) {
      VideoSample v;
      v.video_id = next_id++;
      v.class_id = static_cast<std::uint32_t>(c);
      const int length = length_dist(rng);
      v.frames.resize(length, spec.frame_dim);
      for (int k = 0; k < length; ++k) {
        const Eigen::VectorXd signal = synthetic_frame_signal(spec, name, k, length);
        for (int j = 0; j < spec.frame_dim; ++j) {
          const double n = spec.visual_noise_sigma > 0.0 ? spec.visual_noise_sigma * noise(rng) : 0.0;
          v.frames(k, j) = static_cast<float>(signal(j) + n);
        }
      }
      samples.push_back(std::move(v));
    }
  }
  return Dataset(spec.frame_dim, std::move(table), std::move(samples));
}

// ---------------------------------------------------------------------------
// FSARDS1 container
//
//   FSARDS1\n
//   frame_dim <D>\n
//   classes <n>\n
//   <id> <base|novel> <name>\n        (n lines, name runs to end of line)
//   records <R>\n
//   data\n
//   R records of little-endian 32-bit words:
//     u32 video_id, u32 class_id, u32 L, then L*D float32 (row-major frames)
//
// Trailing bytes after the last record are an error.

namespace io {

inline void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.append(b, 4);
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline void put_u64(std::string& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

/// Bounds-checked little-endian reader over an in-memory buffer.
class Reader {
 public:
  Reader(const std::string& buf, std::size_t pos, std::string what) : buf_(buf), pos_(pos), what_(std::move(what)) {}

  std::uint32_t u32(const std::string& field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64(const std::string& field) {
    const std::uint64_t lo = u32(field);
    const std::uint64_t hi = u32(field);
    return lo | (hi << 32);
  }
  float f32(const std::string& field) { return std::bit_cast<float>(u32(field)); }

  std::string bytes(std::size_t n, const std::string& field) {
    need(n, field);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  bool at_end() const { return pos_ == buf_.size(); }

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(Errc::malformed_file, what_ + " at byte " + std::to_string(pos_) + ": " + msg);
  }

 private:
  void need(std::size_t n, const std::string& field) const {
    if (buf_.size() - pos_ < n) fail("truncated while reading " + field);
  }

  const std::string& buf_;
  std::size_t pos_;
  std::string what_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_failure, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(Errc::io_failure, "read failed on '" + path + "'");
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_failure, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw Error(Errc::io_failure, "write failed on '" + path + "'");
}

}  // namespace io

inline constexpr const char* kDatasetMagic = "FSARDS1";

inline std::string serialize_dataset(const Dataset& data) {
  std::ostringstream head;
  head << kDatasetMagic << '\n';
  head << "frame_dim " << data.frame_dim() << '\n';
  head << "classes " << data.classes().entries.size() << '\n';
  for (const auto& e : data.classes().entries) {
    const char* split = data.classes().in_split(e.id, Split::base) ? "base" : "novel";
    head << e.id << ' ' << split << ' ' << e.name << '\n';
  }
  head << "records " << data.samples().size() << '\n';
  head << "data\n";
  std::string out = head.str();
  for (const auto& s : data.samples()) {
    io::put_u32(out, s.video_id);
    io::put_u32(out, s.class_id);
    io::put_u32(out, static_cast<std::uint32_t>(s.length()));
    for (Eigen::Index i = 0; i < s.frames.size(); ++i) io::put_f32(out, s.frames.data()[i]);
  }
  return out;
}

inline Dataset deserialize_dataset(const std::string& buf) {
  std::size_t pos = 0;
  int line_no = 0;
  auto next_line = [&]() -> std::string {
    ++line_no;
    const std::size_t nl = buf.find('\n', pos);
    if (nl == std::string::npos) {
      throw Error(Errc::malformed_file, "dataset header truncated at line " + std::to_string(line_no));
    }
    std::string line = buf.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  auto bad_header = [&](const std::string& msg) -> Error {
    return Error(Errc::malformed_file, "dataset header line " + std::to_string(line_no) + ": " + msg);
  };

  if (next_line() != kDatasetMagic) throw bad_header("missing FSARDS1 magic");

  auto keyed_count = [&](const std::string& key) -> long long {
    std::istringstream ls(next_line());
    std::string k;
    long long v = -1;
    if (!(ls >> k >> v) || k != key || v < 0) throw bad_header("expected '" + key + " <count>'");
    return v;
  };

  const long long frame_dim = keyed_count("frame_dim");
  if (frame_dim < 1) throw bad_header("frame_dim must be positive");
  const long long n_classes = keyed_count("classes");

  ClassTable table;
  for (long long c = 0; c < n_classes; ++c) {
    const std::string line = next_line();
    std::istringstream ls(line);
    long long id = -1;
    std::string split;
    if (!(ls >> id >> split) || id < 0 || (split != "base" && split != "novel")) {
      throw bad_header("expected '<id> <base|novel> <name>'");
    }
    std::string name;
    std::getline(ls >> std::ws, name);
    if (name.empty()) throw bad_header("class without a name");
    const auto uid = static_cast<std::uint32_t>(id);
    table.entries.push_back({uid, name});
    (split == "base" ? table.base_ids : table.novel_ids).push_back(uid);
  }
  const long long n_records = keyed_count("records");
  if (next_line() != "data") throw bad_header("expected 'data'");

  io::Reader rd(buf, pos, "dataset body");
  std::vector<VideoSample> samples;
  samples.reserve(static_cast<std::size_t>(n_records));
  for (long long r = 0; r < n_records; ++r) {
    const std::string rec = "record " + std::to_string(r);
    VideoSample v;
    v.video_id = rd.u32(rec + " video_id");
    v.class_id = rd.u32(rec + " class_id");
    const std::uint32_t length = rd.u32(rec + " length");
    if (length == 0) rd.fail(rec + " has zero frames");
    const std::size_t count = static_cast<std::size_t>(length) * static_cast<std::size_t>(frame_dim);
    if ((buf.size() - rd.pos()) / 4 < count) rd.fail("truncated in " + rec + " frames");
    v.frames.resize(length, frame_dim);
    for (std::size_t i = 0; i < count; ++i) v.frames.data()[i] = rd.f32(rec + " frames");
    samples.push_back(std::move(v));
  }
  if (!rd.at_end()) rd.fail("unexpected trailing bytes after " + std::to_string(n_records) + " records");

  try {
    return Dataset(static_cast<int>(frame_dim), std::move(table), std::move(samples));
  } catch (const Error& e) {
    throw Error(Errc::malformed_file, e.what());
  }
}

inline void save_dataset(const Dataset& data, const std::string& path) {
  io::write_file(path, serialize_dataset(data));
}

inline Dataset load_dataset(const std::string& path) { return deserialize_dataset(io::read_file(path)); }

}  // namespace fsar
