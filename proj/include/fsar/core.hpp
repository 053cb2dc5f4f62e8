#pragma once

// Shared numeric types, the error taxonomy, and small deterministic helpers
// (hashing, seeded RNG streams) used by every other header.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fsar {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// t x C per-frame features of one video.
using FrameFeatures = Matrix;
/// t_q x t_s matrix of frame-pair costs, entries in [0, 2].
using CostMatrix = Matrix;

enum class Errc {
  usage,
  invalid_config,
  invalid_spec,
  insufficient_classes,
  insufficient_samples,
  dimension_mismatch,
  shape_mismatch,
  empty_name,
  zero_vector,
  size_exceeded,
  label_out_of_range,
  class_set_mismatch,
  mode_config_conflict,
  malformed_file,
  schema_mismatch,
  non_finite,
  io_failure,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::usage: return "usage";
    case Errc::invalid_config: return "invalid-config";
    case Errc::invalid_spec: return "invalid-spec";
    case Errc::insufficient_classes: return "insufficient-classes";
    case Errc::insufficient_samples: return "insufficient-samples-in-class";
    case Errc::dimension_mismatch: return "dimension-mismatch";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::empty_name: return "empty-name";
    case Errc::zero_vector: return "zero-vector";
    case Errc::size_exceeded: return "size-exceeded";
    case Errc::label_out_of_range: return "label-out-of-range";
    case Errc::class_set_mismatch: return "class-set-mismatch";
    case Errc::mode_config_conflict: return "mode-config-conflict";
    case Errc::malformed_file: return "malformed-file";
    case Errc::schema_mismatch: return "schema-mismatch";
    case Errc::non_finite: return "non-finite";
    case Errc::io_failure: return "io-failure";
  }
  return "unknown";
}

/// Process exit status for an error category: 2 usage, 3 data, 4 numeric, 5 io.
inline int exit_code(Errc code) {
  switch (code) {
    case Errc::usage:
    case Errc::invalid_config:
    case Errc::mode_config_conflict:
      return 2;
    case Errc::zero_vector:
    case Errc::non_finite:
    case Errc::size_exceeded:
      return 4;
    case Errc::io_failure:
      return 5;
    default:
      return 3;
  }
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// FNV-1a, 64 bit. Stable across platforms, unlike std::hash.
inline std::uint64_t fnv1a(std::string_view text, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  std::uint64_t h = seed;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Rng = std::mt19937_64;

/// Independent stream for (seed, index); used for per-episode evaluation RNGs.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t index) {
  return Rng(splitmix64(splitmix64(seed) ^ (index * 0xd1b54a32d192ed03ULL + 1)));
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace fsar
