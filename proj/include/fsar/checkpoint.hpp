#pragma once

// Versioned binary checkpoint.
//
//   "FSARCKPT"                      8 bytes
//   u32 schema_version              (kCheckpointSchema)
//   u32 frame_dim
//   u64 step
//   u32 config_bytes, then the canonical config text
//   u32 tensor_count
//   per tensor: u32 name_bytes, name, u32 rows, u32 cols, rows*cols f32 (row-major)
//   u64 FNV-1a of every preceding byte
//
// All integers and floats are little-endian. Loading rebuilds the model
// skeleton from the embedded config and requires every tensor name and shape
// to match it.

#include "fsar/config.hpp"
#include "fsar/core.hpp"
#include "fsar/data.hpp"
#include "fsar/model.hpp"

#include <string>
#include <vector>

namespace fsar {

using Checkpoint = Model;

inline constexpr std::uint32_t kCheckpointSchema = 1;
inline constexpr std::string_view kCheckpointMagic = "FSARCKPT";

inline std::string serialize_checkpoint(const Model& model) {
  std::string out(kCheckpointMagic);
  io::put_u32(out, kCheckpointSchema);
  io::put_u32(out, static_cast<std::uint32_t>(model.frame_dim()));
  io::put_u64(out, model.step);
  const std::string cfg = to_config_text(model.config);
  io::put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  std::uint32_t count = 0;
  model.for_each_parameter([&](const std::string&, const Matrix&) { ++count; });
  io::put_u32(out, count);
  model.for_each_parameter([&](const std::string& name, const Matrix& m) {
    io::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    io::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    io::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) io::put_f32(out, static_cast<float>(m.data()[i]));
  });
  io::put_u64(out, fnv1a(out));
  return out;
}

inline Model deserialize_checkpoint(const std::string& buf) {
  if (buf.size() < kCheckpointMagic.size() + 8 || buf.compare(0, kCheckpointMagic.size(), kCheckpointMagic) != 0) {
    throw Error(Errc::schema_mismatch, "not a checkpoint (bad magic)");
  }
  {
    io::Reader tail(buf, buf.size() - 8, "checkpoint trailer");
    if (tail.u64("checksum") != fnv1a(std::string_view(buf).substr(0, buf.size() - 8))) {
      throw Error(Errc::malformed_file, "checkpoint checksum mismatch (corrupted or truncated)");
    }
  }
  io::Reader rd(buf, kCheckpointMagic.size(), "checkpoint");
  const std::uint32_t version = rd.u32("schema version");
  if (version != kCheckpointSchema) {
    throw Error(Errc::schema_mismatch, "checkpoint schema " + std::to_string(version) + ", this build reads " +
                                           std::to_string(kCheckpointSchema));
  }
  const std::uint32_t frame_dim = rd.u32("frame_dim");
  const std::uint64_t step = rd.u64("step");
  const std::uint32_t cfg_len = rd.u32("config length");
  const std::string cfg_text = rd.bytes(cfg_len, "config");

  Model model;
  try {
    model = Model::init(parse_config(cfg_text), static_cast<int>(frame_dim));
  } catch (const Error& e) {
    throw Error(Errc::schema_mismatch, std::string("embedded config rejected: ") + e.what());
  }
  model.step = step;

  std::uint32_t expected = 0;
  model.for_each_parameter([&](const std::string&, const Matrix&) { ++expected; });
  const std::uint32_t count = rd.u32("tensor count");
  if (count != expected) {
    throw Error(Errc::schema_mismatch, "checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                                           std::to_string(expected));
  }
  model.for_each_parameter([&](const std::string& name, Matrix& m) {
    const std::uint32_t name_len = rd.u32("tensor name length");
    const std::string got = rd.bytes(name_len, "tensor name");
    if (got != name) throw Error(Errc::schema_mismatch, "expected tensor '" + name + "', found '" + got + "'");
    const std::uint32_t rows = rd.u32(name + " rows");
    const std::uint32_t cols = rd.u32(name + " cols");
    if (rows != m.rows() || cols != m.cols()) {
      throw Error(Errc::schema_mismatch, "tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                                             std::to_string(cols) + ", config implies " + std::to_string(m.rows()) +
                                             "x" + std::to_string(m.cols()));
    }
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rd.f32(name);
  });
  if (rd.pos() != buf.size() - 8) rd.fail("unexpected bytes before the checksum");
  return model;
}

inline void save_checkpoint(const Model& model, const std::string& path) {
  io::write_file(path, serialize_checkpoint(model));
}

inline Model load_checkpoint(const std::string& path) { return deserialize_checkpoint(io::read_file(path)); }

}  // namespace fsar
