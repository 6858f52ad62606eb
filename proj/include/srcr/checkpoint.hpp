#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "srcr/dataset.hpp"
#include "srcr/errors.hpp"
#include "srcr/mat.hpp"
#include "srcr/tensor.hpp"

namespace srcr {

// Trained-model container. Parameters are stored as f32 in a fixed order; the
// config text (the serialized pipeline configuration) is embedded verbatim so
// a checkpoint alone is enough to rebuild the model skeleton it fills.
//
//   "SRCR" | u32 version=1 | u32 config_len | config bytes
//   u32 n_tensors | per tensor: u32 rows | u32 cols | rows*cols f32

struct Checkpoint {
  std::string config_text;
  std::vector<Mat> tensors;
};

inline void write_checkpoint(const std::string& path, const std::string& config_text,
                             const std::vector<Tensor>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out.write("SRCR", 4);
  detail::put_u32(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(config_text.size()));
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const Tensor& t : tensors) {
    detail::put_u32(out, static_cast<std::uint32_t>(t.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(t.cols()));
    for (double x : t.value()) detail::put_f32(out, static_cast<float>(x));
  }
  out.flush();
  if (!out) throw Error("write to " + path + " failed");
}

inline Checkpoint read_checkpoint(ByteSource& src) {
  char magic[4];
  src.read(magic, 4);
  if (std::memcmp(magic, "SRCR", 4) != 0) throw ParseError(0, "bad checkpoint magic");
  const std::uint32_t version = detail::get_u32(src);
  if (version != 1)
    throw ParseError(4, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const std::uint32_t config_len = detail::get_u32(src);
  ck.config_text.resize(config_len);
  if (config_len > 0) src.read(ck.config_text.data(), config_len);
  const std::uint32_t n_tensors = detail::get_u32(src);
  ck.tensors.reserve(n_tensors);
  for (std::uint32_t t = 0; t < n_tensors; ++t) {
    const std::uint32_t rows = detail::get_u32(src);
    const std::uint32_t cols = detail::get_u32(src);
    if (rows == 0 || cols == 0)
      throw ParseError(src.offset(), "checkpoint tensor " + std::to_string(t) + " has zero shape");
    Mat m(rows, cols);
    std::vector<float> buf(m.v.size());
    src.read(buf.data(), buf.size() * 4);
    for (std::size_t i = 0; i < buf.size(); ++i) m.v[i] = static_cast<double>(buf[i]);
    ck.tensors.push_back(std::move(m));
  }
  return ck;
}

inline Checkpoint read_checkpoint(const std::string& path) {
  FileSource src(path);
  return read_checkpoint(src);
}

// Overwrite a model's parameter tensors from checkpoint order. Shapes must
// match what the config-built skeleton produced.
inline void load_parameters(const std::vector<Tensor>& params, const std::vector<Mat>& stored) {
  if (params.size() != stored.size())
    throw ParseError(0, "checkpoint holds " + std::to_string(stored.size()) + " tensors, model has " +
                            std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i];
    if (p.rows() != stored[i].rows || p.cols() != stored[i].cols)
      throw ParseError(0, "checkpoint tensor " + std::to_string(i) + " is " + stored[i].shape() +
                              ", model expects " + std::to_string(p.rows()) + "x" +
                              std::to_string(p.cols()));
    p.value_mut() = stored[i].v;
  }
}

}  // namespace srcr
