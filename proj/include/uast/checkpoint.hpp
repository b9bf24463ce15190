// Copyright 2026 The UAST Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "uast/error.hpp"
#include "uast/model.hpp"

namespace uast {

// Binary checkpoint, little-endian throughout:
//   "UAST1" | u64 layer_count | u64 class_count
//   per layer: u64 d_in | u64 d_out | u8 activation | f64 weights[d_in*d_out]
//              (row-major) | f64 bias[d_out]
//   u64 att_rows | u64 att_cols | f64 att[att_rows*att_cols]
inline constexpr std::string_view kCheckpointMagic = "UAST1";

namespace detail {

inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_f64(std::vector<unsigned char>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  unsigned char u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::string_view take(std::size_t n) {
    need(n);
    std::string_view s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParseError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

// Guards against absurd sizes in corrupt files before allocating.
inline std::uint64_t checked_dim(std::uint64_t v, const char* what) {
  if (v > (1u << 24)) throw ParseError(std::string("checkpoint: implausible ") + what);
  return v;
}

}  // namespace detail

inline std::vector<unsigned char> serialize_checkpoint(const MlpModel& model) {
  model.validate();
  std::vector<unsigned char> out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_u64(out, model.layers.size());
  detail::put_u64(out, model.class_count());
  for (const Layer& layer : model.layers) {
    detail::put_u64(out, layer.in_dim());
    detail::put_u64(out, layer.out_dim());
    out.push_back(static_cast<unsigned char>(layer.activation));
    for (double w : layer.weight.data()) detail::put_f64(out, w);
    for (double b : layer.bias) detail::put_f64(out, b);
  }
  detail::put_u64(out, model.att.rows());
  detail::put_u64(out, model.att.cols());
  for (double w : model.att.data()) detail::put_f64(out, w);
  return out;
}

inline MlpModel deserialize_checkpoint(std::span<const unsigned char> bytes) {
  detail::ByteReader in(bytes);
  if (in.take(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw ParseError("checkpoint: bad magic, expected UAST1");
  }
  MlpModel model;
  const auto layer_count = detail::checked_dim(in.u64(), "layer count");
  const auto class_count = in.u64();
  for (std::uint64_t l = 0; l < layer_count; ++l) {
    const auto d_in = detail::checked_dim(in.u64(), "layer input dim");
    const auto d_out = detail::checked_dim(in.u64(), "layer output dim");
    const auto act = in.u8();
    if (act > 1) throw ParseError("checkpoint: unknown activation code " + std::to_string(act));
    Layer layer;
    layer.activation = static_cast<Activation>(act);
    layer.weight = Matrix(d_in, d_out);
    for (double& w : layer.weight.data()) w = in.f64();
    layer.bias.resize(d_out);
    for (double& b : layer.bias) b = in.f64();
    model.layers.push_back(std::move(layer));
  }
  const auto att_rows = detail::checked_dim(in.u64(), "attention rows");
  const auto att_cols = detail::checked_dim(in.u64(), "attention cols");
  model.att = Matrix(att_rows, att_cols);
  for (double& w : model.att.data()) w = in.f64();
  if (!in.done()) throw ParseError("checkpoint: trailing bytes");
  model.validate();
  if (model.class_count() != class_count) throw ParseError("checkpoint: class count mismatch");
  return model;
}

inline void save_checkpoint(const MlpModel& model, const std::string& path) {
  const auto bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path);
}

inline MlpModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace uast
