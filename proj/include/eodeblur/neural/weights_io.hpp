#pragma once

// MUNW weight files. Little-endian: "MUNW", u32 version, u32 tensor count,
// then per tensor u32 name length, name bytes, u32 ndim, u32 dims[ndim],
// f32 values. Tensors are written in name order; the architecture is
// recovered from the shapes.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "eodeblur/binary_io.hpp"
#include "eodeblur/neural/mimo.hpp"

namespace eodeblur::neural {

inline constexpr std::uint32_t kWeightsFormatVersion = 1;

inline std::vector<std::uint8_t> encode_weights(const ModelWeights<float>& w) {
  w.validate();
  std::vector<std::uint8_t> out = {'M', 'U', 'N', 'W'};
  eodeblur::detail::put_le<std::uint32_t>(out, kWeightsFormatVersion);
  eodeblur::detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.params.size()));
  for (const auto& [name, t] : w.params) {
    eodeblur::detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    eodeblur::detail::put_le<std::uint32_t>(out, 4);
    for (int d : {t.n, t.c, t.h, t.w}) eodeblur::detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    for (float v : t.data) eodeblur::detail::put_le<float>(out, v);
  }
  return out;
}

/// Recovers widths and block count from the decoded tensors.
inline MimoArch infer_arch(const std::map<std::string, Tensor4<float>>& params) {
  auto shape_of = [&](const std::string& name) -> const Tensor4<float>& {
    auto it = params.find(name);
    if (it == params.end()) throw FormatError("weight file lacks tensor " + name);
    return it->second;
  };
  MimoArch a;
  a.channels = shape_of("head.weight").c;
  a.widths = {shape_of("head.weight").n, shape_of("down2.weight").n, shape_of("down3.weight").n};
  int mid = 0;
  while (params.count("mid3." + std::to_string(mid) + ".conv1.weight")) ++mid;
  a.blocks_per_scale = mid;
  try {
    a.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("weight file architecture: ") + e.what());
  }
  return a;
}

inline ModelWeights<float> decode_weights(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "MUNW", 4) != 0) throw FormatError("bad weight file magic");
  std::size_t pos = 4;
  const auto version = eodeblur::detail::get_le<std::uint32_t>(bytes, pos, "weight");
  if (version != kWeightsFormatVersion) throw FormatError("unsupported weight file version " + std::to_string(version));
  const auto count = eodeblur::detail::get_le<std::uint32_t>(bytes, pos, "weight");
  ModelWeights<float> w;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = eodeblur::detail::get_le<std::uint32_t>(bytes, pos, "weight");
    if (len == 0 || len > 4096 || bytes.size() - pos < len) throw FormatError("truncated weight file (tensor name)");
    std::string name(reinterpret_cast<const char*>(bytes.data() + pos), len);
    pos += len;
    const auto ndim = eodeblur::detail::get_le<std::uint32_t>(bytes, pos, "weight");
    if (ndim < 1 || ndim > 4) throw FormatError("tensor " + name + " has unsupported rank " + std::to_string(ndim));
    int dims[4] = {1, 1, 1, 1};
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const auto v = eodeblur::detail::get_le<std::uint32_t>(bytes, pos, "weight");
      if (v == 0 || v > (1u << 20)) throw FormatError("tensor " + name + " has invalid dimension");
      dims[d] = static_cast<int>(v);
      numel *= v;
    }
    if ((bytes.size() - pos) / 4 < numel) throw FormatError("truncated weight file (tensor " + name + ")");
    Tensor4<float> t(dims[0], dims[1], dims[2], dims[3]);
    for (auto& v : t.data) v = eodeblur::detail::get_le<float>(bytes, pos, "weight");
    if (!w.params.emplace(std::move(name), std::move(t)).second) throw FormatError("duplicate tensor in weight file");
  }
  if (pos != bytes.size()) throw FormatError("trailing bytes in weight file");
  w.arch = infer_arch(w.params);
  try {
    w.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("weight file inconsistent with architecture: ") + e.what());
  }
  return w;
}

/// Header bytes plus 4 bytes per value, as laid out by encode_weights.
inline std::size_t expected_weights_file_size(const MimoArch& a) {
  std::size_t n = 12;
  for (const auto& s : conv_layout(a))
    for (const std::string suffix : {".weight", ".bias"}) n += 4 + s.name.size() + suffix.size() + 4 + 16;
  return n + 4 * parameter_count(a);
}

inline void save_weights(const ModelWeights<float>& w, const std::filesystem::path& path) { eodeblur::detail::write_all(path, encode_weights(w)); }
inline ModelWeights<float> load_weights(const std::filesystem::path& path) { return decode_weights(eodeblur::detail::read_all(path)); }

}  // namespace eodeblur::neural
