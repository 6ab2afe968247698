#pragma once

// Toy multi-input multi-output U-shaped restorer. Three scales; every scale
// receives the (area-downsampled) input and emits input + residual.
//
//   scale 1: head conv -> enc blocks ............................ dec blocks -> out1
//   scale 2: stride-2 conv (+ shallow input conv, 1x1 merge) -> enc ... dec -> out2
//   scale 3: stride-2 conv (+ shallow input conv, 1x1 merge) -> bottleneck -> out3
//   decoder: nearest upsample, 3x3 conv, concat skip, 1x1 merge.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "eodeblur/neural/tensor.hpp"

namespace eodeblur::neural {

struct MimoArch {
  std::array<int, 3> widths{8, 16, 24};
  int blocks_per_scale = 2;  ///< even; scales 1-2 split it between encoder and decoder
  int channels = 3;

  bool operator==(const MimoArch&) const = default;
  void validate() const {
    require(channels >= 1, "model needs at least one image channel");
    for (int w : widths) require(w >= 1, "scale widths must be positive");
    require(blocks_per_scale >= 2 && blocks_per_scale % 2 == 0, "blocks per scale must be even and >= 2");
  }
};

struct ParamShape {
  std::string name;
  int cout, cin, k;
};

/// Every parameter slot of the architecture, in a fixed order. Each conv
/// contributes "<name>.weight" (cout,cin,k,k) and "<name>.bias" (cout,1,1,1).
inline std::vector<ParamShape> conv_layout(const MimoArch& a) {
  a.validate();
  const auto [w1, w2, w3] = a.widths;
  const int c = a.channels;
  const int half = a.blocks_per_scale / 2;
  std::vector<ParamShape> convs;
  auto blocks = [&](const std::string& prefix, int w, int count) {
    for (int i = 0; i < count; ++i) {
      convs.push_back({prefix + "." + std::to_string(i) + ".conv1", w, w, 3});
      convs.push_back({prefix + "." + std::to_string(i) + ".conv2", w, w, 3});
    }
  };
  convs.push_back({"head", w1, c, 3});
  blocks("enc1", w1, half);
  convs.push_back({"down2", w2, w1, 3});
  convs.push_back({"shallow2", w2, c, 3});
  convs.push_back({"merge2", w2, 2 * w2, 1});
  blocks("enc2", w2, half);
  convs.push_back({"down3", w3, w2, 3});
  convs.push_back({"shallow3", w3, c, 3});
  convs.push_back({"merge3", w3, 2 * w3, 1});
  blocks("mid3", w3, a.blocks_per_scale);
  convs.push_back({"out3", c, w3, 3});
  convs.push_back({"up2", w2, w3, 3});
  convs.push_back({"skip2", w2, 2 * w2, 1});
  blocks("dec2", w2, half);
  convs.push_back({"out2", c, w2, 3});
  convs.push_back({"up1", w1, w2, 3});
  convs.push_back({"skip1", w1, 2 * w1, 1});
  blocks("dec1", w1, half);
  convs.push_back({"out1", c, w1, 3});
  return convs;
}

inline std::size_t parameter_count(const MimoArch& a) {
  std::size_t n = 0;
  for (const auto& s : conv_layout(a)) n += static_cast<std::size_t>(s.cout) * s.cin * s.k * s.k + s.cout;
  return n;
}

template <class T = float>
struct ModelWeights {
  MimoArch arch;
  std::map<std::string, Tensor4<T>> params;

  const Tensor4<T>& operator[](const std::string& name) const {
    auto it = params.find(name);
    if (it == params.end()) throw InvalidArgument("missing parameter " + name);
    return it->second;
  }
  Tensor4<T>& operator[](const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw InvalidArgument("missing parameter " + name);
    return it->second;
  }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& [_, t] : params) n += t.numel();
    return n;
  }

  /// Every architecture slot present with the expected shape, nothing extra.
  void validate() const {
    const auto layout = conv_layout(arch);
    if (params.size() != 2 * layout.size())
      throw InvalidArgument("weights hold " + std::to_string(params.size()) + " tensors, architecture needs " +
                            std::to_string(2 * layout.size()));
    for (const auto& s : layout) {
      const auto& w = (*this)[s.name + ".weight"];
      const auto& b = (*this)[s.name + ".bias"];
      if (w.n != s.cout || w.c != s.cin || w.h != s.k || w.w != s.k)
        throw InvalidArgument("parameter " + s.name + ".weight has shape " + w.shape_string());
      if (b.n != s.cout || b.c != 1 || b.h != 1 || b.w != 1) throw InvalidArgument("parameter " + s.name + ".bias has shape " + b.shape_string());
    }
    for (const auto& [name, t] : params)
      for (T v : t.data)
        if (!std::isfinite(static_cast<double>(v))) throw InvalidArgument("parameter " + name + " is not finite");
  }

  template <class U>
  ModelWeights<U> cast() const {
    ModelWeights<U> out;
    out.arch = arch;
    for (const auto& [name, t] : params) out.params.emplace(name, t.template cast<U>());
    return out;
  }
};

enum class ResidualInit { random, zero };

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases. With
/// ResidualInit::zero the output convs are zeroed so every scale returns its
/// input unchanged.
template <class T = float>
ModelWeights<T> init_weights(const MimoArch& arch, std::uint64_t seed, ResidualInit residual = ResidualInit::random) {
  ModelWeights<T> w;
  w.arch = arch;
  std::mt19937_64 rng(seed);
  for (const auto& s : conv_layout(arch)) {
    Tensor4<T> weight(s.cout, s.cin, s.k, s.k);
    Tensor4<T> bias(s.cout, 1, 1, 1);
    const bool zero = residual == ResidualInit::zero && s.name.rfind("out", 0) == 0;
    if (!zero) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(s.cin * s.k * s.k));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : weight.data) v = static_cast<T>(u(rng));
      for (auto& v : bias.data) v = static_cast<T>(u(rng));
    }
    w.params.emplace(s.name + ".weight", std::move(weight));
    w.params.emplace(s.name + ".bias", std::move(bias));
  }
  return w;
}

template <class T>
struct MimoGraph {
  std::array<typename Graph<T>::Var, 3> outputs{};  ///< full, 1/2, 1/4
  std::map<std::string, typename Graph<T>::Var> params;
};

/// Records the forward pass on `g`. Input is (n, channels, h, w) with h and w
/// divisible by 4.
template <class T>
MimoGraph<T> build_mimo(Graph<T>& g, const ModelWeights<T>& weights, const Tensor4<T>& input) {
  using Var = typename Graph<T>::Var;
  const MimoArch& a = weights.arch;
  if (input.c != a.channels) throw InvalidArgument("model expects " + std::to_string(a.channels) + " channels, got " + std::to_string(input.c));
  if (input.h % 4 != 0 || input.w % 4 != 0)
    throw InvalidArgument("model input dimensions must be divisible by 4, got " + std::to_string(input.w) + "x" + std::to_string(input.h));

  MimoGraph<T> mg;
  auto conv = [&](Var x, const std::string& name, int stride = 1) {
    auto [it_w, new_w] = mg.params.try_emplace(name + ".weight", -1);
    if (new_w) it_w->second = g.parameter(weights[name + ".weight"]);
    auto [it_b, new_b] = mg.params.try_emplace(name + ".bias", -1);
    if (new_b) it_b->second = g.parameter(weights[name + ".bias"]);
    const int k = g.value(it_w->second).h;
    return g.conv2d(x, it_w->second, it_b->second, ConvGeometry{stride, k / 2, PadMode::zero});
  };
  auto blocks = [&](Var x, const std::string& prefix, int count) {
    for (int i = 0; i < count; ++i) {
      const std::string p = prefix + "." + std::to_string(i);
      x = g.add(x, conv(g.relu(conv(x, p + ".conv1")), p + ".conv2"));
    }
    return x;
  };
  const int half = a.blocks_per_scale / 2;

  const Var x1 = g.input(input);
  const Var x2 = g.downsample2(x1);
  const Var x3 = g.downsample2(x2);

  const Var f1 = blocks(g.relu(conv(x1, "head")), "enc1", half);
  Var f2 = g.concat(g.relu(conv(f1, "down2", 2)), g.relu(conv(x2, "shallow2")));
  f2 = blocks(conv(f2, "merge2"), "enc2", half);
  Var f3 = g.concat(g.relu(conv(f2, "down3", 2)), g.relu(conv(x3, "shallow3")));
  f3 = blocks(conv(f3, "merge3"), "mid3", a.blocks_per_scale);
  mg.outputs[2] = g.add(conv(f3, "out3"), x3);

  Var d2 = g.concat(g.relu(conv(g.upsample2(f3), "up2")), f2);
  d2 = blocks(conv(d2, "skip2"), "dec2", half);
  mg.outputs[1] = g.add(conv(d2, "out2"), x2);

  Var d1 = g.concat(g.relu(conv(g.upsample2(d2), "up1")), f1);
  d1 = blocks(conv(d1, "skip1"), "dec1", half);
  mg.outputs[0] = g.add(conv(d1, "out1"), x1);
  return mg;
}

template <class T>
using MimoOutputs = std::array<Tensor4<T>, 3>;

template <class T>
MimoOutputs<T> mimo_forward(const ModelWeights<T>& weights, const Tensor4<T>& input) {
  Graph<T> g(false);
  const auto mg = build_mimo(g, weights, input);
  return {g.value(mg.outputs[0]), g.value(mg.outputs[1]), g.value(mg.outputs[2])};
}

/// Area pyramid of a target at full, 1/2 and 1/4 scale.
template <class T>
MimoOutputs<T> target_pyramid(const Tensor4<T>& target) {
  Tensor4<T> half = downsample2(target);
  Tensor4<T> quarter = downsample2(half);
  return {target, std::move(half), std::move(quarter)};
}

/// Floats held by an inference graph for a (1, channels, h, w) input: every
/// node value plus the largest im2col buffer alive at any moment.
inline std::size_t mimo_activation_floats(const MimoArch& a, int h, int w) {
  const auto [w1, w2, w3] = a.widths;
  const std::size_t c = static_cast<std::size_t>(a.channels);
  const int half = a.blocks_per_scale / 2;
  const std::size_t p1 = static_cast<std::size_t>(h) * w, p2 = p1 / 4, p3 = p1 / 16;
  // Residual block: conv1, relu, conv2, add.
  auto block = [](std::size_t width, std::size_t px) { return 4 * width * px; };
  std::size_t n = 0;
  n += c * (p1 + p2 + p3);                                          // pyramid
  n += 2 * w1 * p1 + half * block(w1, p1);                          // head + relu, enc1
  n += 2 * w2 * p2 + 2 * w2 * p2 + 2 * w2 * p2 + w2 * p2;           // down2, shallow2 (+relu), concat, merge2
  n += half * block(w2, p2);
  n += 2 * w3 * p3 + 2 * w3 * p3 + 2 * w3 * p3 + w3 * p3;           // down3, shallow3, concat, merge3
  n += a.blocks_per_scale * block(w3, p3);
  n += 2 * c * p3;                                                  // out3 + add
  n += w3 * p2 + 2 * w2 * p2 + 2 * w2 * p2 + w2 * p2;               // upsample, up2 (+relu), concat, skip2
  n += half * block(w2, p2) + 2 * c * p2;
  n += w2 * p1 + 2 * w1 * p1 + 2 * w1 * p1 + w1 * p1;               // upsample, up1 (+relu), concat, skip1
  n += half * block(w1, p1) + 2 * c * p1;
  const std::size_t widest_cols = std::max({9 * w2 * p1, 9 * w1 * p1, 9 * w3 * p2, 2 * w1 * p1});
  return n + widest_cols;
}

}  // namespace eodeblur::neural
