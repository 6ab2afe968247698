#pragma once

#include <cstdint>
#include <random>

#include "eodeblur/imagecore.hpp"
#include "eodeblur/synth.hpp"

namespace eodeblur::test {

inline Plane random_plane(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Plane p(w, h);
  for (auto& v : p.data) v = u(rng);
  return p;
}

inline RasterImage random_image(int w, int h, int channels, std::uint64_t seed) {
  std::vector<Plane> planes;
  for (int c = 0; c < channels; ++c) planes.push_back(random_plane(w, h, seed * 31 + static_cast<std::uint64_t>(c)));
  return RasterImage::from_planes(std::move(planes));
}

inline RasterImage scene(int w, int h, std::uint64_t seed) {
  SceneParams p;
  p.width = w;
  p.height = h;
  p.seed = seed;
  return make_scene(p);
}

inline double max_abs_diff(const RasterImage& a, const RasterImage& b) {
  double m = 0.0;
  for (int c = 0; c < a.channels(); ++c)
    for (std::size_t i = 0; i < a.plane(c).size(); ++i)
      m = std::max(m, static_cast<double>(std::abs(a.plane(c).data[i] - b.plane(c).data[i])));
  return m;
}

inline bool bit_equal(const RasterImage& a, const RasterImage& b) {
  if (!a.same_shape(b)) return false;
  for (int c = 0; c < a.channels(); ++c)
    if (!std::equal(a.plane(c).data.begin(), a.plane(c).data.end(), b.plane(c).data.begin())) return false;
  return true;
}

}  // namespace eodeblur::test
