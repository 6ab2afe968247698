#pragma once

// Procedural stand-ins for sharp Earth-observation reference scenes at a
// ~40 m ground sample distance: agricultural parcels with within-field
// texture, a river, roads and built-up blocks. Deterministic given a seed.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "eodeblur/imagecore.hpp"

namespace eodeblur {

struct SceneParams {
  int width = 256;
  int height = 256;
  std::uint64_t seed = 1;
  double parcel_size = 28.0;  ///< mean parcel spacing in pixels
  int roads = 3;
  bool river = true;
  bool urban = true;
  double texture = 0.12;      ///< relative amplitude of within-parcel texture
  double striped_fraction = 0.4;  ///< share of parcels with crop-row stripes
  double contrast = 1.0;      ///< palette spread about mid-grey (display stretch)
};

namespace detail {

class ValueNoise {
 public:
  ValueNoise(std::mt19937_64& rng, int cells_x, int cells_y) : nx_(cells_x + 2), ny_(cells_y + 2), v_(static_cast<std::size_t>(nx_ * ny_)) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& x : v_) x = u(rng);
  }

  // Smoothstep-interpolated lattice noise; (x, y) in lattice units.
  double operator()(double x, double y) const {
    const int ix = std::clamp(static_cast<int>(x), 0, nx_ - 2);
    const int iy = std::clamp(static_cast<int>(y), 0, ny_ - 2);
    double fx = x - ix, fy = y - iy;
    fx = fx * fx * (3 - 2 * fx);
    fy = fy * fy * (3 - 2 * fy);
    const double a = at(ix, iy), b = at(ix + 1, iy), c = at(ix, iy + 1), d = at(ix + 1, iy + 1);
    return (a + fx * (b - a)) + fy * ((c + fx * (d - c)) - (a + fx * (b - a)));
  }

 private:
  double at(int x, int y) const { return v_[static_cast<std::size_t>(y * nx_ + x)]; }
  int nx_, ny_;
  std::vector<double> v_;
};

struct Parcel {
  double cx, cy;
  std::array<double, 3> color;
  double stripe_angle;
  double stripe_period;
  double stripe_amp;
};

inline double smooth_coverage(double distance, double half_width) {
  // Anti-aliased band membership with a one-pixel transition.
  return std::clamp(half_width + 0.5 - distance, 0.0, 1.0);
}

}  // namespace detail

/// RGB scene with values in [0,1].
inline RasterImage make_scene(const SceneParams& p) {
  require(p.width > 0 && p.height > 0, "scene dimensions must be positive");
  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  static constexpr std::array<std::array<double, 3>, 6> palette = {{
      {0.22, 0.34, 0.16},  // irrigated crop
      {0.42, 0.40, 0.26},  // dry grassland
      {0.55, 0.45, 0.34},  // bare soil
      {0.12, 0.22, 0.12},  // forest
      {0.48, 0.46, 0.40},  // stubble
      {0.32, 0.38, 0.22},  // pasture
  }};

  const int gx = std::max(1, static_cast<int>(std::ceil(p.width / p.parcel_size)));
  const int gy = std::max(1, static_cast<int>(std::ceil(p.height / p.parcel_size)));
  std::vector<detail::Parcel> parcels;
  for (int j = -1; j <= gy; ++j)
    for (int i = -1; i <= gx; ++i) {
      detail::Parcel q{};
      q.cx = (i + 0.15 + 0.7 * u01(rng)) * p.parcel_size;
      q.cy = (j + 0.15 + 0.7 * u01(rng)) * p.parcel_size;
      const auto& base = palette[static_cast<std::size_t>(u01(rng) * palette.size()) % palette.size()];
      const double gain = 0.8 + 0.4 * u01(rng);
      for (int c = 0; c < 3; ++c) q.color[static_cast<std::size_t>(c)] = std::clamp(0.4 + p.contrast * (base[static_cast<std::size_t>(c)] * gain - 0.4), 0.0, 1.0);
      q.stripe_angle = u01(rng) * std::numbers::pi;
      q.stripe_period = 3.0 + 4.0 * u01(rng);
      q.stripe_amp = u01(rng) < p.striped_fraction ? 0.05 + 0.08 * u01(rng) : 0.0;
      parcels.push_back(q);
    }

  const detail::ValueNoise coarse(rng, p.width / 32 + 1, p.height / 32 + 1);
  const detail::ValueNoise fine(rng, p.width / 6 + 1, p.height / 6 + 1);
  const detail::ValueNoise grain(rng, p.width / 2 + 1, p.height / 2 + 1);

  RasterImage img(p.width, p.height, 3);
  const int cols = gx + 2;
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      const int ci = static_cast<int>(x / p.parcel_size) + 1;
      const int cj = static_cast<int>(y / p.parcel_size) + 1;
      double best = 1e300;
      const detail::Parcel* owner = &parcels.front();
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          const int ii = std::clamp(ci + di, 0, cols - 1);
          const int jj = std::clamp(cj + dj, 0, gy + 1);
          const auto& q = parcels[static_cast<std::size_t>(jj * cols + ii)];
          const double d = (x - q.cx) * (x - q.cx) + (y - q.cy) * (y - q.cy);
          if (d < best) {
            best = d;
            owner = &q;
          }
        }
      double mod = 1.0 + p.texture * (0.5 * coarse(x / 32.0, y / 32.0) + 0.35 * fine(x / 6.0, y / 6.0) + 0.35 * grain(x / 2.0, y / 2.0));
      if (owner->stripe_amp > 0.0) {
        const double t = x * std::cos(owner->stripe_angle) + y * std::sin(owner->stripe_angle);
        mod += owner->stripe_amp * std::sin(2.0 * std::numbers::pi * t / owner->stripe_period);
      }
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<float>(owner->color[static_cast<std::size_t>(c)] * mod);
    }

  auto paint = [&](int x, int y, const std::array<double, 3>& color, double coverage) {
    if (coverage <= 0.0) return;
    for (int c = 0; c < 3; ++c) {
      float& v = img.at(x, y, c);
      v = static_cast<float>((1.0 - coverage) * v + coverage * color[static_cast<std::size_t>(c)]);
    }
  };

  if (p.urban) {
    const double ux = u01(rng) * p.width, uy = u01(rng) * p.height;
    const double extent = 0.18 * std::min(p.width, p.height);
    const int blocks = static_cast<int>(extent * extent / 12.0);
    for (int b = 0; b < blocks; ++b) {
      const int bx = static_cast<int>(ux + (u01(rng) - 0.5) * 2.0 * extent);
      const int by = static_cast<int>(uy + (u01(rng) - 0.5) * 2.0 * extent);
      const int bw = 2 + static_cast<int>(u01(rng) * 4), bh = 2 + static_cast<int>(u01(rng) * 4);
      const double level = 0.35 + 0.5 * u01(rng);
      const std::array<double, 3> color = {level, level * 0.97, level * 0.95};
      for (int y = std::max(0, by); y < std::min(p.height, by + bh); ++y)
        for (int x = std::max(0, bx); x < std::min(p.width, bx + bw); ++x) paint(x, y, color, 1.0);
    }
  }

  if (p.river) {
    const bool horizontal = u01(rng) < 0.5;
    const double base = (0.25 + 0.5 * u01(rng)) * (horizontal ? p.height : p.width);
    const double amp = (0.05 + 0.1 * u01(rng)) * (horizontal ? p.height : p.width);
    const double freq = 2.0 * std::numbers::pi / ((0.5 + u01(rng)) * (horizontal ? p.width : p.height));
    const double phase = u01(rng) * 2.0 * std::numbers::pi;
    const double half_width = 1.5 + 2.5 * u01(rng);
    const std::array<double, 3> water = {0.06, 0.09, 0.13};
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) {
        const double along = horizontal ? x : y;
        const double across = horizontal ? y : x;
        const double center = base + amp * std::sin(freq * along + phase);
        const double slope = amp * freq * std::cos(freq * along + phase);
        const double dist = std::abs(across - center) / std::sqrt(1.0 + slope * slope);
        paint(x, y, water, detail::smooth_coverage(dist, half_width));
      }
  }

  for (int r = 0; r < p.roads; ++r) {
    const double ang = u01(rng) * std::numbers::pi;
    const double px = u01(rng) * p.width, py = u01(rng) * p.height;
    const double nx = -std::sin(ang), ny = std::cos(ang);
    const double half_width = 0.4 + 0.6 * u01(rng);
    const double level = 0.6 + 0.2 * u01(rng);
    const std::array<double, 3> asphalt = {level, level, level * 0.98};
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) paint(x, y, asphalt, detail::smooth_coverage(std::abs((x - px) * nx + (y - py) * ny), half_width));
  }

  for (auto& pl : img.planes())
    for (auto& v : pl.data) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

}  // namespace eodeblur
