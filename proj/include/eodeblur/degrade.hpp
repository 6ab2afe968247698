#pragma once

// Synthetic degradation: blur kernels, reflect-boundary convolution, spin
// blur, shot noise, and declarative degradation chains.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "eodeblur/error.hpp"
#include "eodeblur/fft.hpp"
#include "eodeblur/imagecore.hpp"

namespace eodeblur {

/// Normalized, non-negative, odd-sized square convolution kernel.
class BlurKernel {
 public:
  BlurKernel() : size_(1), taps_{1.0} {}

  /// Validates shape and non-negativity, then normalizes to unit sum.
  static BlurKernel from_taps(int size, std::vector<double> taps) {
    require(size >= 1 && size % 2 == 1, "kernel size must be odd and positive");
    require(taps.size() == static_cast<std::size_t>(size) * static_cast<std::size_t>(size), "kernel tap count does not match size");
    double sum = 0.0;
    for (double t : taps) {
      require(std::isfinite(t) && t >= 0.0, "kernel taps must be finite and non-negative");
      sum += t;
    }
    require(sum > 0.0, "kernel taps must not all be zero");
    for (double& t : taps) t /= sum;
    BlurKernel k;
    k.size_ = size;
    k.taps_ = std::move(taps);
    return k;
  }

  static BlurKernel identity() { return {}; }

  int size() const noexcept { return size_; }
  int radius() const noexcept { return size_ / 2; }
  const std::vector<double>& taps() const noexcept { return taps_; }
  double at(int u, int v) const noexcept { return taps_[static_cast<std::size_t>(v) * size_ + u]; }

  double sum() const noexcept {
    double s = 0.0;
    for (double t : taps_) s += t;
    return s;
  }

  BlurKernel transposed() const {
    std::vector<double> t(taps_.size());
    for (int v = 0; v < size_; ++v)
      for (int u = 0; u < size_; ++u) t[static_cast<std::size_t>(u) * size_ + v] = at(u, v);
    BlurKernel k;
    k.size_ = size_;
    k.taps_ = std::move(t);
    return k;
  }

  /// Zero-pads (or center-crops) to a new odd size without renormalizing
  /// the padded case.
  BlurKernel resized(int new_size) const {
    require(new_size >= 1 && new_size % 2 == 1, "kernel size must be odd and positive");
    std::vector<double> t(static_cast<std::size_t>(new_size) * new_size, 0.0);
    const int off = new_size / 2 - radius();
    for (int v = 0; v < size_; ++v)
      for (int u = 0; u < size_; ++u) {
        const int x = u + off;
        const int y = v + off;
        if (x >= 0 && y >= 0 && x < new_size && y < new_size) t[static_cast<std::size_t>(y) * new_size + x] = at(u, v);
      }
    return from_taps(new_size, std::move(t));
  }

 private:
  int size_;
  std::vector<double> taps_;
};

inline nlohmann::json to_json(const BlurKernel& k) {
  return {{"schema_version", 1}, {"size", k.size()}, {"taps", k.taps()}};
}

inline BlurKernel kernel_from_json(const nlohmann::json& j) {
  try {
    return BlurKernel::from_taps(j.at("size").get<int>(), j.at("taps").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid kernel JSON: ") + e.what());
  }
}

/// Uniform disk PSF with supersampled coverage weights.
inline BlurKernel disk_kernel(double radius, int supersample = 4) {
  require(std::isfinite(radius) && radius >= 0.0, "disk radius must be non-negative");
  require(supersample >= 1, "supersample must be >= 1");
  const int half = static_cast<int>(std::ceil(radius));
  const int size = 2 * half + 1;
  if (half == 0) return BlurKernel::identity();
  std::vector<double> taps(static_cast<std::size_t>(size) * size, 0.0);
  const double r2 = radius * radius;
  for (int v = 0; v < size; ++v) {
    for (int u = 0; u < size; ++u) {
      int inside = 0;
      for (int sy = 0; sy < supersample; ++sy) {
        const double y = (v - half) + (sy + 0.5) / supersample - 0.5;
        for (int sx = 0; sx < supersample; ++sx) {
          const double x = (u - half) + (sx + 0.5) / supersample - 0.5;
          if (x * x + y * y <= r2) ++inside;
        }
      }
      taps[static_cast<std::size_t>(v) * size + u] = inside;
    }
  }
  return BlurKernel::from_taps(size, std::move(taps));
}

/// Separable Gaussian with support 2*ceil(3 sigma)+1.
inline std::vector<double> gaussian_profile(double sigma, int half) {
  std::vector<double> g(static_cast<std::size_t>(2 * half + 1));
  for (int i = -half; i <= half; ++i) g[static_cast<std::size_t>(i + half)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
  return g;
}

inline BlurKernel gaussian_kernel(double sigma) {
  require(std::isfinite(sigma) && sigma > 0.0, "gaussian sigma must be positive");
  const int half = static_cast<int>(std::ceil(3.0 * sigma));
  const int size = 2 * half + 1;
  const auto g = gaussian_profile(sigma, half);
  std::vector<double> taps(static_cast<std::size_t>(size) * size);
  for (int v = 0; v < size; ++v)
    for (int u = 0; u < size; ++u) taps[static_cast<std::size_t>(v) * size + u] = g[static_cast<std::size_t>(u)] * g[static_cast<std::size_t>(v)];
  return BlurKernel::from_taps(size, std::move(taps));
}

namespace detail {
// Length of the segment p0 + t*d, t in [0,1], inside the axis-aligned box.
inline double clipped_length(double x0, double y0, double dx, double dy, double xmin, double xmax, double ymin, double ymax) {
  double t0 = 0.0, t1 = 1.0;
  auto clip = [&](double p, double q) {
    if (p == 0.0) return q >= 0.0;
    const double t = q / p;
    if (p < 0.0) {
      if (t > t1) return false;
      t0 = std::max(t0, t);
    } else {
      if (t < t0) return false;
      t1 = std::min(t1, t);
    }
    return true;
  };
  if (!clip(-dx, x0 - xmin) || !clip(dx, xmax - x0) || !clip(-dy, y0 - ymin) || !clip(dy, ymax - y0)) return 0.0;
  return t1 > t0 ? (t1 - t0) * std::hypot(dx, dy) : 0.0;
}
}  // namespace detail

/// Line segment of the given length through the center; each tap holds the
/// length of segment crossing its pixel square.
inline BlurKernel motion_kernel(double length, double angle_degrees) {
  require(std::isfinite(length) && length >= 1.0, "motion length must be >= 1");
  double c = std::cos(angle_degrees * std::numbers::pi / 180.0);
  double s = std::sin(angle_degrees * std::numbers::pi / 180.0);
  if (std::abs(c) < 1e-12) c = 0.0;
  if (std::abs(s) < 1e-12) s = 0.0;
  const int half = std::max(0, static_cast<int>(std::ceil(length / 2.0 - 0.5)));
  const int size = 2 * half + 1;
  const double x0 = -0.5 * length * c;
  // Image rows grow downward; positive angles rotate counter-clockwise.
  const double y0 = 0.5 * length * s;
  const double dx = length * c;
  const double dy = -length * s;
  std::vector<double> taps(static_cast<std::size_t>(size) * size, 0.0);
  for (int v = 0; v < size; ++v)
    for (int u = 0; u < size; ++u) {
      const double cx = u - half;
      const double cy = v - half;
      taps[static_cast<std::size_t>(v) * size + u] = detail::clipped_length(x0, y0, dx, dy, cx - 0.5, cx + 0.5, cy - 0.5, cy + 0.5);
    }
  return BlurKernel::from_taps(size, std::move(taps));
}

/// The kernel as seen on a grid `factor` times coarser: each tap is treated
/// as a unit square and integrated over the coarse pixel footprints, with
/// the kernel center kept on the center of the coarse center pixel.
inline BlurKernel downscale_kernel(const BlurKernel& k, int factor) {
  require(factor >= 1, "kernel downscale factor must be >= 1");
  if (factor == 1) return k;
  const int r = k.radius();
  const int cr = (r + factor / 2 + factor - 1) / factor;
  const int size = 2 * cr + 1;
  auto overlap = [](double a0, double a1, double b0, double b1) { return std::max(0.0, std::min(a1, b1) - std::max(a0, b0)); };
  std::vector<double> taps(static_cast<std::size_t>(size) * size, 0.0);
  for (int j = 0; j < size; ++j)
    for (int i = 0; i < size; ++i) {
      const double x0 = (i - cr - 0.5) * factor, x1 = x0 + factor;
      const double y0 = (j - cr - 0.5) * factor, y1 = y0 + factor;
      double s = 0.0;
      for (int v = 0; v < k.size(); ++v) {
        const double oy = overlap(y0, y1, v - r - 0.5, v - r + 0.5);
        if (oy == 0.0) continue;
        for (int u = 0; u < k.size(); ++u) s += k.at(u, v) * oy * overlap(x0, x1, u - r - 0.5, u - r + 0.5);
      }
      taps[static_cast<std::size_t>(j) * size + i] = s;
    }
  return BlurKernel::from_taps(size, std::move(taps));
}

enum class ConvolvePath { spatial, fft };

/// Direct-summation convolution with reflect boundary.
inline Plane convolve_spatial(const Plane& p, const BlurKernel& k) {
  const int r = k.radius();
  const int n = k.size();
  Plane out(p.width, p.height);
  std::vector<int> xs(static_cast<std::size_t>(p.width + 2 * r));
  for (int i = 0; i < p.width + 2 * r; ++i) xs[static_cast<std::size_t>(i)] = reflect_index(i - r, p.width);
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      double acc = 0.0;
      for (int v = 0; v < n; ++v) {
        // out(x) = sum_u k(u) in(x - u): the tap at (u, v) reads offset -(u - r)
        const auto src = p.row(reflect_index(y - (v - r), p.height));
        for (int u = 0; u < n; ++u) acc += k.at(u, v) * src[static_cast<std::size_t>(xs[static_cast<std::size_t>(x - (u - r) + r)])];
      }
      out.at(x, y) = static_cast<float>(acc);
    }
  }
  return out;
}

/// FFT convolution: reflect-pad by the kernel radius, multiply spectra, crop.
inline Plane convolve_fft(const Plane& p, const BlurKernel& k) {
  const int r = k.radius();
  if (r == 0) {
    Plane out = p;
    const float w = static_cast<float>(k.taps()[0]);
    if (w != 1.0f)
      for (auto& v : out.data) v *= w;
    return out;
  }
  const Plane padded = reflect_pad(p, r, r, r, r);
  ComplexPlane spec = fft2(padded);
  const ComplexPlane otf = kernel_otf(k.taps(), k.size(), padded.width, padded.height);
  for (std::size_t i = 0; i < spec.size(); ++i) spec.data[i] *= otf.data[i];
  fft2_inplace(spec, FftDirection::inverse);
  const double inv = 1.0 / static_cast<double>(spec.size());
  Plane out(p.width, p.height);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) out.at(x, y) = static_cast<float>(spec.at(x + r, y + r).real() * inv);
  return out;
}

inline Plane convolve(const Plane& p, const BlurKernel& k, ConvolvePath path = ConvolvePath::fft) {
  require(k.size() <= p.width && k.size() <= p.height, "kernel larger than image");
  return path == ConvolvePath::spatial ? convolve_spatial(p, k) : convolve_fft(p, k);
}

/// Per-channel 2-D convolution with reflect boundary handling.
inline RasterImage convolve(const RasterImage& img, const BlurKernel& k, ConvolvePath path = ConvolvePath::fft) {
  return map_planes(img, [&](const Plane& p) { return convolve(p, k, path); });
}

namespace detail {
inline double reflect_coord(double v, int n) {
  // Continuous half-sample reflection about -0.5 and n - 0.5.
  const double period = 2.0 * n;
  double t = std::fmod(v + 0.5, period);
  if (t < 0) t += period;
  if (t >= n) t = period - t;
  return t - 0.5;
}

inline float bilinear_reflect(const Plane& p, double x, double y) {
  x = std::clamp(reflect_coord(x, p.width), 0.0, static_cast<double>(p.width - 1));
  y = std::clamp(reflect_coord(y, p.height), 0.0, static_cast<double>(p.height - 1));
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, p.width - 1);
  const int y1 = std::min(y0 + 1, p.height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  const double top = p.at(x0, y0) + fx * (p.at(x1, y0) - p.at(x0, y0));
  const double bottom = p.at(x0, y1) + fx * (p.at(x1, y1) - p.at(x0, y1));
  return static_cast<float>(top + fy * (bottom - top));
}
}  // namespace detail

/// Rotational smear: mean of `samples` bilinear rotations about `center`,
/// angles evenly spaced over [-extent/2, +extent/2].
inline RasterImage spin_blur(const RasterImage& img, double center_x, double center_y, double extent_degrees, int samples = 32) {
  require(samples >= 1, "spin blur needs at least one sample");
  require(extent_degrees > 0.0, "spin extent must be positive");
  std::vector<double> cs, sn;
  for (int i = 0; i < samples; ++i) {
    const double a = (-0.5 * extent_degrees + extent_degrees * (i + 0.5) / samples) * std::numbers::pi / 180.0;
    cs.push_back(std::cos(a));
    sn.push_back(std::sin(a));
  }
  return map_planes(img, [&](const Plane& p) {
    Plane out(p.width, p.height);
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) {
        const double dx = x - center_x;
        const double dy = y - center_y;
        double acc = 0.0;
        for (int i = 0; i < samples; ++i) {
          const double sx = center_x + cs[static_cast<std::size_t>(i)] * dx + sn[static_cast<std::size_t>(i)] * dy;
          const double sy = center_y - sn[static_cast<std::size_t>(i)] * dx + cs[static_cast<std::size_t>(i)] * dy;
          acc += detail::bilinear_reflect(p, sx, sy);
        }
        out.at(x, y) = static_cast<float>(acc / samples);
      }
    return out;
  });
}

/// Poisson photon noise: value * photons counts, rescaled back.
inline RasterImage shot_noise(const RasterImage& img, double photons_at_full_scale, std::uint64_t seed) {
  require(std::isfinite(photons_at_full_scale) && photons_at_full_scale > 0.0, "photon count must be positive");
  std::mt19937_64 rng(seed);
  return map_planes(img, [&](const Plane& p) {
    Plane out(p.width, p.height);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double lambda = std::max(0.0, static_cast<double>(p.data[i])) * photons_at_full_scale;
      double count = 0.0;
      if (lambda > 0.0) {
        std::poisson_distribution<long long> dist(lambda);
        count = static_cast<double>(dist(rng));
      }
      out.data[i] = static_cast<float>(count / photons_at_full_scale);
    }
    return out;
  });
}

// ---------------------------------------------------------------------------
// Degradation chains

struct GaussianStep { double sigma = 1.0; };
struct DefocusStep { double radius = 4.0; int supersample = 4; };
struct ShotStep { double photons = 2000.0; };
struct MotionStep { double length = 5.0; double angle_degrees = 0.0; };
struct SpinStep {
  double extent_degrees = 1.0;
  int samples = 32;
  std::optional<double> center_x;  ///< defaults to the image center
  std::optional<double> center_y;
};

using DegradeStep = std::variant<GaussianStep, DefocusStep, ShotStep, MotionStep, SpinStep>;

struct DegradeSpec {
  std::vector<DegradeStep> steps;
  std::uint64_t seed = 0;

  void validate() const {
    require(!steps.empty(), "degradation spec has no steps");
    for (const auto& step : steps) {
      std::visit(
          [](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, GaussianStep>) require(s.sigma > 0.0, "gaussian sigma must be positive");
            if constexpr (std::is_same_v<S, DefocusStep>) require(s.radius >= 0.0 && s.supersample >= 1, "defocus radius must be >= 0");
            if constexpr (std::is_same_v<S, ShotStep>) require(s.photons > 0.0, "shot photons must be positive");
            if constexpr (std::is_same_v<S, MotionStep>) require(s.length >= 1.0, "motion length must be >= 1");
            if constexpr (std::is_same_v<S, SpinStep>) require(s.extent_degrees > 0.0 && s.samples >= 1, "spin extent must be positive");
          },
          step);
    }
  }
};

/// SplitMix64 finalizer over (seed, step index).
inline std::uint64_t step_seed(std::uint64_t seed, std::size_t index) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline RasterImage apply(const DegradeSpec& spec, const RasterImage& img) {
  spec.validate();
  RasterImage cur = img;
  for (std::size_t i = 0; i < spec.steps.size(); ++i) {
    cur = std::visit(
        [&](const auto& s) -> RasterImage {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, GaussianStep>) return convolve(cur, gaussian_kernel(s.sigma));
          if constexpr (std::is_same_v<S, DefocusStep>) return convolve(cur, disk_kernel(s.radius, s.supersample));
          if constexpr (std::is_same_v<S, MotionStep>) return convolve(cur, motion_kernel(s.length, s.angle_degrees));
          if constexpr (std::is_same_v<S, ShotStep>) return shot_noise(cur, s.photons, step_seed(spec.seed, i));
          if constexpr (std::is_same_v<S, SpinStep>)
            return spin_blur(cur, s.center_x.value_or(0.5 * (cur.width() - 1)), s.center_y.value_or(0.5 * (cur.height() - 1)),
                             s.extent_degrees, s.samples);
        },
        spec.steps[i]);
  }
  return cur;
}

/// Parses {"seed": n, "steps": [{"kind": "defocus", "radius": 4}, ...]}.
inline DegradeSpec degrade_spec_from_json(const nlohmann::json& j) {
  DegradeSpec spec;
  try {
    spec.seed = j.value("seed", std::uint64_t{0});
    for (const auto& s : j.at("steps")) {
      const auto kind = s.at("kind").get<std::string>();
      if (kind == "gaussian") {
        spec.steps.emplace_back(GaussianStep{s.at("sigma").get<double>()});
      } else if (kind == "defocus") {
        spec.steps.emplace_back(DefocusStep{s.at("radius").get<double>(), s.value("supersample", 4)});
      } else if (kind == "shot") {
        spec.steps.emplace_back(ShotStep{s.at("photons").get<double>()});
      } else if (kind == "motion") {
        spec.steps.emplace_back(MotionStep{s.at("length").get<double>(), s.value("angle", 0.0)});
      } else if (kind == "spin") {
        SpinStep step{s.at("extent").get<double>(), s.value("samples", 32), std::nullopt, std::nullopt};
        if (s.contains("center")) {
          step.center_x = s.at("center").at(0).get<double>();
          step.center_y = s.at("center").at(1).get<double>();
        }
        spec.steps.emplace_back(step);
      } else {
        throw FormatError("unknown degradation kind: " + kind);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid degradation spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

/// Documented defaults for randomized augmentation (not from any reference
/// training run).
struct AugmentationRanges {
  double sigma_min = 0.5, sigma_max = 3.0;
  double radius_min = 2.0, radius_max = 8.0;
  double motion_min = 3.0, motion_max = 15.0;
  double spin_min = 0.5, spin_max = 3.0;
  double photons_min = 500.0, photons_max = 5000.0;
};

}  // namespace eodeblur
