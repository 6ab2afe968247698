#pragma once

// Full-reference (PSNR, SSIM) and natural-scene-statistics quality measures,
// plus Sobel edge maps.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "eodeblur/degrade.hpp"
#include "eodeblur/imagecore.hpp"

namespace eodeblur {

struct QualityReport {
  std::optional<double> ssim;
  std::optional<double> psnr_db;
  std::optional<double> niqe;
  std::optional<double> brisque;

  bool any() const noexcept { return ssim || psnr_db || niqe || brisque; }
};

inline nlohmann::json to_json(const QualityReport& r) {
  nlohmann::json j = {{"schema_version", 1}};
  if (r.ssim) j["ssim"] = *r.ssim;
  if (r.psnr_db) {
    if (std::isinf(*r.psnr_db))
      j["psnr_db"] = "inf";
    else
      j["psnr_db"] = *r.psnr_db;
  }
  if (r.niqe) j["niqe"] = *r.niqe;
  if (r.brisque) j["brisque"] = *r.brisque;
  return j;
}

/// 10 log10(1 / MSE) over all channels; +inf for identical images.
inline double psnr(const RasterImage& a, const RasterImage& b) {
  require(a.same_shape(b), "psnr requires images of identical shape");
  double se = 0.0;
  std::size_t n = 0;
  for (int c = 0; c < a.channels(); ++c) {
    const auto& pa = a.plane(c).data;
    const auto& pb = b.plane(c).data;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
      se += d * d;
    }
    n += pa.size();
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(n) / se);
}

namespace detail {

inline std::vector<double> normalized_gaussian(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double c = 0.5 * (size - 1);
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    g[static_cast<std::size_t>(i)] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
    sum += g[static_cast<std::size_t>(i)];
  }
  for (auto& v : g) v /= sum;
  return g;
}

/// Row-major double image.
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<double> v;
  Grid() = default;
  Grid(int w, int h) : width(w), height(h), v(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0.0) {}
  double& at(int x, int y) { return v[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x]; }
};

inline Grid to_grid(const Plane& p) {
  Grid g(p.width, p.height);
  for (std::size_t i = 0; i < p.size(); ++i) g.v[i] = p.data[i];
  return g;
}

/// Separable filter, "valid" region only.
inline Grid filter_valid(const Grid& in, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = in.width - n + 1;
  const int oh = in.height - n + 1;
  Grid tmp(ow, in.height);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * in.at(x + i, y);
      tmp.at(x, y) = s;
    }
  Grid out(ow, oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * tmp.at(x, y + i);
      out.at(x, y) = s;
    }
  return out;
}

/// Separable filter with reflect boundary, same-size output.
inline Grid filter_same(const Grid& in, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int r = n / 2;
  Grid tmp(in.width, in.height);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * in.at(reflect_index(x + i - r, in.width), y);
      tmp.at(x, y) = s;
    }
  Grid out(in.width, in.height);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[static_cast<std::size_t>(i)] * tmp.at(x, reflect_index(y + i - r, in.height));
      out.at(x, y) = s;
    }
  return out;
}

}  // namespace detail

/// Mean local SSIM on luminance (11x11 Gaussian window, sigma 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range 1), valid window positions only.
inline double ssim(const RasterImage& a, const RasterImage& b) {
  require(a.width() == b.width() && a.height() == b.height(), "ssim requires images of identical dimensions");
  constexpr int window = 11;
  require(a.width() >= window && a.height() >= window, "image smaller than the SSIM window");
  const auto g = detail::normalized_gaussian(window, 1.5);
  const detail::Grid x = detail::to_grid(luminance(a));
  const detail::Grid y = detail::to_grid(luminance(b));
  detail::Grid xx(x.width, x.height), yy(x.width, x.height), xy(x.width, x.height);
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    xx.v[i] = x.v[i] * x.v[i];
    yy.v[i] = y.v[i] * y.v[i];
    xy.v[i] = x.v[i] * y.v[i];
  }
  const auto mx = detail::filter_valid(x, g);
  const auto my = detail::filter_valid(y, g);
  const auto sxx = detail::filter_valid(xx, g);
  const auto syy = detail::filter_valid(yy, g);
  const auto sxy = detail::filter_valid(xy, g);
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  double total = 0.0;
  for (std::size_t i = 0; i < mx.v.size(); ++i) {
    const double ux = mx.v[i], uy = my.v[i];
    const double vx = sxx.v[i] - ux * ux;
    const double vy = syy.v[i] - uy * uy;
    const double cov = sxy.v[i] - ux * uy;
    total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.v.size());
}

// ---------------------------------------------------------------------------
// Natural scene statistics

struct MscnResult {
  detail::Grid coefficients;
  detail::Grid local_sigma;
};

/// Mean-subtracted contrast-normalized coefficients (I - mu) / (sigma + c)
/// with a 7x7 Gaussian (sigma 7/6) local window. The default stabilizer is
/// the customary 1 on a [0,255] scale.
inline MscnResult mscn_detailed(const Plane& plane, double stabilizer = 1.0 / 255.0) {
  require(plane.width >= 7 && plane.height >= 7, "MSCN needs at least a 7x7 plane");
  const auto g = detail::normalized_gaussian(7, 7.0 / 6.0);
  const detail::Grid in = detail::to_grid(plane);
  detail::Grid sq(in.width, in.height);
  for (std::size_t i = 0; i < in.v.size(); ++i) sq.v[i] = in.v[i] * in.v[i];
  const auto mu = detail::filter_same(in, g);
  const auto m2 = detail::filter_same(sq, g);
  MscnResult r{detail::Grid(in.width, in.height), detail::Grid(in.width, in.height)};
  for (std::size_t i = 0; i < in.v.size(); ++i) {
    const double sigma = std::sqrt(std::abs(m2.v[i] - mu.v[i] * mu.v[i]));
    r.local_sigma.v[i] = sigma;
    r.coefficients.v[i] = (in.v[i] - mu.v[i]) / (sigma + stabilizer);
  }
  return r;
}

inline Plane mscn(const Plane& plane, double stabilizer = 1.0 / 255.0) {
  const auto r = mscn_detailed(plane, stabilizer);
  Plane out(plane.width, plane.height);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = static_cast<float>(r.coefficients.v[i]);
  return out;
}

struct AggdParams {
  double alpha = 2.0;
  double sigma_left = 0.0;
  double sigma_right = 0.0;
};

namespace detail {

struct RhoTable {
  std::vector<double> alpha;
  std::vector<double> rho;
  RhoTable() {
    for (int i = 0; i <= 9800; ++i) {
      const double a = 0.2 + 0.001 * i;
      alpha.push_back(a);
      rho.push_back(std::exp(2.0 * std::lgamma(2.0 / a) - std::lgamma(1.0 / a) - std::lgamma(3.0 / a)));
    }
  }
  static const RhoTable& get() {
    static const RhoTable table;
    return table;
  }
  /// Table entry whose rho is closest to `target` (rho increases with alpha).
  double invert(double target) const {
    const auto it = std::lower_bound(rho.begin(), rho.end(), target);
    if (it == rho.begin()) return alpha.front();
    if (it == rho.end()) return alpha.back();
    const auto hi = static_cast<std::size_t>(it - rho.begin());
    const auto lo = hi - 1;
    return (target - rho[lo] <= rho[hi] - target) ? alpha[lo] : alpha[hi];
  }
};

template <class Range>
AggdParams aggd_fit_unchecked(const Range& samples) {
  double left_sq = 0.0, right_sq = 0.0, abs_sum = 0.0, sq_sum = 0.0;
  std::size_t left_n = 0, right_n = 0, n = 0;
  for (double x : samples) {
    if (x < 0.0) {
      left_sq += x * x;
      ++left_n;
    } else if (x > 0.0) {
      right_sq += x * x;
      ++right_n;
    }
    abs_sum += std::abs(x);
    sq_sum += x * x;
    ++n;
  }
  AggdParams p;
  if (n == 0 || sq_sum <= 0.0) return p;
  p.sigma_left = left_n ? std::sqrt(left_sq / static_cast<double>(left_n)) : 0.0;
  p.sigma_right = right_n ? std::sqrt(right_sq / static_cast<double>(right_n)) : 0.0;
  const double mean_abs = abs_sum / static_cast<double>(n);
  const double r_hat = mean_abs * mean_abs / (sq_sum / static_cast<double>(n));
  double r_norm = r_hat;
  if (p.sigma_right > 0.0) {
    const double g = p.sigma_left / p.sigma_right;
    r_norm = r_hat * (g * g * g + 1.0) * (g + 1.0) / ((g * g + 1.0) * (g * g + 1.0));
  }
  p.alpha = RhoTable::get().invert(r_norm);
  return p;
}

}  // namespace detail

/// Asymmetric generalized Gaussian fit by moment matching on the
/// Gamma-ratio table over alpha in [0.2, 10] (step 0.001).
inline AggdParams aggd_fit(const std::vector<double>& samples) {
  require(samples.size() >= 100, "AGGD fit needs at least 100 samples");
  require(std::any_of(samples.begin(), samples.end(), [](double v) { return v != 0.0; }), "AGGD fit on all-zero samples");
  return detail::aggd_fit_unchecked(samples);
}

inline constexpr int kNssFeatureCount = 36;
using NssFeatures = std::array<double, kNssFeatureCount>;

namespace detail {

inline double gamma_ratio_scale(double alpha) { return std::sqrt(std::exp(std::lgamma(1.0 / alpha) - std::lgamma(3.0 / alpha))); }

// Appends the 18 single-scale features of one MSCN region:
// [alpha, variance] of the coefficients, then [alpha, eta, var_left,
// var_right] for the H, V, D1 and D2 neighbour products.
inline void region_features(const Grid& m, const Rect& r, double* out) {
  std::vector<double> buf;
  buf.reserve(static_cast<std::size_t>(r.w) * r.h);
  for (int y = r.y; y < r.y + r.h; ++y)
    for (int x = r.x; x < r.x + r.w; ++x) buf.push_back(m.at(x, y));
  const AggdParams base = aggd_fit_unchecked(buf);
  double var = 0.0;
  for (double v : buf) var += v * v;
  out[0] = base.alpha;
  out[1] = buf.empty() ? 0.0 : var / static_cast<double>(buf.size());
  static constexpr int shifts[4][2] = {{1, 0}, {0, 1}, {1, 1}, {1, -1}};
  for (int s = 0; s < 4; ++s) {
    const int dx = shifts[s][0];
    const int dy = shifts[s][1];
    buf.clear();
    for (int y = r.y; y < r.y + r.h; ++y) {
      const int y2 = y + dy;
      if (y2 < r.y || y2 >= r.y + r.h) continue;
      for (int x = r.x; x + dx < r.x + r.w; ++x) buf.push_back(m.at(x, y) * m.at(x + dx, y2));
    }
    const AggdParams p = aggd_fit_unchecked(buf);
    const double scale = gamma_ratio_scale(p.alpha);
    const double eta = (p.sigma_right - p.sigma_left) * scale * std::exp(std::lgamma(2.0 / p.alpha) - std::lgamma(1.0 / p.alpha));
    double* o = out + 2 + 4 * s;
    o[0] = p.alpha;
    o[1] = eta;
    o[2] = p.sigma_left * p.sigma_left;
    o[3] = p.sigma_right * p.sigma_right;
  }
}

inline Plane even_crop(const Plane& p) { return crop(p, {0, 0, p.width - p.width % 2, p.height - p.height % 2}); }

}  // namespace detail

/// Two-scale MSCN analysis reused by whole-image and per-patch features.
struct NssAnalysis {
  MscnResult full;
  MscnResult half;

  explicit NssAnalysis(const RasterImage& img) {
    const Plane y = detail::even_crop(luminance(img));
    full = mscn_detailed(y);
    half = mscn_detailed(downscale(y, 2));
  }

  /// Features of a full-resolution region (coordinates even-aligned).
  NssFeatures features(const Rect& r) const {
    NssFeatures f{};
    detail::region_features(full.coefficients, r, f.data());
    detail::region_features(half.coefficients, {r.x / 2, r.y / 2, r.w / 2, r.h / 2}, f.data() + 18);
    return f;
  }

  double mean_sigma(const Rect& r) const {
    double s = 0.0;
    for (int y = r.y; y < r.y + r.h; ++y)
      for (int x = r.x; x < r.x + r.w; ++x) s += full.local_sigma.at(x, y);
    return s / (static_cast<double>(r.w) * r.h);
  }
};

/// 36 natural-scene-statistics features: 18 at full resolution followed by
/// 18 at half resolution, each scale ordered as documented in
/// detail::region_features.
inline NssFeatures nss_features(const RasterImage& img) {
  require(std::min(img.width(), img.height()) >= 64, "NSS features need an image of at least 64x64");
  const NssAnalysis a(img);
  return a.features({0, 0, a.full.coefficients.width, a.full.coefficients.height});
}

// ---------------------------------------------------------------------------
// Edges

struct BinaryMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;
  std::size_t count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1})); }
  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
};

/// Sobel gradient magnitude of the luminance, reflect boundary.
inline Plane sobel_magnitude(const RasterImage& img) {
  const Plane y = luminance(img);
  Plane out(y.width, y.height);
  auto px = [&](int x, int yy) -> double { return y.at(reflect_index(x, y.width), reflect_index(yy, y.height)); };
  for (int yy = 0; yy < y.height; ++yy)
    for (int x = 0; x < y.width; ++x) {
      const double gx = (px(x + 1, yy - 1) + 2.0 * px(x + 1, yy) + px(x + 1, yy + 1)) - (px(x - 1, yy - 1) + 2.0 * px(x - 1, yy) + px(x - 1, yy + 1));
      const double gy = (px(x - 1, yy + 1) + 2.0 * px(x, yy + 1) + px(x + 1, yy + 1)) - (px(x - 1, yy - 1) + 2.0 * px(x, yy - 1) + px(x + 1, yy - 1));
      out.at(x, yy) = static_cast<float>(std::sqrt(gx * gx + gy * gy));
    }
  return out;
}

inline BinaryMap sobel_edges(const RasterImage& img, double threshold) {
  require(threshold >= 0.0, "edge threshold must be non-negative");
  const Plane mag = sobel_magnitude(img);
  BinaryMap m{mag.width, mag.height, std::vector<std::uint8_t>(mag.size())};
  for (std::size_t i = 0; i < mag.size(); ++i) m.bits[i] = mag.data[i] > threshold ? 1 : 0;
  return m;
}

inline RasterImage to_image(const BinaryMap& m) {
  Plane p(m.width, m.height);
  for (std::size_t i = 0; i < m.bits.size(); ++i) p.data[i] = m.bits[i] ? 1.0f : 0.0f;
  return gray_image(std::move(p));
}

}  // namespace eodeblur
