#pragma once

// Frequency-domain analysis of degraded/reference pairs and blind kernel
// estimation, both nonparametric (regularized spectral division) and
// parametric (defocus radius grid search on radial spectra).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "eodeblur/degrade.hpp"
#include "eodeblur/fft.hpp"
#include "eodeblur/imagecore.hpp"

namespace eodeblur {

struct SpectralProfile {
  std::vector<double> radial_frequency;  ///< cycles/pixel, bin centers
  std::vector<double> value;             ///< mean spectrum value per bin
  std::size_t bins() const noexcept { return value.size(); }
};

inline nlohmann::json to_json(const SpectralProfile& p) {
  return {{"schema_version", 1}, {"bins", p.bins()}, {"radial_frequency", p.radial_frequency}, {"log_magnitude", p.value}};
}

struct OtfEstimate {
  ComplexPlane values;
  double regularization_eps = 0.0;
  int width() const noexcept { return values.width; }
  int height() const noexcept { return values.height; }
};

/// Raised-cosine border taper covering `fraction` of each dimension.
inline Plane apodize(const Plane& p, double fraction = 0.08) {
  auto ramp = [fraction](int n) {
    std::vector<double> w(static_cast<std::size_t>(n), 1.0);
    const int band = std::max(1, static_cast<int>(std::lround(fraction * n)));
    for (int i = 0; i < std::min(band, n); ++i) {
      const double v = 0.5 - 0.5 * std::cos(std::numbers::pi * (i + 0.5) / band);
      w[static_cast<std::size_t>(i)] = std::min(w[static_cast<std::size_t>(i)], v);
      w[static_cast<std::size_t>(n - 1 - i)] = std::min(w[static_cast<std::size_t>(n - 1 - i)], v);
    }
    return w;
  };
  const auto wx = ramp(p.width);
  const auto wy = ramp(p.height);
  Plane out(p.width, p.height);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x)
      out.at(x, y) = static_cast<float>(p.at(x, y) * wx[static_cast<std::size_t>(x)] * wy[static_cast<std::size_t>(y)]);
  return out;
}

/// log(1 + |FFT|) of the luminance, DC at the center.
inline Plane log_spectrum(const RasterImage& img) {
  const ComplexPlane spec = fft2(luminance(img));
  Plane mag(spec.width, spec.height);
  for (std::size_t i = 0; i < spec.size(); ++i) mag.data[i] = static_cast<float>(std::log1p(std::abs(spec.data[i])));
  return fftshift(mag);
}

/// |FFT| of the apodized luminance, DC at the center.
inline Plane magnitude_spectrum(const RasterImage& img) {
  const ComplexPlane spec = fft2(apodize(luminance(img)));
  Plane mag(spec.width, spec.height);
  for (std::size_t i = 0; i < spec.size(); ++i) mag.data[i] = static_cast<float>(std::abs(spec.data[i]));
  return fftshift(mag);
}

/// Mean of a centered spectrum plane over equal-width radial frequency bins
/// spanning [0, sqrt(2)/2] cycles/pixel. Empty bins repeat the previous bin.
inline SpectralProfile radial_profile(const Plane& spectrum, int bins) {
  require(bins >= 2, "radial profile needs at least two bins");
  const double max_rho = 0.5 * std::numbers::sqrt2;
  const double step = max_rho / bins;
  std::vector<double> sum(static_cast<std::size_t>(bins), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
  const int cx = spectrum.width / 2;
  const int cy = spectrum.height / 2;
  for (int y = 0; y < spectrum.height; ++y) {
    const double fy = static_cast<double>(y - cy) / spectrum.height;
    for (int x = 0; x < spectrum.width; ++x) {
      const double fx = static_cast<double>(x - cx) / spectrum.width;
      const int b = std::min(bins - 1, static_cast<int>(std::hypot(fx, fy) / step));
      sum[static_cast<std::size_t>(b)] += spectrum.at(x, y);
      ++count[static_cast<std::size_t>(b)];
    }
  }
  SpectralProfile prof;
  prof.radial_frequency.resize(static_cast<std::size_t>(bins));
  prof.value.resize(static_cast<std::size_t>(bins));
  for (int b = 0; b < bins; ++b) {
    prof.radial_frequency[static_cast<std::size_t>(b)] = (b + 0.5) * step;
    if (count[static_cast<std::size_t>(b)] > 0) {
      prof.value[static_cast<std::size_t>(b)] = sum[static_cast<std::size_t>(b)] / static_cast<double>(count[static_cast<std::size_t>(b)]);
    } else {
      prof.value[static_cast<std::size_t>(b)] = b > 0 ? prof.value[static_cast<std::size_t>(b - 1)] : 0.0;
    }
  }
  return prof;
}

/// Regularized spectral division H = D conj(R) / (|R|^2 + eps) on apodized
/// luminance. Without `eps`, uses 1e-2 * mean |R|^2.
inline OtfEstimate estimate_otf(const RasterImage& degraded, const RasterImage& reference, std::optional<double> eps = std::nullopt) {
  require(degraded.width() == reference.width() && degraded.height() == reference.height(),
          "degraded and reference dimensions differ");
  const ComplexPlane d = fft2(apodize(luminance(degraded)));
  const ComplexPlane r = fft2(apodize(luminance(reference)));
  double mean_power = 0.0;
  for (const auto& v : r.data) mean_power += std::norm(v);
  mean_power /= static_cast<double>(r.size());
  const double e = eps.value_or(mean_power > 0.0 ? 1e-2 * mean_power : 1e-12);
  require(e > 0.0, "regularization eps must be positive");
  OtfEstimate est;
  est.regularization_eps = e;
  est.values = ComplexPlane(d.width, d.height);
  for (std::size_t i = 0; i < d.size(); ++i) est.values.data[i] = d.data[i] * std::conj(r.data[i]) / (std::norm(r.data[i]) + e);
  return est;
}

/// Inverse transform, center crop to `support`, clip negatives, renormalize.
inline BlurKernel kernel_from_otf(const OtfEstimate& otf, int support) {
  require(support >= 1 && support % 2 == 1, "kernel support must be odd");
  require(support <= std::min(otf.width(), otf.height()), "kernel support exceeds OTF dimensions");
  const ComplexPlane spatial = ifft2(otf.values);
  const int r = support / 2;
  std::vector<double> taps(static_cast<std::size_t>(support) * support, 0.0);
  double sum = 0.0;
  for (int v = 0; v < support; ++v)
    for (int u = 0; u < support; ++u) {
      const int x = (u - r + otf.width()) % otf.width();
      const int y = (v - r + otf.height()) % otf.height();
      const double t = std::max(0.0, spatial.at(x, y).real());
      taps[static_cast<std::size_t>(v) * support + u] = t;
      sum += t;
    }
  if (!(sum > 0.0)) return BlurKernel::identity().resized(support);
  return BlurKernel::from_taps(support, std::move(taps));
}

/// Zero-mean normalized cross-correlation of two kernels, the smaller one
/// zero-padded to the larger size.
inline double kernel_ncc(const BlurKernel& a, const BlurKernel& b) {
  const int n = std::max(a.size(), b.size());
  const std::vector<double> ta = a.resized(n).taps();
  const std::vector<double> tb = b.resized(n).taps();
  const double ma = 1.0 / (static_cast<double>(n) * n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    const double da = ta[i] - ma;
    const double db = tb[i] - ma;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return saa == sbb ? 1.0 : 0.0;
  return sab / std::sqrt(saa * sbb);
}

struct RadiusFit {
  double radius = 0.0;
  double residual = 0.0;
};

/// Grid search for the disk radius whose blur of the reference best matches
/// the degraded radial magnitude spectrum. Ties resolve to the smaller radius.
inline RadiusFit fit_defocus_radius(const RasterImage& degraded, const RasterImage& reference, const std::vector<double>& radius_grid) {
  require(!radius_grid.empty(), "radius grid is empty");
  require(degraded.width() == reference.width() && degraded.height() == reference.height(),
          "degraded and reference dimensions differ");
  const RasterImage ref_y = gray_image(luminance(reference));
  const int bins = std::max(2, std::min(degraded.width(), degraded.height()) / 2);
  const auto target = radial_profile(magnitude_spectrum(degraded), bins);
  RadiusFit best{0.0, std::numeric_limits<double>::infinity()};
  for (double r : radius_grid) {
    const auto candidate = radial_profile(magnitude_spectrum(convolve(ref_y, disk_kernel(r))), bins);
    double res = 0.0;
    for (std::size_t b = 0; b < target.value.size(); ++b) {
      const double d = target.value[b] - candidate.value[b];
      res += d * d;
    }
    if (res < best.residual || (res == best.residual && r < best.radius)) best = {r, res};
  }
  return best;
}

}  // namespace eodeblur
