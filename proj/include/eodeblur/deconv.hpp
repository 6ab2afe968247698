#pragma once

// Classical non-blind restoration: Wiener filtering, Richardson-Lucy, and
// border tapering against wrap-around ringing.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "eodeblur/degrade.hpp"
#include "eodeblur/fft.hpp"
#include "eodeblur/imagecore.hpp"
#include "eodeblur/memory.hpp"

namespace eodeblur {

/// Wiener filter of one plane against a precomputed OTF, without clamping.
inline Plane wiener_unclamped(const Plane& observed, const ComplexPlane& otf, double nsr) {
  require(nsr >= 0.0, "nsr must be non-negative");
  require(otf.width == observed.width && otf.height == observed.height, "OTF does not match plane");
  ComplexPlane spec = fft2(observed);
  for (std::size_t i = 0; i < spec.size(); ++i) {
    const Complex h = otf.data[i];
    const double denom = std::norm(h) + nsr;
    spec.data[i] = denom > 1e-300 ? std::conj(h) * spec.data[i] / denom : Complex(0.0, 0.0);
  }
  return ifft2_real(std::move(spec));
}

enum class WienerBoundary { periodic, symmetric };

/// Half-sample mirror of a plane into a 2W x 2H periodic tile. For a
/// centrosymmetric kernel, reflect-boundary blur of the original equals
/// circular blur of this extension.
inline Plane symmetric_extension(const Plane& p) {
  Plane out(2 * p.width, 2 * p.height);
  for (int y = 0; y < out.height; ++y) {
    const int sy = y < p.height ? y : 2 * p.height - 1 - y;
    for (int x = 0; x < out.width; ++x) out.at(x, y) = p.at(x < p.width ? x : 2 * p.width - 1 - x, sy);
  }
  return out;
}

/// Per-channel Wiener deconvolution with a scalar noise-to-signal ratio.
/// `periodic` filters the image as given; `symmetric` filters its mirrored
/// extension and crops back. Output is clamped to [0,1].
inline RasterImage wiener(const RasterImage& img, const BlurKernel& k, double nsr,
                          WienerBoundary boundary = WienerBoundary::periodic) {
  require(nsr >= 0.0, "nsr must be non-negative");
  require(k.size() <= img.width() && k.size() <= img.height(), "kernel larger than image");
  const int scale = boundary == WienerBoundary::symmetric ? 2 : 1;
  const ComplexPlane otf = kernel_otf(k.taps(), k.size(), scale * img.width(), scale * img.height());
  return map_planes(img, [&](const Plane& p) {
    Plane out = scale == 1 ? wiener_unclamped(p, otf, nsr) : crop(wiener_unclamped(symmetric_extension(p), otf, nsr), Rect{0, 0, p.width, p.height});
    for (auto& v : out.data) v = std::clamp(v, 0.0f, 1.0f);
    return out;
  });
}

/// Linear blur operator with reflect boundary (A) and its exact adjoint,
/// evaluated on the reflect-padded domain in double precision.
class ReflectBlurOperator {
 public:
  ReflectBlurOperator(const BlurKernel& k, int width, int height)
      : width_(width), height_(height), r_(k.radius()), pw_(width + 2 * k.radius()), ph_(height + 2 * k.radius()),
        otf_(kernel_otf(k.taps(), k.size(), pw_, ph_)) {
    require(k.size() <= width && k.size() <= height, "kernel larger than image");
  }

  tracked_vector<double> forward(const tracked_vector<double>& x) const {
    ComplexPlane buf(pw_, ph_);
    for (int y = 0; y < ph_; ++y) {
      const int sy = reflect_index(y - r_, height_);
      for (int xx = 0; xx < pw_; ++xx) buf.at(xx, y) = x[static_cast<std::size_t>(sy) * width_ + reflect_index(xx - r_, width_)];
    }
    fft2_inplace(buf, FftDirection::forward);
    for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] *= otf_.data[i];
    fft2_inplace(buf, FftDirection::inverse);
    const double inv = 1.0 / static_cast<double>(buf.size());
    tracked_vector<double> out(static_cast<std::size_t>(width_) * height_);
    for (int y = 0; y < height_; ++y)
      for (int xx = 0; xx < width_; ++xx) out[static_cast<std::size_t>(y) * width_ + xx] = buf.at(xx + r_, y + r_).real() * inv;
    return out;
  }

  tracked_vector<double> adjoint(const tracked_vector<double>& z) const {
    ComplexPlane buf(pw_, ph_);
    for (int y = 0; y < height_; ++y)
      for (int xx = 0; xx < width_; ++xx) buf.at(xx + r_, y + r_) = z[static_cast<std::size_t>(y) * width_ + xx];
    fft2_inplace(buf, FftDirection::forward);
    for (std::size_t i = 0; i < buf.size(); ++i) buf.data[i] *= std::conj(otf_.data[i]);
    fft2_inplace(buf, FftDirection::inverse);
    const double inv = 1.0 / static_cast<double>(buf.size());
    tracked_vector<double> out(static_cast<std::size_t>(width_) * height_, 0.0);
    for (int y = 0; y < ph_; ++y) {
      const int sy = reflect_index(y - r_, height_);
      for (int xx = 0; xx < pw_; ++xx)
        out[static_cast<std::size_t>(sy) * width_ + reflect_index(xx - r_, width_)] += buf.at(xx, y).real() * inv;
    }
    return out;
  }

 private:
  int width_, height_, r_, pw_, ph_;
  ComplexPlane otf_;
};

/// Poisson log-likelihood sum(y log(mu) - mu), constant terms dropped.
inline double poisson_log_likelihood(const tracked_vector<double>& observed, const tracked_vector<double>& predicted) {
  double ll = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double mu = std::max(predicted[i], 1e-12);
    ll += observed[i] * std::log(mu) - mu;
  }
  return ll;
}

struct RichardsonLucyTrace {
  RasterImage image;
  /// Per channel, log-likelihood of the blurred estimate at t = 0..iterations.
  std::vector<std::vector<double>> log_likelihood;
};

/// Multiplicative EM iterations x <- x * A^T(y / A x) / A^T 1, started at
/// the observation. In the interior A^T 1 == 1 and the update reduces to the
/// textbook k* (y / (k x)) form.
inline RichardsonLucyTrace richardson_lucy_traced(const RasterImage& img, const BlurKernel& k, int iterations) {
  require(iterations >= 1, "Richardson-Lucy needs at least one iteration");
  const ReflectBlurOperator op(k, img.width(), img.height());
  const tracked_vector<double> ones(img.pixel_count(), 1.0);
  const tracked_vector<double> norm = op.adjoint(ones);
  RichardsonLucyTrace trace;
  trace.image = map_planes(img, [&](const Plane& p) {
    tracked_vector<double> y(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) y[i] = std::max(0.0, static_cast<double>(p.data[i]));
    tracked_vector<double> x = y;
    std::vector<double> ll;
    tracked_vector<double> ax = op.forward(x);
    for (int t = 0; t < iterations; ++t) {
      ll.push_back(poisson_log_likelihood(y, ax));
      tracked_vector<double> ratio(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) ratio[i] = y[i] / std::max(ax[i], 1e-12);
      const tracked_vector<double> corr = op.adjoint(ratio);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::max(0.0, x[i] * corr[i] / std::max(norm[i], 1e-12));
      ax = op.forward(x);
    }
    ll.push_back(poisson_log_likelihood(y, ax));
    trace.log_likelihood.push_back(std::move(ll));
    Plane out(p.width, p.height);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = static_cast<float>(x[i]);
    return out;
  });
  return trace;
}

inline RasterImage richardson_lucy(const RasterImage& img, const BlurKernel& k, int iterations) {
  return richardson_lucy_traced(img, k, iterations).image;
}

/// Blends the border band (width = kernel radius) toward the periodically
/// blurred image so the wrap-around seam matches the circular blur model.
/// Pixels farther than the radius from every border are returned unchanged.
inline RasterImage edge_taper(const RasterImage& img, const BlurKernel& k) {
  const int r = k.radius();
  if (r == 0) return img;
  require(k.size() <= img.width() && k.size() <= img.height(), "kernel larger than image");
  const ComplexPlane otf = kernel_otf(k.taps(), k.size(), img.width(), img.height());
  std::vector<float> alpha(static_cast<std::size_t>(r + 1));
  for (int d = 0; d <= r; ++d)
    alpha[static_cast<std::size_t>(d)] = static_cast<float>(0.5 + 0.5 * std::cos(std::numbers::pi * (d + 0.5) / (r + 1)));
  return map_planes(img, [&](const Plane& p) {
    ComplexPlane spec = fft2(p);
    for (std::size_t i = 0; i < spec.size(); ++i) spec.data[i] *= otf.data[i];
    const Plane blurred = ifft2_real(std::move(spec));
    Plane out = p;
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) {
        const int d = std::min({x, y, p.width - 1 - x, p.height - 1 - y});
        if (d > r) continue;
        const float a = alpha[static_cast<std::size_t>(d)];
        out.at(x, y) = a * blurred.at(x, y) + (1.0f - a) * p.at(x, y);
      }
    return out;
  });
}

}  // namespace eodeblur
