#pragma once

// 2-D complex DFT on double precision buffers, backed by FFTW. Plans are
// created once per (width, height, direction) under a lock and executed
// through the thread-safe new-array interface.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <map>
#include <mutex>
#include <span>
#include <tuple>

#include "eodeblur/imagecore.hpp"

namespace eodeblur {

using Complex = std::complex<double>;

struct ComplexPlane {
  int width = 0;
  int height = 0;
  tracked_vector<Complex> data;

  ComplexPlane() = default;
  ComplexPlane(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h)) {}

  std::size_t size() const noexcept { return data.size(); }
  Complex& at(int x, int y) noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
  const Complex& at(int x, int y) const noexcept { return data[static_cast<std::size_t>(y) * width + x]; }
};

enum class FftDirection { forward, inverse };

namespace detail {

class FftPlanCache {
 public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  fftw_plan get(int width, int height, FftDirection dir) {
    std::lock_guard lock(mutex_);
    const auto key = std::make_tuple(width, height, dir == FftDirection::forward);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    auto* scratch = fftw_alloc_complex(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
    fftw_plan plan = fftw_plan_dft_2d(height, width, scratch, scratch, dir == FftDirection::forward ? FFTW_FORWARD : FFTW_BACKWARD,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(scratch);
    plans_.emplace(key, plan);
    return plan;
  }

  FftPlanCache(const FftPlanCache&) = delete;
  FftPlanCache& operator=(const FftPlanCache&) = delete;

 private:
  FftPlanCache() = default;
  ~FftPlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  std::mutex mutex_;
  std::map<std::tuple<int, int, bool>, fftw_plan> plans_;
};

}  // namespace detail

/// Unnormalized in-place transform. The inverse does not divide by N.
inline void fft2_inplace(ComplexPlane& p, FftDirection dir) {
  if (p.size() == 0) return;
  fftw_plan plan = detail::FftPlanCache::instance().get(p.width, p.height, dir);
  auto* buf = reinterpret_cast<fftw_complex*>(p.data.data());
  fftw_execute_dft(plan, buf, buf);
}

inline ComplexPlane to_complex(const Plane& p) {
  ComplexPlane c(p.width, p.height);
  for (std::size_t i = 0; i < p.size(); ++i) c.data[i] = Complex(p.data[i], 0.0);
  return c;
}

/// Forward 2-D DFT of a real plane.
inline ComplexPlane fft2(const Plane& p) {
  ComplexPlane c = to_complex(p);
  fft2_inplace(c, FftDirection::forward);
  return c;
}

inline ComplexPlane fft2(ComplexPlane c) {
  fft2_inplace(c, FftDirection::forward);
  return c;
}

/// Normalized inverse transform (ifft2(fft2(x)) == x).
inline ComplexPlane ifft2(ComplexPlane c) {
  fft2_inplace(c, FftDirection::inverse);
  const double inv = 1.0 / static_cast<double>(c.size());
  for (auto& v : c.data) v *= inv;
  return c;
}

/// Real part of the normalized inverse transform.
inline Plane ifft2_real(ComplexPlane c) {
  fft2_inplace(c, FftDirection::inverse);
  const double inv = 1.0 / static_cast<double>(c.size());
  Plane out(c.width, c.height);
  for (std::size_t i = 0; i < c.size(); ++i) out.data[i] = static_cast<float>(c.data[i].real() * inv);
  return out;
}

/// Moves the DC bin to (w/2, h/2).
template <class P>
P fftshift(const P& in) {
  P out = in;
  const int sx = in.width / 2;
  const int sy = in.height / 2;
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x) out.at((x + sx) % in.width, (y + sy) % in.height) = in.at(x, y);
  return out;
}

/// OTF of a centered odd-sized kernel zero-padded to width x height, with
/// the kernel center moved to the origin.
template <class Taps>
ComplexPlane kernel_otf(const Taps& taps, int ksize, int width, int height) {
  require(ksize <= width && ksize <= height, "kernel larger than transform size");
  ComplexPlane c(width, height);
  const int r = ksize / 2;
  for (int v = 0; v < ksize; ++v) {
    for (int u = 0; u < ksize; ++u) {
      const int x = (u - r + width) % width;
      const int y = (v - r + height) % height;
      c.at(x, y) += Complex(static_cast<double>(taps[static_cast<std::size_t>(v) * ksize + u]), 0.0);
    }
  }
  fft2_inplace(c, FftDirection::forward);
  return c;
}

}  // namespace eodeblur
