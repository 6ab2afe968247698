#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "eodeblur/degrade.hpp"
#include "eodeblur/fft.hpp"
#include "eodeblur/spectral.hpp"
#include "support.hpp"

using namespace eodeblur;
using cd = std::complex<double>;

namespace {

// O(N^4) DFT, the oracle for the FFTW path.
std::vector<cd> naive_dft(const Plane& p) {
  const int w = p.width, h = p.height;
  std::vector<cd> out(static_cast<std::size_t>(w) * h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      cd s = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          s += static_cast<double>(p.at(x, y)) * std::polar(1.0, -2.0 * std::numbers::pi * (static_cast<double>(u) * x / w + static_cast<double>(v) * y / h));
      out[static_cast<std::size_t>(v) * w + u] = s;
    }
  return out;
}

}  // namespace

TEST(Fft, RoundTrip) {
  const Plane p = test::random_plane(37, 24, 3);
  const Plane back = ifft2_real(fft2(p));
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(back.data[i], p.data[i], 1e-6);
}

TEST(Fft, ConstantAndImpulse) {
  const ComplexPlane c = fft2(Plane(16, 16, 0.25f));
  EXPECT_NEAR(c.at(0, 0).real(), 0.25 * 256, 1e-9);
  for (std::size_t i = 1; i < c.size(); ++i) EXPECT_NEAR(std::abs(c.data[i]), 0.0, 1e-9);
  Plane d(8, 8);
  d.at(0, 0) = 1.0f;
  for (const auto& v : fft2(d).data) EXPECT_NEAR(std::abs(v - cd(1.0, 0.0)), 0.0, 1e-12);
}

TEST(Fft, MatchesNaiveDft) {
  const Plane p = test::random_plane(8, 6, 4);
  const auto oracle = naive_dft(p);
  const ComplexPlane f = fft2(p);
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(std::abs(f.data[i] - oracle[i]), 0.0, 1e-9);
}

TEST(Fft, Parseval) {
  for (int n : {8, 31, 64, 128}) {
    const Plane p = test::random_plane(n, n, static_cast<std::uint64_t>(n));
    double e_space = 0, e_freq = 0;
    for (float v : p.data) e_space += static_cast<double>(v) * v;
    for (const auto& v : fft2(p).data) e_freq += std::norm(v);
    EXPECT_NEAR(e_space, e_freq / (static_cast<double>(n) * n), 1e-9 * e_space);
  }
}

TEST(LogSpectrum, ConstantImageIsCenterSpike) {
  const Plane s = log_spectrum(RasterImage(16, 12, 1, 0.5f));
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 16; ++x) {
      if (x == 8 && y == 6)
        EXPECT_NEAR(s.at(x, y), std::log1p(0.5 * 16 * 12), 1e-4);
      else
        EXPECT_NEAR(s.at(x, y), 0.0, 1e-5);
    }
}

TEST(LogSpectrum, PointSymmetricForRealInput) {
  const Plane s = log_spectrum(test::random_image(32, 32, 1, 9));
  // With DC at (16,16), the mirror of (x,y) is (32-x, 32-y).
  for (int y = 1; y < 32; ++y)
    for (int x = 1; x < 32; ++x) EXPECT_NEAR(s.at(x, y), s.at(32 - x, 32 - y), 1e-4);
}

TEST(LogSpectrum, DiskBlurredNoiseHasDarkRingAtFirstOtfZero) {
  // The continuous disk OTF 2 J1(2 pi r f) / (2 pi r f) first vanishes at
  // f = 3.8317 / (2 pi r).
  const int n = 256;
  const double r = 6.0;
  const RasterImage noise = test::random_image(n, n, 1, 21);
  const RasterImage blurred = convolve(noise, disk_kernel(r, 16));
  const auto prof = radial_profile(log_spectrum(blurred), 128);
  const double f0 = 3.8317 / (2 * std::numbers::pi * r);
  std::size_t argmin = 0;
  double best = 1e300;
  for (std::size_t b = 0; b < prof.bins(); ++b) {
    const double f = prof.radial_frequency[b];
    if (f < 0.5 * f0 || f > 1.3 * f0) continue;
    if (prof.value[b] < best) {
      best = prof.value[b];
      argmin = b;
    }
  }
  EXPECT_NEAR(prof.radial_frequency[argmin], f0, 0.08 * f0);
}

TEST(RadialProfile, ConstantSpectrumAndRing) {
  const auto flat = radial_profile(Plane(64, 64, 2.5f), 16);
  EXPECT_EQ(flat.bins(), 16u);
  for (double v : flat.value) EXPECT_NEAR(v, 2.5, 1e-9);
  for (std::size_t i = 1; i < flat.bins(); ++i) EXPECT_GT(flat.radial_frequency[i], flat.radial_frequency[i - 1]);
  EXPECT_LE(flat.radial_frequency.back(), 0.5 * std::numbers::sqrt2);
  EXPECT_GE(flat.radial_frequency.front(), 0.0);

  // Ring of ones at radius 16 px of a 64x64 plane = 0.25 cycles/pixel.
  Plane ring(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (std::abs(std::hypot(x - 32.0, y - 32.0) - 16.0) < 0.5) ring.at(x, y) = 1.0f;
  const auto prof = radial_profile(ring, 45);
  std::size_t peak = 0;
  for (std::size_t b = 0; b < prof.bins(); ++b)
    if (prof.value[b] > prof.value[peak]) peak = b;
  EXPECT_NEAR(prof.radial_frequency[peak], 0.25, 0.5 * std::numbers::sqrt2 / 45);
  EXPECT_THROW(radial_profile(ring, 1), InvalidArgument);
}

TEST(RadialProfile, BlurredBelowSharpAtHighFrequencies) {
  const RasterImage sharp = test::scene(256, 256, 12);
  const RasterImage blurred = convolve(sharp, disk_kernel(3));
  const int bins = 48;
  const auto ps = radial_profile(log_spectrum(sharp), bins);
  const auto pb = radial_profile(log_spectrum(blurred), bins);
  for (int b = 2 * bins / 3; b < bins; ++b) EXPECT_LE(pb.value[static_cast<std::size_t>(b)], ps.value[static_cast<std::size_t>(b)]);
}

TEST(Otf, IdenticalImagesGiveUnitTransfer) {
  const RasterImage ref = test::scene(64, 64, 3);
  const OtfEstimate est = estimate_otf(ref, ref, 1e-9);
  const ComplexPlane r = fft2(apodize(luminance(ref)));
  for (std::size_t i = 0; i < est.values.size(); ++i)
    if (std::norm(r.data[i]) > 1e3 * 1e-9) {
      EXPECT_NEAR(std::abs(est.values.data[i] - cd(1.0, 0.0)), 0.0, 1e-3);
    }
}

TEST(Otf, ZeroReferenceGivesZero) {
  const OtfEstimate est = estimate_otf(test::random_image(32, 32, 1, 1), RasterImage(32, 32, 1), 1e-3);
  for (const auto& v : est.values.data) EXPECT_EQ(std::abs(v), 0.0);
  EXPECT_THROW(estimate_otf(RasterImage(32, 32, 1), RasterImage(32, 30, 1)), InvalidArgument);
  EXPECT_THROW(estimate_otf(RasterImage(32, 32, 1), RasterImage(32, 32, 1), 0.0), InvalidArgument);
}

TEST(Otf, DefaultEpsAndDcIsRealPositive) {
  const RasterImage ref = test::scene(128, 128, 5);
  const OtfEstimate est = estimate_otf(convolve(ref, disk_kernel(3)), ref);
  EXPECT_GT(est.regularization_eps, 0.0);
  EXPECT_GT(est.values.at(0, 0).real(), 0.0);
  EXPECT_NEAR(est.values.at(0, 0).imag(), 0.0, 1e-9);
  for (const auto& v : est.values.data) EXPECT_TRUE(std::isfinite(v.real()) && std::isfinite(v.imag()));
}

TEST(KernelFromOtf, ExactOtfRoundTrip) {
  const BlurKernel disk = disk_kernel(3);
  OtfEstimate est;
  est.values = kernel_otf(disk.taps(), disk.size(), 64, 64);
  const BlurKernel back = kernel_from_otf(est, disk.size());
  double l1 = 0.0;
  for (std::size_t i = 0; i < disk.taps().size(); ++i) l1 += std::abs(back.taps()[i] - disk.taps()[i]);
  EXPECT_LE(l1, 0.05);
}

TEST(KernelFromOtf, FlatOtfAndSupportOne) {
  OtfEstimate ones;
  ones.values = ComplexPlane(32, 32);
  for (auto& v : ones.values.data) v = 1.0;
  const BlurKernel k = kernel_from_otf(ones, 5);
  EXPECT_NEAR(k.at(2, 2), 1.0, 1e-12);
  const BlurKernel k1 = kernel_from_otf(ones, 1);
  ASSERT_EQ(k1.size(), 1);
  EXPECT_DOUBLE_EQ(k1.at(0, 0), 1.0);
  EXPECT_THROW(kernel_from_otf(ones, 4), InvalidArgument);
  EXPECT_THROW(kernel_from_otf(ones, 33), InvalidArgument);
}

TEST(KernelFromOtf, RecoversSyntheticKernels) {
  const RasterImage ref = test::scene(256, 256, 31);
  const std::vector<std::pair<std::string, BlurKernel>> cases = {
      {"disk2", disk_kernel(2)}, {"disk4", disk_kernel(4)}, {"disk6", disk_kernel(6)}, {"gauss1", gaussian_kernel(1)}, {"gauss2", gaussian_kernel(2)}};
  for (const auto& [name, k] : cases) {
    const RasterImage deg = convolve(ref, k);
    const double mean_power = [&] {
      const ComplexPlane r = fft2(apodize(luminance(ref)));
      double s = 0;
      for (const auto& v : r.data) s += std::norm(v);
      return s / static_cast<double>(r.size());
    }();
    const BlurKernel est = kernel_from_otf(estimate_otf(deg, ref, 1e-3 * mean_power), k.size());
    EXPECT_GE(kernel_ncc(est, k), 0.95) << name;
    const BlurKernel noisy = kernel_from_otf(estimate_otf(shot_noise(deg, 2000, 5), ref), k.size());
    EXPECT_GE(kernel_ncc(noisy, k), 0.85) << name << " with shot noise";
  }
}

TEST(KernelNcc, SelfIsOne) {
  EXPECT_NEAR(kernel_ncc(disk_kernel(3), disk_kernel(3)), 1.0, 1e-12);
  EXPECT_LT(kernel_ncc(disk_kernel(3), motion_kernel(7, 0)), 0.9);
}

TEST(RadiusFit, Examples) {
  const RasterImage ref = test::scene(128, 128, 8);
  const RasterImage deg = convolve(ref, disk_kernel(4));
  EXPECT_DOUBLE_EQ(fit_defocus_radius(deg, ref, {2, 3, 4, 5, 6}).radius, 4.0);
  EXPECT_DOUBLE_EQ(fit_defocus_radius(ref, ref, {0, 1, 2}).radius, 0.0);
  EXPECT_DOUBLE_EQ(fit_defocus_radius(deg, ref, {2.5}).radius, 2.5);
  EXPECT_THROW(fit_defocus_radius(deg, ref, {}), InvalidArgument);
}

TEST(RadiusFit, ExactForAllGridRadiiOnNoiselessPairs) {
  const RasterImage ref = test::scene(128, 128, 14);
  const std::vector<double> grid = {1, 2, 3, 4, 5, 6, 7, 8};
  for (double r : grid) EXPECT_DOUBLE_EQ(fit_defocus_radius(convolve(ref, disk_kernel(r)), ref, grid).radius, r);
}

TEST(SpectralJson, ProfileExports) {
  const auto j = to_json(radial_profile(Plane(16, 16, 1.0f), 4));
  EXPECT_EQ(j["schema_version"], 1);
  EXPECT_EQ(j["log_magnitude"].size(), 4u);
}
