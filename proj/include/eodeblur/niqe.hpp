#pragma once

// Natural Image Quality Evaluator: a multivariate Gaussian over per-patch
// NSS features of pristine imagery, and the Mahalanobis-like distance of a
// test image's patch-feature Gaussian to it.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <vector>

#include "eodeblur/binary_io.hpp"
#include "eodeblur/metrics.hpp"

namespace eodeblur {

struct NiqeModel {
  std::array<double, kNssFeatureCount> feature_mean{};
  std::array<double, kNssFeatureCount * kNssFeatureCount> feature_covariance{};  ///< row-major
  int patch_size = 96;
  double sharpness_percentile = 75.0;

  double cov(int i, int j) const { return feature_covariance[static_cast<std::size_t>(i) * kNssFeatureCount + j]; }
};

struct PatchFeatures {
  std::vector<NssFeatures> features;
  std::vector<double> sharpness;  ///< mean local MSCN sigma per patch
};

/// Features of every non-overlapping patch_size x patch_size patch, row-major.
inline PatchFeatures patch_features(const RasterImage& img, int patch_size) {
  require(patch_size >= 16 && patch_size % 2 == 0, "NIQE patch size must be even and >= 16");
  PatchFeatures out;
  if (img.width() < patch_size || img.height() < patch_size) return out;
  const NssAnalysis a(img);
  for (int y = 0; y + patch_size <= a.full.coefficients.height; y += patch_size)
    for (int x = 0; x + patch_size <= a.full.coefficients.width; x += patch_size) {
      const Rect r{x, y, patch_size, patch_size};
      out.features.push_back(a.features(r));
      out.sharpness.push_back(a.mean_sigma(r));
    }
  return out;
}

struct FeatureGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

inline FeatureGaussian feature_gaussian(const std::vector<NssFeatures>& feats) {
  require(feats.size() >= 2, "need at least two feature vectors");
  const Eigen::Index d = kNssFeatureCount;
  Eigen::MatrixXd m(static_cast<Eigen::Index>(feats.size()), d);
  for (std::size_t i = 0; i < feats.size(); ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), j) = feats[i][static_cast<std::size_t>(j)];
  FeatureGaussian g;
  g.mean = m.colwise().mean().transpose();
  const Eigen::MatrixXd centered = m.rowwise() - g.mean.transpose();
  g.covariance = (centered.transpose() * centered) / static_cast<double>(feats.size() - 1);
  g.covariance = 0.5 * (g.covariance + g.covariance.transpose());
  return g;
}

inline NiqeModel model_from_gaussian(const FeatureGaussian& g, int patch_size, double percentile) {
  NiqeModel model;
  model.patch_size = patch_size;
  model.sharpness_percentile = percentile;
  for (int i = 0; i < kNssFeatureCount; ++i) {
    model.feature_mean[static_cast<std::size_t>(i)] = g.mean(i);
    for (int j = 0; j < kNssFeatureCount; ++j)
      model.feature_covariance[static_cast<std::size_t>(i) * kNssFeatureCount + j] = g.covariance(i, j);
  }
  return model;
}

/// Fits the pristine model on the sharpest `sharpness_percentile` percent of
/// patches (ranked by mean local MSCN sigma) across the corpus.
inline NiqeModel niqe_fit(const std::vector<RasterImage>& corpus, int patch_size = 96, double sharpness_percentile = 75.0,
                          std::size_t min_patches = 200) {
  require(sharpness_percentile > 0.0 && sharpness_percentile <= 100.0, "sharpness percentile must be in (0, 100]");
  std::vector<NssFeatures> all;
  std::vector<double> sharp;
  for (const auto& img : corpus) {
    auto pf = patch_features(img, patch_size);
    all.insert(all.end(), pf.features.begin(), pf.features.end());
    sharp.insert(sharp.end(), pf.sharpness.begin(), pf.sharpness.end());
  }
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sharp[a] > sharp[b]; });
  const auto keep = static_cast<std::size_t>(std::ceil(static_cast<double>(all.size()) * sharpness_percentile / 100.0));
  if (keep < min_patches)
    throw InvalidArgument("NIQE corpus yields " + std::to_string(keep) + " selected patches, need at least " + std::to_string(min_patches));
  std::vector<NssFeatures> selected;
  selected.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) selected.push_back(all[order[i]]);
  return model_from_gaussian(feature_gaussian(selected), patch_size, sharpness_percentile);
}

/// Distance between two feature Gaussians using the pseudo-inverse of the
/// pooled covariance.
inline double gaussian_distance(const Eigen::VectorXd& mean_a, const Eigen::MatrixXd& cov_a, const Eigen::VectorXd& mean_b,
                                const Eigen::MatrixXd& cov_b) {
  const Eigen::MatrixXd pooled = 0.5 * (cov_a + cov_b);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pooled);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double cutoff = std::max(lambda.cwiseAbs().maxCoeff(), 1e-300) * 1e-12;
  const Eigen::VectorXd diff = mean_a - mean_b;
  const Eigen::VectorXd proj = eig.eigenvectors().transpose() * diff;
  double q = 0.0;
  for (Eigen::Index i = 0; i < lambda.size(); ++i)
    if (lambda(i) > cutoff) q += proj(i) * proj(i) / lambda(i);
  return std::sqrt(std::max(0.0, q));
}

inline FeatureGaussian model_gaussian(const NiqeModel& model) {
  FeatureGaussian g{Eigen::VectorXd(kNssFeatureCount), Eigen::MatrixXd(kNssFeatureCount, kNssFeatureCount)};
  for (int i = 0; i < kNssFeatureCount; ++i) {
    g.mean(i) = model.feature_mean[static_cast<std::size_t>(i)];
    for (int j = 0; j < kNssFeatureCount; ++j) g.covariance(i, j) = model.cov(i, j);
  }
  return g;
}

/// Gaussian of all patch features of a test image (no sharpness selection).
inline FeatureGaussian image_feature_gaussian(const RasterImage& img, int patch_size) {
  const auto pf = patch_features(img, patch_size);
  require(pf.features.size() >= 4, "image admits fewer than 4 NIQE patches");
  return feature_gaussian(pf.features);
}

/// Lower is better.
inline double niqe_score(const RasterImage& img, const NiqeModel& model) {
  const FeatureGaussian test = image_feature_gaussian(img, model.patch_size);
  const FeatureGaussian pristine = model_gaussian(model);
  return gaussian_distance(pristine.mean, pristine.covariance, test.mean, test.covariance);
}

// Binary layout (little-endian): "NIQE", u16 version (1), u16 feature count
// (36), u32 patch size, f64 sharpness percentile, f64[36] mean,
// f64[36*36] covariance row-major.
inline constexpr std::uint16_t kNiqeFormatVersion = 1;


inline std::vector<std::uint8_t> encode_niqe_model(const NiqeModel& m) {
  std::vector<std::uint8_t> out = {'N', 'I', 'Q', 'E'};
  detail::put_le<std::uint16_t>(out, kNiqeFormatVersion);
  detail::put_le<std::uint16_t>(out, kNssFeatureCount);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.patch_size));
  detail::put_le<double>(out, m.sharpness_percentile);
  for (double v : m.feature_mean) detail::put_le<double>(out, v);
  for (double v : m.feature_covariance) detail::put_le<double>(out, v);
  return out;
}

inline NiqeModel decode_niqe_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "NIQE", 4) != 0) throw FormatError("bad NIQE model magic");
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint16_t>(bytes, pos, "NIQE model");
  if (version != kNiqeFormatVersion) throw FormatError("unsupported NIQE model version " + std::to_string(version));
  const auto count = detail::get_le<std::uint16_t>(bytes, pos, "NIQE model");
  if (count != kNssFeatureCount) throw FormatError("NIQE model feature count must be 36");
  NiqeModel m;
  m.patch_size = static_cast<int>(detail::get_le<std::uint32_t>(bytes, pos, "NIQE model"));
  m.sharpness_percentile = detail::get_le<double>(bytes, pos, "NIQE model");
  for (double& v : m.feature_mean) v = detail::get_le<double>(bytes, pos, "NIQE model");
  for (double& v : m.feature_covariance) v = detail::get_le<double>(bytes, pos, "NIQE model");
  if (pos != bytes.size()) throw FormatError("trailing bytes in NIQE model file");
  if (m.patch_size < 16 || m.patch_size % 2 != 0) throw FormatError("invalid NIQE patch size");
  for (int i = 0; i < kNssFeatureCount; ++i)
    for (int j = 0; j < kNssFeatureCount; ++j)
      if (!std::isfinite(m.cov(i, j)) || std::abs(m.cov(i, j) - m.cov(j, i)) > 1e-9) throw FormatError("NIQE covariance is not symmetric");
  return m;
}

inline void save_niqe_model(const NiqeModel& m, const std::filesystem::path& path) { detail::write_all(path, encode_niqe_model(m)); }
inline NiqeModel load_niqe_model(const std::filesystem::path& path) { return decode_niqe_model(detail::read_all(path)); }

}  // namespace eodeblur
