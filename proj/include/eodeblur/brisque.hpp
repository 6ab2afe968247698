#pragma once

// BRISQUE scoring: the 36 NSS features scaled to [-1, 1] with per-feature
// ranges, then evaluated by an RBF support-vector regressor loaded from a
// text model file (format in docs/formats.md). No trained model ships with
// the toolkit.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "eodeblur/metrics.hpp"

namespace eodeblur {

struct BrisqueModel {
  double gamma = 0.05;
  double bias = 0.0;
  std::array<double, kNssFeatureCount> range_min{};
  std::array<double, kNssFeatureCount> range_max{};
  std::vector<double> coefficients;
  std::vector<NssFeatures> support_vectors;

  NssFeatures scale(const NssFeatures& f) const {
    NssFeatures s{};
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double span = range_max[i] - range_min[i];
      s[i] = span > 0.0 ? -1.0 + 2.0 * (f[i] - range_min[i]) / span : 0.0;
    }
    return s;
  }

  /// sum_i coef_i exp(-gamma |s - sv_i|^2) + bias over scaled features.
  double predict(const NssFeatures& features) const {
    const NssFeatures s = scale(features);
    double score = bias;
    for (std::size_t k = 0; k < support_vectors.size(); ++k) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = s[i] - support_vectors[k][i];
        d2 += d * d;
      }
      score += coefficients[k] * std::exp(-gamma * d2);
    }
    return score;
  }
};

inline BrisqueModel parse_brisque_model(std::istream& in) {
  auto fail = [](const std::string& why) { return FormatError("invalid BRISQUE model: " + why); };
  std::string token;
  int version = 0;
  if (!(in >> token >> version) || token != "brisque-model") throw fail("missing header");
  if (version != 1) throw fail("unsupported version " + std::to_string(version));
  BrisqueModel m;
  if (!(in >> token >> m.gamma) || token != "gamma" || !(m.gamma > 0.0)) throw fail("bad gamma");
  if (!(in >> token >> m.bias) || token != "bias") throw fail("bad bias");
  int ranges = 0;
  if (!(in >> token >> ranges) || token != "ranges" || ranges != kNssFeatureCount) throw fail("expected 36 feature ranges");
  for (int i = 0; i < kNssFeatureCount; ++i)
    if (!(in >> m.range_min[static_cast<std::size_t>(i)] >> m.range_max[static_cast<std::size_t>(i)])) throw fail("truncated ranges");
  long count = -1;
  if (!(in >> token >> count) || token != "vectors" || count < 0) throw fail("bad vector count");
  for (long k = 0; k < count; ++k) {
    double coef = 0.0;
    NssFeatures sv{};
    if (!(in >> coef)) throw fail("truncated support vectors");
    for (auto& v : sv)
      if (!(in >> v)) throw fail("truncated support vectors");
    m.coefficients.push_back(coef);
    m.support_vectors.push_back(sv);
  }
  if (in >> token) throw fail("trailing content");
  return m;
}

inline BrisqueModel load_brisque_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open BRISQUE model " + path.string());
  return parse_brisque_model(in);
}

inline std::string format_brisque_model(const BrisqueModel& m) {
  std::ostringstream os;
  os.precision(17);
  os << "brisque-model 1\ngamma " << m.gamma << "\nbias " << m.bias << "\nranges " << kNssFeatureCount << "\n";
  for (int i = 0; i < kNssFeatureCount; ++i)
    os << m.range_min[static_cast<std::size_t>(i)] << ' ' << m.range_max[static_cast<std::size_t>(i)] << '\n';
  os << "vectors " << m.support_vectors.size() << '\n';
  for (std::size_t k = 0; k < m.support_vectors.size(); ++k) {
    os << m.coefficients[k];
    for (double v : m.support_vectors[k]) os << ' ' << v;
    os << '\n';
  }
  return os.str();
}

/// Lower is better.
inline double brisque_score(const RasterImage& img, const BrisqueModel& model) { return model.predict(nss_features(img)); }

inline double brisque_score(const RasterImage& img, const std::filesystem::path& model_file) {
  return brisque_score(img, load_brisque_model(model_file));
}

}  // namespace eodeblur
