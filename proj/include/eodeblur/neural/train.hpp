#pragma once

// Content loss (multi-scale L1 + L1 of FFT differences), step-decay learning
// rate, Adam training of the toy restorer, and finite-difference gradient
// verification.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "eodeblur/fft.hpp"
#include "eodeblur/neural/mimo.hpp"

namespace eodeblur::neural {

struct TrainConfig {
  int batch_size = 4;
  double lr_initial = 1e-4;
  int lr_step = 500;
  double lr_gamma = 0.5;
  int total_iterations = 3000;
  double fft_loss_weight = 0.1;
  std::uint64_t seed = 0;
  int workers = 1;  ///< samples of a batch processed concurrently
  MimoArch arch{};

  void validate() const {
    require(batch_size >= 1, "batch size must be >= 1");
    require(lr_initial > 0.0 && lr_step > 0 && lr_gamma > 0.0 && total_iterations > 0, "training schedule values must be positive");
    require(fft_loss_weight >= 0.0, "FFT loss weight must be non-negative");
    require(workers >= 1, "workers must be >= 1");
    arch.validate();
  }
};

inline double lr_at(const TrainConfig& cfg, int iteration) {
  if (iteration < 0 || iteration >= cfg.total_iterations)
    throw InvalidArgument("iteration " + std::to_string(iteration) + " outside [0, " + std::to_string(cfg.total_iterations) + ")");
  return cfg.lr_initial * std::pow(cfg.lr_gamma, iteration / cfg.lr_step);
}

template <class T>
struct LossTerms {
  double value = 0.0;
  double l1 = 0.0;
  double fft = 0.0;
  MimoOutputs<T> grad;  ///< dLoss/dOutput per scale
};

/// Sum over scales of mean|d| + lambda * mean|FFT2(d)| with d = out - target,
/// FFTs per (n, c) plane, unnormalized, averaged over all bins.
template <class T>
LossTerms<T> content_loss(const MimoOutputs<T>& out, const MimoOutputs<T>& target, double lambda) {
  LossTerms<T> r;
  for (int s = 0; s < 3; ++s) {
    const auto& o = out[static_cast<std::size_t>(s)];
    const auto& t = target[static_cast<std::size_t>(s)];
    if (!o.same_shape(t)) throw InvalidArgument("content loss shape mismatch at scale " + std::to_string(s) + ": " + o.shape_string() + " vs " + t.shape_string());
    auto& g = r.grad[static_cast<std::size_t>(s)];
    g = Tensor4<T>(o.n, o.c, o.h, o.w);
    const double m = static_cast<double>(o.numel());
    if (m == 0.0) continue;
    double l1 = 0.0;
    for (std::size_t i = 0; i < o.numel(); ++i) {
      const double d = static_cast<double>(o.data[i]) - static_cast<double>(t.data[i]);
      l1 += std::abs(d);
      g.data[i] = static_cast<T>((d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / m);
    }
    r.l1 += l1 / m;
    if (lambda == 0.0) continue;
    double fsum = 0.0;
    const std::size_t ps = o.plane_size();
    for (int in = 0; in < o.n; ++in)
      for (int c = 0; c < o.c; ++c) {
        ComplexPlane z(o.w, o.h);
        const T* op = o.plane(in, c);
        const T* tp = t.plane(in, c);
        for (std::size_t i = 0; i < ps; ++i) z.data[i] = static_cast<double>(op[i]) - static_cast<double>(tp[i]);
        fft2_inplace(z, FftDirection::forward);
        for (auto& v : z.data) {
          const double mag = std::abs(v);
          fsum += mag;
          v = mag > 0.0 ? v / mag : Complex(0.0, 0.0);
        }
        // d/dd sum|Z| = Re(F^H U); the unnormalized inverse transform is F^H.
        fft2_inplace(z, FftDirection::inverse);
        T* gp = g.plane(in, c);
        for (std::size_t i = 0; i < ps; ++i) gp[i] += static_cast<T>(lambda * z.data[i].real() / m);
      }
    r.fft += fsum / m;
  }
  r.value = r.l1 + lambda * r.fft;
  return r;
}

template <class T>
using Gradients = std::map<std::string, Tensor4<T>>;

template <class T>
struct LossAndGrad {
  double loss = 0.0;
  Gradients<T> grads;
};

/// Loss of one batch and the gradient of every parameter.
template <class T>
LossAndGrad<T> loss_and_gradients(const ModelWeights<T>& weights, const Tensor4<T>& input, const Tensor4<T>& target, double lambda) {
  if (input.n != target.n || input.c != target.c || input.h != target.h || input.w != target.w)
    throw InvalidArgument("input and target shapes differ: " + input.shape_string() + " vs " + target.shape_string());
  Graph<T> g(true);
  const auto mg = build_mimo(g, weights, input);
  const MimoOutputs<T> out = {g.value(mg.outputs[0]), g.value(mg.outputs[1]), g.value(mg.outputs[2])};
  auto terms = content_loss(out, target_pyramid(target), lambda);
  g.backward({{mg.outputs[0], std::move(terms.grad[0])}, {mg.outputs[1], std::move(terms.grad[1])}, {mg.outputs[2], std::move(terms.grad[2])}});
  LossAndGrad<T> r;
  r.loss = terms.value;
  for (const auto& [name, v] : mg.params) {
    const auto& gr = g.grad(v);
    r.grads.emplace(name, gr.numel() ? gr : Tensor4<T>(weights[name].n, weights[name].c, weights[name].h, weights[name].w));
  }
  return r;
}

/// Mean loss and gradient over a batch, samples spread over `workers` threads
/// and reduced in sample order so the result does not depend on scheduling.
template <class T>
LossAndGrad<T> batch_gradients(const ModelWeights<T>& weights, const std::vector<const Tensor4<T>*>& inputs,
                               const std::vector<const Tensor4<T>*>& targets, double lambda, int workers) {
  require(!inputs.empty() && inputs.size() == targets.size(), "batch inputs and targets must be non-empty and paired");
  std::vector<LossAndGrad<T>> per(inputs.size());
  auto run = [&](std::size_t i) { per[i] = loss_and_gradients(weights, *inputs[i], *targets[i], lambda); };
  const std::size_t nw = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), inputs.size());
  if (nw <= 1) {
    for (std::size_t i = 0; i < inputs.size(); ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(nw);
    for (std::size_t t = 0; t < nw; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < inputs.size(); i += nw) run(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  LossAndGrad<T> r = std::move(per.front());
  for (std::size_t i = 1; i < per.size(); ++i) {
    r.loss += per[i].loss;
    for (auto& [name, gsum] : r.grads) {
      const auto& gi = per[i].grads.at(name);
      for (std::size_t j = 0; j < gsum.numel(); ++j) gsum.data[j] += gi.data[j];
    }
  }
  const T inv = static_cast<T>(1.0 / static_cast<double>(per.size()));
  r.loss /= static_cast<double>(per.size());
  for (auto& [_, gsum] : r.grads)
    for (auto& v : gsum.data) v *= inv;
  return r;
}

template <class T>
class Adam {
 public:
  explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ModelWeights<T>& w, const Gradients<T>& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, t_);
    const double c2 = 1.0 - std::pow(b2_, t_);
    for (auto& [name, p] : w.params) {
      const auto& g = grads.at(name);
      auto& m = m_[name];
      auto& v = v_[name];
      if (m.empty()) {
        m.assign(p.numel(), 0.0);
        v.assign(p.numel(), 0.0);
      }
      for (std::size_t i = 0; i < p.numel(); ++i) {
        const double gi = static_cast<double>(g.data[i]);
        m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
        v[i] = b2_ * v[i] + (1.0 - b2_) * gi * gi;
        p.data[i] = static_cast<T>(static_cast<double>(p.data[i]) - lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_));
      }
    }
  }

 private:
  double b1_, b2_, eps_;
  int t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

struct TrainingPair {
  Tensor4<float> degraded;  ///< (1, c, h, w)
  Tensor4<float> clean;
};

struct LossRecord {
  int iteration;
  double lr;
  double loss;
};

struct TrainResult {
  ModelWeights<float> weights;
  std::vector<LossRecord> curve;
};

/// Mean content loss of the model over a dataset.
inline double dataset_loss(const ModelWeights<float>& w, const std::vector<TrainingPair>& pairs, double lambda) {
  require(!pairs.empty(), "dataset is empty");
  double sum = 0.0;
  for (const auto& p : pairs) sum += content_loss(mimo_forward(w, p.degraded), target_pyramid(p.clean), lambda).value;
  return sum / static_cast<double>(pairs.size());
}

/// Adam over random mini-batches (drawn with replacement from `pairs`) for
/// `iterations` steps, or cfg.total_iterations when iterations <= 0.
inline TrainResult train_toy(const TrainConfig& cfg, const std::vector<TrainingPair>& pairs, int iterations = 0,
                             const ModelWeights<float>* start = nullptr) {
  cfg.validate();
  if (pairs.empty()) throw InvalidArgument("training dataset is empty");
  require(pairs.size() >= 4, "training needs at least 4 pairs");
  const int iters = iterations > 0 ? iterations : cfg.total_iterations;
  require(iters <= cfg.total_iterations, "iterations exceed the configured schedule");
  for (const auto& p : pairs)
    require(p.degraded.same_shape(p.clean) && p.degraded.n == 1 && p.degraded.c == cfg.arch.channels, "training pair shape mismatch");

  TrainResult r{start ? *start : init_weights<float>(cfg.arch, cfg.seed), {}};
  r.weights.validate();
  Adam<float> opt;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
  for (int it = 0; it < iters; ++it) {
    std::vector<const Tensor4<float>*> in, tg;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const auto& p = pairs[pick(rng)];
      in.push_back(&p.degraded);
      tg.push_back(&p.clean);
    }
    const auto lg = batch_gradients(r.weights, in, tg, cfg.fft_loss_weight, cfg.workers);
    const double lr = lr_at(cfg, it);
    r.curve.push_back({it, lr, lg.loss});
    opt.step(r.weights, lg.grads, lr);
  }
  return r;
}

inline void write_loss_csv(std::ostream& os, const std::vector<LossRecord>& curve) {
  os << "iteration,lr,loss\n";
  os.precision(10);
  for (const auto& rec : curve) os << rec.iteration << ',' << rec.lr << ',' << rec.loss << '\n';
}

/// Relative error with a floor so that two vanishing gradients compare equal.
inline double relative_error(double analytic, double numeric, double floor = 1e-10) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_at_kinks = 0;  ///< samples whose +-eps interval crosses a ReLU or L1 kink
  std::string worst_parameter;
};

using GradientHook = std::function<void(Gradients<double>&)>;

namespace detail {

// Loss plus the sign pattern of every ReLU input and every loss residual.
// Central differences are only meaningful when the pattern is the same at
// both ends of the probe interval.
struct ProbeResult {
  double loss = 0.0;
  std::vector<bool> pattern;
};

inline ProbeResult probe_loss(const ModelWeights<double>& w, const Tensor4<double>& input, const MimoOutputs<double>& targets, double lambda) {
  Graph<double> g(false);
  const auto mg = build_mimo(g, w, input);
  ProbeResult r;
  for (auto v : g.relu_inputs())
    for (double x : g.value(v).data) r.pattern.push_back(x > 0.0);
  MimoOutputs<double> out;
  for (std::size_t s = 0; s < 3; ++s) {
    out[s] = g.value(mg.outputs[s]);
    for (std::size_t i = 0; i < out[s].numel(); ++i) r.pattern.push_back(out[s].data[i] > targets[s].data[i]);
  }
  r.loss = content_loss(out, targets, lambda).value;
  return r;
}

}  // namespace detail

/// Central differences of the content loss against the analytic gradient on
/// `samples` parameters drawn at random, all in double precision. Draws whose
/// probe interval straddles a kink of the piecewise-linear parts are skipped
/// and counted. `hook` may tamper with the analytic gradient.
inline GradcheckResult gradcheck(const ModelWeights<double>& weights, const Tensor4<double>& input, const Tensor4<double>& target,
                                 double lambda = 0.1, double eps = 1e-3, std::size_t samples = 256, std::uint64_t seed = 7,
                                 const GradientHook& hook = {}) {
  require(eps > 0.0, "gradcheck eps must be positive");
  auto analytic = loss_and_gradients(weights, input, target, lambda).grads;
  if (hook) hook(analytic);
  const auto targets = target_pyramid(target);
  std::vector<std::pair<std::string, std::size_t>> slots;
  for (const auto& [name, t] : weights.params)
    for (std::size_t i = 0; i < t.numel(); ++i) slots.emplace_back(name, i);
  std::mt19937_64 rng(seed);
  std::shuffle(slots.begin(), slots.end(), rng);

  ModelWeights<double> probe = weights;
  GradcheckResult r;
  for (const auto& [name, i] : slots) {
    if (r.checked >= samples) break;
    const double x0 = weights[name].data[i];
    probe[name].data[i] = x0 + eps;
    const auto plus = detail::probe_loss(probe, input, targets, lambda);
    probe[name].data[i] = x0 - eps;
    const auto minus = detail::probe_loss(probe, input, targets, lambda);
    probe[name].data[i] = x0;
    if (plus.pattern != minus.pattern) {
      ++r.skipped_at_kinks;
      continue;
    }
    const double numeric = (plus.loss - minus.loss) / (2.0 * eps);
    const double err = relative_error(analytic.at(name).data[i], numeric);
    if (err > r.max_relative_error) {
      r.max_relative_error = err;
      r.worst_parameter = name + "[" + std::to_string(i) + "]";
    }
    ++r.checked;
  }
  return r;
}

/// Deterministic smooth input/target pair for gradcheck: the target is a
/// spatially shifted version of the input, so residuals are O(1).
inline std::pair<Tensor4<double>, Tensor4<double>> gradcheck_sample(const MimoArch& arch, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor4<double> in(1, arch.channels, size, size), tg(1, arch.channels, size, size);
  for (int c = 0; c < arch.channels; ++c) {
    const double fx = 0.5 + u(rng), fy = 0.5 + u(rng), ph = 6.28 * u(rng);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        in.at(0, c, y, x) = 0.5 + 0.3 * std::sin(fx * x * 0.7 + fy * y * 0.5 + ph) + 0.1 * (u(rng) - 0.5);
        tg.at(0, c, y, x) = 0.5 + 0.4 * std::cos(fy * x * 0.6 - fx * y * 0.4 + ph);
      }
  }
  return {std::move(in), std::move(tg)};
}

}  // namespace eodeblur::neural
