#include <gtest/gtest.h>

#include <complex>
#include <sstream>

#include "eodeblur/degrade.hpp"
#include "eodeblur/neural/train.hpp"
#include "support.hpp"

using namespace eodeblur;
using namespace eodeblur::neural;

namespace {

MimoArch tiny_arch() {
  MimoArch a;
  a.widths = {4, 6, 8};
  return a;
}

std::vector<TrainingPair> toy_pairs(int count, int size) {
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < count; ++i) {
    const RasterImage clean = test::scene(size, size, 300 + static_cast<std::uint64_t>(i));
    pairs.push_back({from_raster(convolve(clean, disk_kernel(2))), from_raster(clean)});
  }
  return pairs;
}

Tensor4<double> tensor_from(const std::vector<double>& v, int h, int w) {
  Tensor4<double> t(1, 1, h, w);
  t.data.assign(v.begin(), v.end());
  return t;
}

}  // namespace

TEST(TrainConfig, Defaults) {
  const TrainConfig c;
  EXPECT_EQ(c.batch_size, 4);
  EXPECT_DOUBLE_EQ(c.lr_initial, 1e-4);
  EXPECT_EQ(c.lr_step, 500);
  EXPECT_DOUBLE_EQ(c.lr_gamma, 0.5);
  EXPECT_EQ(c.total_iterations, 3000);
  EXPECT_DOUBLE_EQ(c.fft_loss_weight, 0.1);
  EXPECT_NO_THROW(c.validate());
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  bad = TrainConfig{};
  bad.fft_loss_weight = -1;
  EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(LearningRate, StepSchedule) {
  const TrainConfig c;
  EXPECT_DOUBLE_EQ(lr_at(c, 0), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(c, 499), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(c, 500), 5e-5);
  EXPECT_DOUBLE_EQ(lr_at(c, 2999), 3.125e-6);
  EXPECT_THROW(lr_at(c, -1), InvalidArgument);
  EXPECT_THROW(lr_at(c, 3000), InvalidArgument);
  for (int i = 1; i < c.total_iterations; ++i) ASSERT_LE(lr_at(c, i), lr_at(c, i - 1));
}

TEST(ContentLoss, ZeroForIdenticalOutputs) {
  const auto t = target_pyramid(from_raster<double>(test::random_image(16, 16, 3, 1)));
  const auto r = content_loss(t, t, 0.1);
  EXPECT_EQ(r.value, 0.0);
  for (const auto& g : r.grad)
    for (double v : g.data) EXPECT_EQ(v, 0.0);
}

TEST(ContentLoss, PureL1WhenLambdaIsZero) {
  MimoOutputs<double> a = {tensor_from({1, 2, 3, 4}, 2, 2), tensor_from({0}, 1, 1), tensor_from({5}, 1, 1)};
  MimoOutputs<double> b = {tensor_from({0, 2, 5, 4}, 2, 2), tensor_from({-1}, 1, 1), tensor_from({5}, 1, 1)};
  const auto r = content_loss(a, b, 0.0);
  EXPECT_DOUBLE_EQ(r.value, 3.0 / 4.0 + 1.0 + 0.0);
  EXPECT_DOUBLE_EQ(r.grad[0].data[0], 0.25);
  EXPECT_DOUBLE_EQ(r.grad[0].data[2], -0.25);
  EXPECT_DOUBLE_EQ(r.grad[0].data[1], 0.0);
}

TEST(ContentLoss, FrequencyTermMatchesDirectDft) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> d(16);
  for (auto& v : d) v = u(rng);
  const double lambda = 0.3;
  MimoOutputs<double> out = {tensor_from(d, 4, 4), Tensor4<double>(1, 1, 2, 2), Tensor4<double>(1, 1, 1, 1)};
  MimoOutputs<double> zero = {Tensor4<double>(1, 1, 4, 4), Tensor4<double>(1, 1, 2, 2), Tensor4<double>(1, 1, 1, 1)};
  double l1 = 0, fsum = 0;
  for (double v : d) l1 += std::abs(v);
  for (int ky = 0; ky < 4; ++ky)
    for (int kx = 0; kx < 4; ++kx) {
      std::complex<double> s = 0;
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) s += d[static_cast<std::size_t>(y * 4 + x)] * std::polar(1.0, -2 * M_PI * (kx * x + ky * y) / 4.0);
      fsum += std::abs(s);
    }
  const auto r = content_loss(out, zero, lambda);
  EXPECT_NEAR(r.l1, l1 / 16, 1e-12);
  EXPECT_NEAR(r.fft, fsum / 16, 1e-6);
  EXPECT_NEAR(r.value, l1 / 16 + lambda * fsum / 16, 1e-6);
  EXPECT_GE(r.value, 0.0);
}

TEST(ContentLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1, 1);
  MimoOutputs<double> out = {Tensor4<double>(1, 2, 8, 8), Tensor4<double>(1, 2, 4, 4), Tensor4<double>(1, 2, 2, 2)};
  for (auto& t : out)
    for (auto& v : t.data) v = u(rng);
  MimoOutputs<double> tg = {Tensor4<double>(1, 2, 8, 8), Tensor4<double>(1, 2, 4, 4), Tensor4<double>(1, 2, 2, 2)};
  const auto r = content_loss(out, tg, 0.2);
  const double eps = 1e-7;
  for (int s = 0; s < 3; ++s)
    for (std::size_t i = 0; i < out[s].numel(); i += 3) {
      auto p = out, m = out;
      p[s].data[i] += eps;
      m[s].data[i] -= eps;
      const double num = (content_loss(p, tg, 0.2).value - content_loss(m, tg, 0.2).value) / (2 * eps);
      EXPECT_NEAR(r.grad[s].data[i], num, 1e-5) << "scale " << s << " index " << i;
    }
}

TEST(ContentLoss, ShapeMismatchThrows) {
  const auto a = target_pyramid(Tensor4<double>(1, 1, 8, 8));
  const auto b = target_pyramid(Tensor4<double>(1, 1, 8, 4));
  EXPECT_THROW(content_loss(a, b, 0.1), InvalidArgument);
}

TEST(Gradients, VanishAtPerfectFit) {
  const auto w = init_weights<double>(tiny_arch(), 1, ResidualInit::zero);
  const auto in = from_raster<double>(test::random_image(16, 16, 3, 7));
  const auto lg = loss_and_gradients(w, in, in, 0.1);
  EXPECT_EQ(lg.loss, 0.0);
  for (const auto& [name, g] : lg.grads)
    for (double v : g.data) ASSERT_EQ(v, 0.0) << name;
}

TEST(Gradients, EveryParameterHasAGradient) {
  const auto w = init_weights<double>(tiny_arch(), 2);
  const auto [in, tg] = gradcheck_sample(w.arch, 8, 3);
  const auto lg = loss_and_gradients(w, in, tg, 0.1);
  ASSERT_EQ(lg.grads.size(), w.params.size());
  for (const auto& [name, t] : w.params) EXPECT_TRUE(lg.grads.at(name).same_shape(t)) << name;
}

TEST(Gradcheck, DefaultModelWithinTolerance) {
  const auto w = init_weights<double>(MimoArch{}, 7);
  const auto [in, tg] = gradcheck_sample(w.arch, 8, 7);
  const auto r = gradcheck(w, in, tg, 0.1, 1e-3, 256, 7);
  EXPECT_GE(r.checked, 200u);
  EXPECT_LE(r.max_relative_error, 1e-3) << r.worst_parameter;
}

TEST(Gradcheck, DetectsCorruptedGradient) {
  const auto w = init_weights<double>(tiny_arch(), 8);
  const auto [in, tg] = gradcheck_sample(w.arch, 8, 8);
  const auto r = gradcheck(w, in, tg, 0.1, 1e-3, 64, 8, [](Gradients<double>& g) {
    for (auto& [_, t] : g)
      for (auto& v : t.data) v = -v;
  });
  EXPECT_GT(r.max_relative_error, 1.0);
}

TEST(Gradcheck, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1.0, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(-1.0, 1.0), 2.0);
}

TEST(BatchGradients, WorkerCountDoesNotChangeResult) {
  const auto w = init_weights(tiny_arch(), 9);
  const auto pairs = toy_pairs(4, 16);
  std::vector<const Tensor4<float>*> in, tg;
  for (const auto& p : pairs) {
    in.push_back(&p.degraded);
    tg.push_back(&p.clean);
  }
  const auto a = batch_gradients(w, in, tg, 0.1, 1);
  const auto b = batch_gradients(w, in, tg, 0.1, 3);
  EXPECT_EQ(a.loss, b.loss);
  for (const auto& [name, g] : a.grads) EXPECT_EQ(g.data, b.grads.at(name).data) << name;
  // Mean of the per-sample losses.
  double sum = 0;
  for (const auto& p : pairs) sum += loss_and_gradients(w, p.degraded, p.clean, 0.1).loss;
  EXPECT_NEAR(a.loss, sum / 4, 1e-9);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto w = init_weights<double>(tiny_arch(), 10);
  const auto before = w;
  Gradients<double> g;
  for (const auto& [name, t] : w.params) {
    Tensor4<double> gt(t.n, t.c, t.h, t.w, 0.5);
    g.emplace(name, gt);
  }
  Adam<double> opt;
  opt.step(w, g, 1e-3);
  for (const auto& [name, t] : w.params)
    for (std::size_t i = 0; i < t.numel(); ++i) ASSERT_NEAR(before[name].data[i] - t.data[i], 1e-3, 1e-9);
}

TEST(TrainToy, DeterministicForFixedSeed) {
  TrainConfig cfg;
  cfg.arch = tiny_arch();
  cfg.batch_size = 2;
  cfg.seed = 4;
  cfg.total_iterations = 10;
  const auto pairs = toy_pairs(4, 16);
  const auto a = train_toy(cfg, pairs, 5);
  const auto b = train_toy(cfg, pairs, 5);
  ASSERT_EQ(a.curve.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(a.curve[i].loss, b.curve[i].loss);
  EXPECT_EQ(a.weights.params.at("head.weight").data, b.weights.params.at("head.weight").data);
  cfg.workers = 2;
  EXPECT_EQ(train_toy(cfg, pairs, 5).curve.back().loss, a.curve.back().loss);
}

TEST(TrainToy, ReducesLossOnSmallDataset) {
  TrainConfig cfg;
  cfg.arch = tiny_arch();
  cfg.lr_initial = 1e-3;
  cfg.total_iterations = 40;
  cfg.seed = 1;
  const auto pairs = toy_pairs(4, 16);
  const double before = dataset_loss(init_weights(cfg.arch, cfg.seed), pairs, cfg.fft_loss_weight);
  const auto r = train_toy(cfg, pairs);
  EXPECT_LT(dataset_loss(r.weights, pairs, cfg.fft_loss_weight), before);
}

TEST(TrainToy, RejectsBadDatasets) {
  TrainConfig cfg;
  cfg.arch = tiny_arch();
  EXPECT_THROW(train_toy(cfg, {}, 1), InvalidArgument);
  EXPECT_THROW(train_toy(cfg, toy_pairs(3, 16), 1), InvalidArgument);
  EXPECT_THROW(train_toy(cfg, toy_pairs(4, 16), cfg.total_iterations + 1), InvalidArgument);
  auto pairs = toy_pairs(4, 16);
  pairs[2].clean = Tensor4<float>(1, 3, 8, 8);
  EXPECT_THROW(train_toy(cfg, pairs, 1), InvalidArgument);
}

TEST(LossCsv, HeaderAndRows) {
  std::ostringstream os;
  write_loss_csv(os, {{0, 1e-4, 0.5}, {1, 1e-4, 0.25}});
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "iteration,lr,loss");
  std::getline(is, line);
  EXPECT_EQ(line, "0,0.0001,0.5");
  std::getline(is, line);
  EXPECT_EQ(line, "1,0.0001,0.25");
  EXPECT_FALSE(std::getline(is, line));
}
