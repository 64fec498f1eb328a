#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "htprior/htprior.hpp"

using namespace htprior;

namespace {

// -g'' of a unit-area Gaussian, evaluated independently of the library.
std::vector<double> reference_laplacian(double sigma, int support) {
  std::vector<double> t;
  const int half = support / 2;
  for (int i = -half; i <= half; ++i) {
    const double x = i;
    const double g = std::exp(-x * x / (2 * sigma * sigma)) / (sigma * std::sqrt(2 * kPi));
    t.push_back(g * (sigma * sigma - x * x) / std::pow(sigma, 4));
  }
  double mean = 0, l1 = 0;
  for (double v : t) mean += v / support;
  for (double& v : t) l1 += std::abs(v -= mean);
  for (double& v : t) v /= l1;
  return t;
}

BlockConfig config_for(BlockVariant v, std::size_t c = 2) {
  BlockConfig b;
  b.variant = v;
  b.channels_in = b.channels_mid = b.channels_out = c;
  if (v == BlockVariant::kFull) b.channels_out = 3;
  return b;
}

}  // namespace

TEST(Laplacian, MatchesIndependentEvaluation) {
  for (double sigma : {0.5, 1.0, 1.7, 2.5}) {
    const auto f = laplacian_filter(sigma, 9);
    const auto ref = reference_laplacian(sigma, 9);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(f.taps[i], ref[i], 1e-12) << sigma << " tap " << i;
  }
}

TEST(Laplacian, SigmaOneSignPattern) {
  // taps at +-1 vanish up to the mean shift; every other tap is negative
  const auto f = laplacian_filter(1.0, 9);
  EXPECT_GT(f.taps[4], 0.0);
  for (std::size_t i : {0u, 1u, 2u, 6u, 7u, 8u}) EXPECT_LT(f.taps[i], 0.0) << i;
  EXPECT_LT(std::abs(f.taps[3]), 1e-3);
  EXPECT_LT(std::abs(f.taps[5]), 1e-3);
  const auto wide = laplacian_filter(2.5, 9);
  for (std::size_t i = 2; i <= 6; ++i) EXPECT_GT(wide.taps[i], 0.0) << i;
  EXPECT_LT(wide.taps[0], 0.0);
  EXPECT_LT(wide.taps[8], 0.0);
}

TEST(Laplacian, InvariantsOverRandomScales) {
  std::mt19937_64 rng(31);
  for (const auto& f : init_laplacian_filters(1000, 9, {0.5, 2.5}, rng)) {
    double sum = 0, l1 = 0;
    for (double v : f.taps) {
      sum += v;
      l1 += std::abs(v);
    }
    ASSERT_NEAR(sum, 0.0, 1e-6);
    ASSERT_NEAR(l1, 1.0, 1e-6);
    ASSERT_GT(f.taps[4], 0.0);
    for (std::size_t i = 0; i < 4; ++i) ASSERT_EQ(f.taps[i], f.taps[8 - i]);
  }
}

TEST(Laplacian, SeededDrawsRepeat) {
  std::mt19937_64 a(5), b(5);
  const auto fa = init_laplacian_filters(10, 7, {0.5, 2.5}, a);
  const auto fb = init_laplacian_filters(10, 7, {0.5, 2.5}, b);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(fa[i].taps, fb[i].taps);
}

TEST(Laplacian, RejectsBadArguments) {
  std::mt19937_64 rng(1);
  EXPECT_THROW(laplacian_filter(0.0, 9), ConfigError);
  EXPECT_THROW(laplacian_filter(-1.0, 9), ConfigError);
  EXPECT_THROW(laplacian_filter(1.0, 8), ConfigError);
  EXPECT_THROW(init_laplacian_filters(3, 9, {0.0, 1.0}, rng), ConfigError);
  EXPECT_THROW(init_laplacian_filters(3, 9, {2.0, 1.0}, rng), ConfigError);
}

TEST(Block, NoConvIsPureTransformPair) {
  std::mt19937_64 rng(32);
  const auto mask = build_vote_mask(build_grid(12, 10));
  const BlockConfig cfg = config_for(BlockVariant::kNoConv);
  ParamSet<float> ps;
  add_block_params(ps, cfg, "b", rng);
  EXPECT_TRUE(ps.all().empty());
  const Tensor F = random_uniform<float>(Shape{10, 12, 2}, rng);
  Tape<float> tape;
  const Tensor out = block_forward(tape, tape.constant(F), cfg, mask, ps, "b", false).value();
  ASSERT_EQ(out.shape(), (Shape{10, 12, 4}));
  const Tensor B = iht_forward(ht_forward(F, *mask), *mask);
  for (std::size_t y = 0; y < 10; ++y)
    for (std::size_t x = 0; x < 12; ++x)
      for (std::size_t c = 0; c < 2; ++c) {
        EXPECT_EQ(out.at(y, x, c), F.at(y, x, c));
        EXPECT_NEAR(out.at(y, x, c + 2), B.at(y, x, c), 1e-6);
      }
  Tape<float> t2;
  const Tensor zero = block_forward(t2, t2.constant(Tensor(Shape{10, 12, 2})), cfg, mask, ps, "b", false).value();
  for (float v : zero.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Block, OutputChannelsForEveryVariant) {
  const auto mask = build_vote_mask(build_grid(8, 8));
  for (int v = 0; v <= 4; ++v) {
    std::mt19937_64 rng(33);
    const BlockConfig cfg = config_for(static_cast<BlockVariant>(v));
    ParamSet<float> ps;
    add_block_params(ps, cfg, "b", rng);
    Tape<float> tape;
    const Tensor out =
        block_forward(tape, tape.constant(random_uniform<float>(Shape{8, 8, 2}, rng)), cfg, mask, ps, "b", false)
            .value();
    EXPECT_EQ(out.dim(2), cfg.output_channels()) << to_string(cfg.variant);
    EXPECT_EQ(out.dim(2), 2 + cfg.branch_channels());
  }
}

TEST(Block, SeededInitIsBitIdentical) {
  for (int v = 1; v <= 4; ++v) {
    std::mt19937_64 a(34), b(34);
    ParamSet<float> pa, pb;
    add_block_params(pa, config_for(static_cast<BlockVariant>(v)), "b", a);
    add_block_params(pb, config_for(static_cast<BlockVariant>(v)), "b", b);
    const auto la = pa.all(), lb = pb.all();
    ASSERT_EQ(la.size(), lb.size());
    for (std::size_t i = 0; i < la.size(); ++i) EXPECT_EQ(max_abs_diff(la[i]->value, lb[i]->value), 0.0);
  }
}

TEST(Block, LaplacianKernelIsChannelwise) {
  std::mt19937_64 rng(35);
  const BlockConfig cfg = config_for(BlockVariant::kLaplacian1D, 3);
  ParamSet<float> ps;
  add_block_params(ps, cfg, "b", rng);
  const Tensor& w = ps.get("b.laplacian").value;
  ASSERT_EQ(w.shape(), (Shape{9, 1, 3}));
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0;
    for (std::size_t t = 0; t < 9; ++t) sum += w[t * 3 + c];
    EXPECT_NEAR(sum, 0.0, 1e-6);
    EXPECT_GT(w[4 * 3 + c], 0.0f);
  }
}

TEST(Block, ConfigurationErrors) {
  std::mt19937_64 rng(36);
  const auto mask = build_vote_mask(build_grid(8, 8));
  BlockConfig cfg = config_for(BlockVariant::kFull);
  cfg.channels_mid = 5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = config_for(BlockVariant::kPlain1D);
  cfg.support = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = config_for(BlockVariant::kPlain1D);
  ParamSet<float> ps;
  add_block_params(ps, cfg, "b", rng);
  Tape<float> tape;
  EXPECT_THROW(block_forward(tape, tape.constant(Tensor(Shape{8, 8, 3})), cfg, mask, ps, "b", false), ConfigError);
  EXPECT_THROW(block_forward(tape, tape.constant(Tensor(Shape{8, 9, 2})), cfg, mask, ps, "b", false), ConfigError);
}

TEST(Block, LaplacianFilteringRecoversDashedLine) {
  // dashes along y = 32 plus scattered noise; the Hough branch should light
  // up the whole underlying line, gaps included
  const std::size_t n = 64;
  const auto mask = build_vote_mask(build_grid(n, n));
  Tensor F(Shape{n, n, 1});
  for (std::size_t x = 2; x + 2 < n; ++x)
    if ((x / 4) % 2 == 0) F.at(32, x, 0) = 1.0f;
  std::mt19937_64 rng(37);
  std::uniform_int_distribution<std::size_t> pos(0, n - 1);
  for (int i = 0; i < 20; ++i) F.at(pos(rng), pos(rng), 0) = 1.0f;

  ParamSet<float> ps;
  Tensor w(Shape{9, 1, 1});
  const auto lap = laplacian_filter(1.0, 9);
  for (std::size_t i = 0; i < 9; ++i) w[i] = static_cast<float>(lap.taps[i]);
  ps.add("b.laplacian", w);
  auto ratio = [&](BlockVariant v) {
    Tape<float> tape;
    const Tensor out = block_forward(tape, tape.constant(F), config_for(v, 1), mask, ps, "b", false).value();
    double on = 0, off = 0;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) (y == 32 ? on : off) += out.at(y, x, 1);
    return (on / n) / (off / static_cast<double>(n * n - n));
  };
  const double filtered = ratio(BlockVariant::kLaplacian1D);
  EXPECT_GT(filtered, 3.0);
  EXPECT_GT(filtered, ratio(BlockVariant::kNoConv));
}

TEST(PriorModels, ParameterCounts) {
  auto count = [](const std::string& kind, bool bias) {
    ModelSpec s;
    set_model_kind(s, kind);
    s.global_bias = bias;
    Model<float> m(s);
    std::size_t n = 0;
    for (auto* p : m.parameters()) n += p->value.size();
    return n;
  };
  EXPECT_EQ(count("local", false), 10u);
  EXPECT_EQ(count("global", false), 3u);
  EXPECT_EQ(count("local_global", false), 3u);
  EXPECT_EQ(count("global", true), 4u);
}

TEST(PriorModels, LocalGlobalGatesOnInput) {
  for (bool bias : {false, true}) {
    ModelSpec s;
    set_model_kind(s, "local_global");
    s.global_bias = bias;
    Model<float> m(s);
    for (auto* p : m.parameters())
      for (auto& v : p->value.data()) v = 0.5f;
    const Tensor out = m.predict(Tensor(Shape{100, 100, 1}));
    for (float v : out.data()) ASSERT_EQ(v, 0.0f);
  }
}

TEST(PriorModels, GlobalInitIsLaplacian) {
  ModelSpec s;
  set_model_kind(s, "global");
  Model<float> m(s);
  const Tensor& w = m.params().get("global.rho").value;
  ASSERT_EQ(w.size(), 3u);
  EXPECT_GT(w[1], 0.0f);
  EXPECT_EQ(w[0], w[2]);
  EXPECT_NEAR(w[0] + w[1] + w[2], 0.0, 1e-6);
}

TEST(PriorModels, BiasedGlobalPassesGradientCheck) {
  ModelSpec s;
  set_model_kind(s, "local_global");
  s.width = s.height = 8;
  s.global_bias = true;
  Model<float> model(s);
  model.params().get("global.bias").value[0] = -0.01f;
  Model<double> shadow = model.cast<double>();
  std::mt19937_64 rng(38);
  const Tensor img = random_uniform<float>(Shape{8, 8, 1}, rng, 0.0, 1.0);
  const Tensor tgt = random_uniform<float>(Shape{8, 8, 1}, rng, 0.0, 1.0);
  const auto r = compare_gradients(
      model.params(),
      [&](Tape<float>& t) { return model.loss(model.forward(t, t.constant(img), true), t.constant(tgt)); },
      shadow.params(), [&](std::vector<bool>* signs) {
        return model_loss(shadow, img.cast<double>(), tgt.cast<double>(), signs);
      });
  EXPECT_LT(r.max_relative_error, 1e-3);
}
