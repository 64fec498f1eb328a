#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "htprior/htprior.hpp"

using namespace htprior;

namespace {

// Brute-force nearest rho center; ties go to the lower index.
std::size_t brute_bin(const HoughGrid& g, std::size_t x, std::size_t y, std::size_t t) {
  const double xc = static_cast<double>(x) - (static_cast<double>(g.width) - 1.0) / 2.0;
  const double yc = static_cast<double>(y) - (static_cast<double>(g.height) - 1.0) / 2.0;
  const double theta = kPi * static_cast<double>(t) / static_cast<double>(g.n_theta);
  const double rho = xc * std::cos(theta) + yc * std::sin(theta);
  std::size_t best = 0;
  for (std::size_t r = 1; r < g.n_rho; ++r)
    if (std::abs(rho - g.rho_centers[r]) < std::abs(rho - g.rho_centers[best])) best = r;
  return best;
}

}  // namespace

TEST(HoughGrid, DefaultGridOn128) {
  const auto g = build_grid(128, 128, 183, 60);
  EXPECT_NEAR(g.diagonal, 181.019, 1e-3);
  EXPECT_NEAR(g.rho_step(), g.diagonal / 182.0, 1e-12);
  EXPECT_NEAR(g.rho_step(), 0.9946, 1e-4);
  EXPECT_GE(g.n_rho, static_cast<std::size_t>(std::ceil(g.diagonal)));
  EXPECT_NEAR(build_grid(100, 100).diagonal, 141.421, 1e-3);
}

TEST(HoughGrid, SmallestGridAndSymmetry) {
  const auto g = build_grid(2, 2, 3, 2);
  ASSERT_EQ(g.theta_samples.size(), 2u);
  EXPECT_EQ(g.theta_samples[0], 0.0);
  EXPECT_DOUBLE_EQ(g.theta_samples[1], kPi / 2.0);
  const auto h = build_grid(100, 100);
  EXPECT_DOUBLE_EQ(h.rho_centers.front(), -h.diagonal / 2.0);
  for (std::size_t r = 0; r < h.n_rho; ++r) EXPECT_EQ(h.rho_centers[r], -h.rho_centers[h.n_rho - 1 - r]);
}

TEST(HoughGrid, RejectsDegenerateSizes) {
  EXPECT_THROW(build_grid(1, 10), ConfigError);
  EXPECT_THROW(build_grid(10, 10, 2, 60), ConfigError);
  EXPECT_THROW(build_grid(10, 10, 183, 1), ConfigError);
}

TEST(VoteMask, CenterPixelVotesRhoZero) {
  const auto mask = build_vote_mask(build_grid(9, 9, 15, 12));
  for (std::size_t t = 0; t < 12; ++t) EXPECT_EQ(mask->bin_of(4, 4, t), 7u);
}

TEST(VoteMask, MatchesBruteForceTable) {
  const auto g = build_grid(7, 7, 9, 4);
  const auto mask = build_vote_mask(g);
  for (std::size_t y = 0; y < 7; ++y)
    for (std::size_t x = 0; x < 7; ++x)
      for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(mask->bin_of(x, y, t), brute_bin(g, x, y, t));
}

TEST(VoteMask, InverseIndexIsExactTranspose) {
  for (auto [w, h] : {std::pair<std::size_t, std::size_t>{16, 11}, {100, 100}}) {
    const auto mask = build_vote_mask(build_grid(w, h));
    const auto& g = mask->grid();
    EXPECT_EQ(mask->total_votes(), w * h * g.n_theta);
    // rebuild voter lists from bin_of and compare
    std::vector<std::vector<std::uint32_t>> rebuilt(mask->bins());
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t t = 0; t < g.n_theta; ++t)
          rebuilt[mask->bin_of(x, y, t) * g.n_theta + t].push_back(static_cast<std::uint32_t>(y * w + x));
    for (std::size_t r = 0; r < g.n_rho; ++r)
      for (std::size_t t = 0; t < g.n_theta; ++t) {
        const auto v = mask->voters(r, t);
        ASSERT_EQ(std::vector<std::uint32_t>(v.begin(), v.end()), rebuilt[r * g.n_theta + t]);
      }
  }
}

TEST(VoteMask, DumpListsEveryVote) {
  const auto mask = build_vote_mask(build_grid(3, 2, 5, 4));
  std::ostringstream os;
  mask->dump(os);
  std::istringstream is(os.str());
  std::size_t x, y, t, r, lines = 0;
  while (is >> x >> y >> t >> r) {
    EXPECT_EQ(mask->bin_of(x, y, t), r);
    ++lines;
  }
  EXPECT_EQ(lines, 3u * 2u * 4u);
}

TEST(HtForward, ZeroAndCenterPixel) {
  const auto mask = build_vote_mask(build_grid(9, 9, 15, 12));
  EXPECT_EQ(max_abs_diff(ht_forward(Tensor(Shape{9, 9, 2}), *mask), Tensor(Shape{15, 12, 2})), 0.0);
  Tensor F(Shape{9, 9, 1});
  F.at(4, 4, 0) = 1.0f;
  const Tensor H = ht_forward(F, *mask);
  for (std::size_t r = 0; r < 15; ++r)
    for (std::size_t t = 0; t < 12; ++t) EXPECT_FLOAT_EQ(H.at(r, t, 0), r == 7 ? 1.0f / 9.0f : 0.0f);
}

TEST(HtForward, HorizontalLinePeaksAtNearestBin) {
  const auto grid = build_grid(100, 100);
  const auto mask = build_vote_mask(grid);
  const Raster line = rasterize_line({0.0, kPi / 2.0}, grid);
  const Tensor H = naive_ht_oracle(to_tensor<float>(line), grid);
  std::size_t best = 0;
  for (std::size_t i = 1; i < H.size(); ++i)
    if (H[i] > H[best]) best = i;
  std::size_t r, t;
  nearest_bin(grid, {0.0, kPi / 2.0}, r, t);
  std::size_t dr, dt;
  bin_distance(grid, best / 60, best % 60, r, t, dr, dt);
  EXPECT_LE(dr, 1u);
  EXPECT_EQ(dt, 0u);
  EXPECT_LT(max_abs_diff(H, ht_forward(to_tensor<float>(line), *mask)), 1e-6);
}

TEST(HtForward, ShapeMismatchIsConfigError) {
  const auto mask = build_vote_mask(build_grid(8, 8));
  EXPECT_THROW(ht_forward(Tensor(Shape{8, 9, 1}), *mask), ConfigError);
  EXPECT_THROW(iht_forward(Tensor(Shape{183, 61, 1}), *mask), ConfigError);
  EXPECT_THROW(ht_backward(Tensor(Shape{182, 60, 1}), *mask), ConfigError);
  EXPECT_THROW(iht_backward(Tensor(Shape{8, 8}), *mask), ConfigError);
}

TEST(IhtForward, OnesAndHotBin) {
  const auto mask = build_vote_mask(build_grid(20, 14, 31, 12));
  const Tensor ones = iht_forward(Tensor(Shape{31, 12, 1}, 1.0f), *mask);
  for (float v : ones.data()) EXPECT_NEAR(v, 1.0f, 1e-6);

  Tensor H(Shape{31, 12, 1});
  const std::size_t rs = 17, ts = 5;
  H.at(rs, ts, 0) = 1.0f;
  const Tensor img = iht_forward(H, *mask);
  for (std::size_t y = 0; y < 14; ++y)
    for (std::size_t x = 0; x < 20; ++x)
      EXPECT_FLOAT_EQ(img.at(y, x, 0), mask->bin_of(x, y, ts) == rs ? 1.0f / 12.0f : 0.0f);
}

TEST(IhtForward, BackprojectionPeaksAtDelta) {
  const auto mask = build_vote_mask(build_grid(15, 15, 31, 60));
  for (auto [px, py] : {std::pair<std::size_t, std::size_t>{3, 4}, {7, 7}, {12, 1}}) {
    Tensor F(Shape{15, 15, 1});
    F.at(py, px, 0) = 1.0f;
    const Tensor back = iht_forward(ht_forward(F, *mask), *mask);
    std::size_t best = 0;
    for (std::size_t i = 1; i < back.size(); ++i)
      if (back[i] > back[best]) best = i;
    EXPECT_EQ(best, py * 15 + px);
  }
}

TEST(HoughOracle, FastPathsMatchOracles) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t w = 2 + trial % 15, h = 2 + (trial * 7) % 15, c = 1 + trial % 3;
    const auto grid = build_grid(w, h, 3 + trial % 40, 2 + trial % 20);
    const auto mask = build_vote_mask(grid);
    const Tensor F = random_uniform<float>(Shape{h, w, c}, rng);
    EXPECT_LT(max_abs_diff(ht_forward(F, *mask), naive_ht_oracle(F, grid)), 1e-6);
    const Tensor H = random_uniform<float>(Shape{grid.n_rho, grid.n_theta, c}, rng);
    EXPECT_LT(max_abs_diff(iht_forward(H, *mask), naive_iht_oracle(H, grid)), 1e-6);
  }
  const auto grid = build_grid(16, 16);
  EXPECT_EQ(max_abs_diff(naive_ht_oracle(Tensor(Shape{16, 16, 1}), grid), Tensor(Shape{183, 60, 1})), 0.0);
}

TEST(HoughOracle, SparseInputUsesSameSums) {
  // sparse and dense inputs go through different accumulation paths
  std::mt19937_64 rng(22);
  const auto grid = build_grid(40, 30);
  const auto mask = build_vote_mask(grid);
  Tensor F(Shape{30, 40, 2});
  std::uniform_int_distribution<std::size_t> pick(0, F.size() - 1);
  for (int i = 0; i < 50; ++i) F[pick(rng)] = static_cast<float>(i % 7) * 0.25f - 0.5f;
  EXPECT_LT(max_abs_diff(ht_forward(F, *mask), naive_ht_oracle(F, grid)), 1e-6);
  const Tensor G = random_uniform<float>(Shape{30, 40, 2}, rng);
  Tensor masked = G;
  for (std::size_t i = 0; i < F.size(); ++i) masked[i] = F[i] != 0.0f ? G[i] : 0.0f;
  EXPECT_LT(max_abs_diff(iht_backward(masked, *mask), iht_backward(masked.cast<double>(), *mask).cast<float>()), 1e-6);
}

TEST(HoughProperties, Linearity) {
  std::mt19937_64 rng(23);
  const auto mask = build_vote_mask(build_grid(16, 12));
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor F1 = random_uniform<float>(Shape{12, 16, 2}, rng);
    const Tensor F2 = random_uniform<float>(Shape{12, 16, 2}, rng);
    const float a = 1.5f - 0.3f * trial, b = -0.7f + 0.2f * trial;
    Tensor mix(F1.shape());
    for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = a * F1[i] + b * F2[i];
    const Tensor H1 = ht_forward(F1, *mask), H2 = ht_forward(F2, *mask), Hm = ht_forward(mix, *mask);
    Tensor expected(H1.shape());
    for (std::size_t i = 0; i < expected.size(); ++i) expected[i] = a * H1[i] + b * H2[i];
    EXPECT_LT(max_abs_diff(Hm, expected), 1e-5);
  }
}

TEST(HoughProperties, Adjointness) {
  std::mt19937_64 rng(24);
  const auto mask = build_vote_mask(build_grid(16, 16));
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor F = random_uniform<float>(Shape{16, 16, 3}, rng);
    const Tensor G = random_uniform<float>(Shape{183, 60, 3}, rng);
    const double lhs = dot(ht_forward(F, *mask), G), rhs = dot(F, ht_backward(G, *mask));
    EXPECT_LT(std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-12), 1e-5);
    const double lhs2 = dot(iht_forward(G, *mask), F), rhs2 = dot(G, iht_backward(F, *mask));
    EXPECT_LT(std::abs(lhs2 - rhs2) / std::max(std::abs(lhs2), 1e-12), 1e-5);
  }
  EXPECT_EQ(max_abs_diff(ht_backward(Tensor(Shape{183, 60, 1}), *mask), Tensor(Shape{16, 16, 1})), 0.0);
  EXPECT_EQ(max_abs_diff(iht_backward(Tensor(Shape{16, 16, 1}), *mask), Tensor(Shape{183, 60, 1})), 0.0);
}

TEST(HoughProperties, VoteConservation) {
  std::mt19937_64 rng(25);
  const auto mask = build_vote_mask(build_grid(13, 9));
  const Tensor F = random_uniform<float>(Shape{9, 13, 1}, rng, 0.0, 1.0);
  double in = 0.0, out = 0.0;
  for (float v : F.data()) in += v;
  const Tensor H = ht_forward(F, *mask);
  for (float v : H.data()) out += v;
  EXPECT_NEAR(out, 60.0 / 13.0 * in, 1e-4);
}

TEST(HoughProperties, SquaredHtGradientMatchesCentralDifferences) {
  std::mt19937_64 rng(26);
  const auto mask = build_vote_mask(build_grid(6, 5, 11, 8));
  ParamSet<float> ps;
  auto& F = ps.add("F", random_uniform<float>(Shape{5, 6, 1}, rng));
  ParamSet<double> shadow = ps.cast<double>();
  const auto r = compare_gradients(
      ps,
      [&](Tape<float>& t) {
        auto h = ht(t.param(F), mask);
        return sum(mul(h, h));
      },
      shadow,
      [&](std::vector<bool>*) {
        Tape<double> t;
        auto h = ht(t.constant(shadow.get("F").value), mask);
        return sum(mul(h, h)).value()[0];
      });
  EXPECT_LT(r.max_relative_error, 1e-3);
}
