#include <gtest/gtest.h>

#include <random>

#include "mulvuln/pool.hpp"

using namespace mulvuln;

namespace {

KeySet keys_from(const std::vector<std::vector<double>>& rows) {
  KeySet k;
  for (const auto& r : rows) k.keys.push_back(Tensor::vector(r, true));
  return k;
}

std::vector<double> random_vec(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(d);
  for (double& x : v) x = dist(rng);
  return v;
}

double brute_cosine(const std::vector<double>& a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

}  // namespace

TEST(Select, HandComputedArgmax) {
  const auto keys = keys_from({{1, 0}, {0, 1}, {-1, 0}, {1, 1}});
  const std::vector<double> q = {2.0, 1.0};
  const auto sel = select(q, keys, 1);
  EXPECT_EQ(sel.i_star(), 3u);  // cos = 3 / (sqrt5 sqrt2) = 0.9487 beats 2/sqrt5 = 0.8944
  EXPECT_NEAR(sel.scores[0], 3.0 / std::sqrt(10.0), 1e-15);
  const auto top3 = select(q, keys, 3);
  EXPECT_EQ(top3.indices, (std::vector<std::size_t>{3, 0, 1}));
}

TEST(Select, TiesResolveToLowestIndex) {
  const auto keys = keys_from({{0, 1}, {1, 0}, {2, 0}, {5, 0}});
  const std::vector<double> q = {1.0, 0.0};
  EXPECT_EQ(select(q, keys, 3).indices, (std::vector<std::size_t>{1, 2, 3}));
}

TEST(Select, RejectsBadInputs) {
  const auto keys = keys_from({{1, 0}, {0, 1}});
  const std::vector<double> zero = {0.0, 0.0}, q = {1.0, 0.0}, wide = {1.0, 0.0, 0.0};
  EXPECT_THROW(select(zero, keys, 1), ShapeError);
  EXPECT_THROW(select(q, keys, 0), ConfigError);
  EXPECT_THROW(select(q, keys, 3), ConfigError);
  EXPECT_THROW(select(wide, keys, 1), ShapeError);
  EXPECT_THROW(select_masked(q, keys, {}), ConfigError);
  EXPECT_THROW(select_masked(q, keys, {5}), ConfigError);
}

TEST(Select, PropertyMatchesBruteForceTopK) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t s = 2 + rng() % 10, d = 2 + rng() % 6, k = 1 + rng() % s;
    KeySet keys;
    for (std::size_t i = 0; i < s; ++i) keys.keys.push_back(Tensor::vector(random_vec(d, rng)));
    const auto q = random_vec(d, rng);
    std::vector<std::pair<double, std::size_t>> brute;
    for (std::size_t i = 0; i < s; ++i) brute.emplace_back(-brute_cosine(q, keys.keys[i].data()), i);
    std::sort(brute.begin(), brute.end());
    const auto sel = select(q, keys, k);
    ASSERT_EQ(sel.indices.size(), k);
    for (std::size_t j = 0; j < k; ++j) {
      EXPECT_EQ(sel.indices[j], brute[j].second);
      EXPECT_NEAR(sel.scores[j], -brute[j].first, 1e-12);
    }
  }
}

// Cosine ignores positive rescaling of the query and of any key.
TEST(Select, PropertyScaleInvariance) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> mag(1e-3, 1e3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t s = 7, d = 5;
    KeySet keys, scaled;
    for (std::size_t i = 0; i < s; ++i) {
      auto v = random_vec(d, rng);
      keys.keys.push_back(Tensor::vector(v));
      const double c = mag(rng);
      for (double& x : v) x *= c;
      scaled.keys.push_back(Tensor::vector(v));
    }
    auto q = random_vec(d, rng);
    auto q2 = q;
    const double c = mag(rng);
    for (double& x : q2) x *= c;
    EXPECT_EQ(select(q, keys, 3).indices, select(q2, scaled, 3).indices);
  }
}

TEST(SelectMasked, RestrictedToAllowedAndSingletonIsForced) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    KeySet keys;
    for (std::size_t i = 0; i < 14; ++i) keys.keys.push_back(Tensor::vector(random_vec(4, rng)));
    const auto q = random_vec(4, rng);
    const std::size_t only = rng() % 14;
    EXPECT_EQ(select_masked(q, keys, {only}).i_star(), only);
    const std::vector<std::size_t> allowed = {only, (only + 5) % 14};
    const auto sel = select_masked(q, keys, allowed);
    const double a = brute_cosine(q, keys.keys[allowed[0]].data()), b = brute_cosine(q, keys.keys[allowed[1]].data());
    EXPECT_EQ(sel.i_star(), a >= b ? (a == b ? std::min(allowed[0], allowed[1]) : allowed[0]) : allowed[1]);
  }
}

TEST(Assignment, ContiguousBlocksAndRoundTrip) {
  const auto a = LanguageAssignment::contiguous(2);
  EXPECT_EQ(a.allowed(Language::C), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(a.allowed(Language::PYTHON), (std::vector<std::size_t>{12, 13}));
  EXPECT_NO_THROW(a.validate(14));
  EXPECT_THROW(a.validate(13), ConfigError);
  EXPECT_EQ(LanguageAssignment::parse(a.to_string()), a);
  EXPECT_EQ(a.to_string().substr(0, 12), "C:0,1;CPP:2,");
}

TEST(Assignment, ValidationCatchesOverlapAndGaps) {
  auto a = LanguageAssignment::contiguous(1);
  a.indices[1] = {0};
  EXPECT_THROW(a.validate(7), ConfigError);
  a = LanguageAssignment::contiguous(1);
  a.indices[6].clear();
  EXPECT_THROW(a.validate(7), ConfigError);
  EXPECT_THROW(LanguageAssignment::parse("C:0;RUST:1"), ConfigError);
  EXPECT_THROW(LanguageAssignment::parse("C0"), ConfigError);
  EXPECT_THROW(LanguageAssignment::parse("C:x"), ConfigError);
}

TEST(Adapt, PrependsSelectedMatricesInOrder) {
  std::mt19937_64 rng(24);
  const auto pool = ParameterPool::init_random(4, 3, 2, rng, 1.0);
  const Tensor x_e = Tensor::matrix(2, 2, {9, 8, 7, 6});
  Selection sel;
  sel.indices = {2, 0};
  sel.scores = {0.5, 0.1};
  const auto xp = adapt(sel, pool, x_e);
  EXPECT_EQ(xp.prompt_len, 6u);
  ASSERT_EQ(xp.matrix.shape(), (Shape{8, 2}));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_EQ(xp.matrix.at(r, c), pool.matrices[2].at(r, c));
      EXPECT_EQ(xp.matrix.at(3 + r, c), pool.matrices[0].at(r, c));
    }
  EXPECT_EQ(xp.matrix.at(6, 0), 9.0);
  EXPECT_EQ(xp.matrix.at(7, 1), 6.0);
  EXPECT_THROW(adapt(sel, pool, Tensor::matrix(1, 3, {1, 2, 3})), ShapeError);
}

TEST(Adapt, GradientReachesOnlySelectedMatrices) {
  std::mt19937_64 rng(25);
  auto pool = ParameterPool::init_random(3, 2, 2, rng, 1.0);
  Selection sel;
  sel.indices = {1};
  sel.scores = {1.0};
  for (auto& m : pool.matrices) m.zero_grad();
  const auto xp = adapt(sel, pool, Tensor::matrix(1, 2, {1, 1}));
  backward(sum(xp.matrix));
  for (std::size_t i = 0; i < 3; ++i)
    for (double g : pool.matrices[i].grad()) EXPECT_EQ(g, i == 1 ? 1.0 : 0.0);
}

TEST(Keys, ReinitReplacesOnlyDegenerateKeys) {
  auto keys = keys_from({{0, 0}, {1, 2}, {1e-20, 0}});
  std::mt19937_64 rng(26);
  EXPECT_EQ(keys.reinit_degenerate(rng), 2u);
  EXPECT_GT(vector_norm(keys.keys[0].data()), 0.0);
  EXPECT_EQ(keys.keys[1][1], 2.0);
  EXPECT_GT(vector_norm(keys.keys[2].data()), 1e-12);
}

TEST(Query, IsFirstRow) {
  const Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor q = query(x);
  EXPECT_EQ(q.shape(), (Shape{2}));
  EXPECT_EQ(q[1], 2.0);
}
