#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "mulvuln/tensor.hpp"

using namespace mulvuln;

namespace {

Tensor rand_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0, bool rg = true) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = d(rng);
  return Tensor::from(std::move(shape), std::move(v), rg);
}

// Scalar reduction with fixed random weights: u^T t v for matrices, w.t for
// vectors, so every coordinate carries a distinct weight.
Tensor reduce(const Tensor& t) {
  std::mt19937_64 rng(4242);
  if (t.rank() == 0) return t;
  if (t.rank() == 1) return dot(t, rand_tensor(t.shape(), rng, 1.0, false));
  const Tensor u = rand_tensor({1, t.rows()}, rng, 1.0, false);
  const Tensor v = rand_tensor({t.cols(), 1}, rng, 1.0, false);
  return sum(matmul(matmul(u, t), v));
}

// Test-side central differences, independent of the library's grad_check.
std::vector<double> numeric_grad(const std::function<double()>& f, Tensor& x, double eps = 1e-6) {
  std::vector<double> g(x.size());
  auto v = x.mutable_data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double o = v[i];
    v[i] = o + eps;
    const double fp = f();
    v[i] = o - eps;
    const double fm = f();
    v[i] = o;
    g[i] = (fp - fm) / (2 * eps);
  }
  return g;
}

void expect_grad_matches(const std::function<Tensor()>& build, std::vector<Tensor*> inputs, double tol = 1e-6) {
  for (Tensor* x : inputs) x->zero_grad();
  backward(build());
  for (Tensor* x : inputs) {
    const std::vector<double> analytic(x->grad().begin(), x->grad().end());
    const auto numeric = numeric_grad([&] { NoGradGuard g; return build().item(); }, *x);
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-3});
      EXPECT_LT(std::abs(analytic[i] - numeric[i]) / denom, tol) << "coordinate " << i;
    }
  }
}

}  // namespace

TEST(Tensor, FactoriesValidateShape) {
  EXPECT_THROW(Tensor::from({2, 3}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor::from({2, 2, 2}, std::vector<double>(8)), ShapeError);
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(m.rows(), 2u);
  EXPECT_EQ(m.cols(), 3u);
  EXPECT_DOUBLE_EQ(m.at(1, 2), 6.0);
  EXPECT_DOUBLE_EQ(Tensor::scalar(2.5).item(), 2.5);
}

TEST(Tensor, MatmulAgainstHandComputed) {
  const Tensor a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor b = Tensor::matrix(2, 3, {5, 6, 7, 8, 9, 10});
  const Tensor c = matmul(a, b);
  const std::vector<double> want = {21, 24, 27, 47, 54, 61};
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_DOUBLE_EQ(c[i], want[i]);
  const Tensor bt = matmul_bt(a, Tensor::matrix(3, 2, {5, 8, 6, 9, 7, 10}));
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_DOUBLE_EQ(bt[i], want[i]);
  EXPECT_THROW(matmul(a, Tensor::matrix(3, 1, {1, 2, 3})), ShapeError);
}

TEST(Tensor, RankOneLhsMatmulIsRowVector) {
  const Tensor v = Tensor::vector({1, 2});
  const Tensor b = Tensor::matrix(2, 2, {1, 0, 0, 3});
  const Tensor out = matmul(v, b);
  EXPECT_EQ(out.rank(), 1u);
  EXPECT_DOUBLE_EQ(out[1], 6.0);
}

TEST(Tensor, GradientsOfElementaryOps) {
  std::mt19937_64 rng(1);
  Tensor a = rand_tensor({3, 4}, rng), b = rand_tensor({3, 4}, rng), bias = rand_tensor({4}, rng);
  Tensor w = rand_tensor({4, 5}, rng), w2 = rand_tensor({6, 4}, rng);
  expect_grad_matches([&] { return reduce(add(a, b)); }, {&a, &b});
  expect_grad_matches([&] { return reduce(sub(a, b)); }, {&a, &b});
  expect_grad_matches([&] { return reduce(scale(a, -1.7)); }, {&a});
  expect_grad_matches([&] { return reduce(add_bias(a, bias)); }, {&a, &bias});
  expect_grad_matches([&] { return reduce(matmul(a, w)); }, {&a, &w});
  expect_grad_matches([&] { return reduce(matmul_bt(a, w2)); }, {&a, &w2});
}

TEST(Tensor, GradientsOfNonlinearities) {
  std::mt19937_64 rng(2);
  Tensor x = rand_tensor({3, 5}, rng, 2.0);
  Tensor gamma = rand_tensor({5}, rng), beta = rand_tensor({5}, rng);
  expect_grad_matches([&] { return reduce(softmax_rows(x)); }, {&x});
  expect_grad_matches([&] { return reduce(layer_norm(x, gamma, beta)); }, {&x, &gamma, &beta}, 1e-5);
  expect_grad_matches([&] { return reduce(gelu(x)); }, {&x});
  expect_grad_matches([&] { return reduce(relu(x)); }, {&x});
}

TEST(Tensor, GradientsOfReductionsAndReshapes) {
  std::mt19937_64 rng(3);
  Tensor x = rand_tensor({4, 6}, rng), y = rand_tensor({2, 6}, rng), z = rand_tensor({4, 3}, rng);
  Tensor v = rand_tensor({6}, rng), u = rand_tensor({6}, rng);
  expect_grad_matches([&] { return sum(x); }, {&x});
  expect_grad_matches([&] { return dot(v, u); }, {&v, &u});
  expect_grad_matches([&] { return reduce(mean_rows(x, 1, 3)); }, {&x});
  expect_grad_matches([&] { return reduce(row(x, 2)); }, {&x});
  expect_grad_matches([&] { return reduce(concat_rows({y, x})); }, {&x, &y});
  expect_grad_matches([&] { return reduce(slice_cols(x, 2, 5)); }, {&x});
  expect_grad_matches([&] { return reduce(concat_cols({x, z})); }, {&x, &z});
  const std::vector<std::int32_t> ids = {3, 0, 3, 1};
  expect_grad_matches([&] { return reduce(gather_rows(x, ids)); }, {&x});
}

TEST(Tensor, GradientsOfLossAndSimilarity) {
  std::mt19937_64 rng(4);
  Tensor logits = rand_tensor({2}, rng, 3.0), a = rand_tensor({7}, rng), b = rand_tensor({7}, rng);
  expect_grad_matches([&] { return cross_entropy_logits(logits, 1); }, {&logits});
  expect_grad_matches([&] { return cosine_similarity(a, b); }, {&a, &b});
}

TEST(Tensor, SoftmaxMaskGivesExactZeros) {
  const Tensor x = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const std::vector<std::uint8_t> valid = {1, 0, 1};
  const Tensor p = softmax_rows(x, valid);
  EXPECT_EQ(p.at(0, 1), 0.0);
  EXPECT_EQ(p.at(1, 1), 0.0);
  EXPECT_NEAR(p.at(0, 0) + p.at(0, 2), 1.0, 1e-15);
  EXPECT_NEAR(p.at(0, 2), std::exp(3.0) / (std::exp(1.0) + std::exp(3.0)), 1e-15);
  const std::vector<std::uint8_t> bad = {1, 1};
  EXPECT_THROW(softmax_rows(x, bad), ShapeError);
}

TEST(Tensor, CrossEntropyIsStableForLargeLogits) {
  const Tensor l = Tensor::vector({1000.0, -1000.0});
  EXPECT_NEAR(cross_entropy_logits(l, 0).item(), 0.0, 1e-12);
  EXPECT_NEAR(cross_entropy_logits(l, 1).item(), 2000.0, 1e-9);
  EXPECT_NEAR(cross_entropy_logits(Tensor::vector({0.0, 0.0}), 1).item(), std::log(2.0), 1e-15);
}

TEST(Tensor, LayerNormNormalizesRows) {
  std::mt19937_64 rng(5);
  const Tensor x = rand_tensor({3, 8}, rng, 4.0, false);
  const Tensor out = layer_norm(x, Tensor::from({8}, std::vector<double>(8, 1.0)), Tensor::zeros({8}));
  for (std::size_t r = 0; r < 3; ++r) {
    double mean = 0, var = 0;
    for (std::size_t c = 0; c < 8; ++c) mean += out.at(r, c) / 8;
    for (std::size_t c = 0; c < 8; ++c) var += (out.at(r, c) - mean) * (out.at(r, c) - mean) / 8;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(Tensor, GeluTanhApproximation) {
  const double x = 0.7;
  const double want = 0.5 * x * (1 + std::tanh(std::sqrt(2 / M_PI) * (x + 0.044715 * x * x * x)));
  EXPECT_NEAR(gelu(Tensor::vector({x}))[0], want, 1e-15);
}

TEST(Tensor, CosineRejectsZeroVectorAndClamps) {
  EXPECT_THROW(cosine_similarity(Tensor::vector({0, 0}), Tensor::vector({1, 0})), ShapeError);
  const Tensor a = Tensor::vector({1e-3, 2e-3, 3e-3});
  const double c = cosine_similarity(a, a).item();
  EXPECT_LE(c, 1.0);
  EXPECT_NEAR(c, 1.0, 1e-15);
  EXPECT_NEAR(cosine(a.data(), Tensor::vector({-1, -2, -3}).data()), -1.0, 1e-15);
}

TEST(Tensor, BackwardRequiresScalar) {
  Tensor a = Tensor::vector({1, 2}, true);
  EXPECT_THROW(backward(scale(a, 2.0)), ShapeError);
}

TEST(Tensor, LeafGradientsAccumulateAcrossCalls) {
  Tensor a = Tensor::vector({1, 2}, true);
  backward(sum(scale(a, 3.0)));
  backward(sum(scale(a, 3.0)));
  EXPECT_DOUBLE_EQ(a.grad()[0], 6.0);
  a.zero_grad();
  EXPECT_DOUBLE_EQ(a.grad()[1], 0.0);
}

TEST(Tensor, SharedSubexpressionGradientsSum) {
  Tensor a = Tensor::vector({2.0}, true);
  const Tensor b = scale(a, 3.0);
  backward(sum(add(b, b)));  // d/da (6a) = 6
  EXPECT_DOUBLE_EQ(a.grad()[0], 6.0);
}

TEST(Tensor, NoGradGuardSkipsGraph) {
  Tensor a = Tensor::vector({1, 2}, true);
  Tensor out;
  {
    NoGradGuard g;
    out = sum(a);
  }
  EXPECT_FALSE(out.requires_grad());
  backward(out);
  EXPECT_FALSE(a.has_grad());
  EXPECT_TRUE(sum(a).requires_grad());
}

TEST(Tensor, GradSinkRedirectsLeafGradients) {
  Tensor a = Tensor::vector({1, 2}, true);
  GradSink sink;
  backward(sum(scale(a, 2.0)), &sink);
  EXPECT_FALSE(a.has_grad());
  const auto* buf = sink.find(a);
  ASSERT_NE(buf, nullptr);
  EXPECT_DOUBLE_EQ((*buf)[0], 2.0);
  EXPECT_DOUBLE_EQ((*buf)[1], 2.0);
}

TEST(Tensor, DetachCutsTheGraph) {
  Tensor a = Tensor::vector({1, 2}, true);
  const Tensor d = scale(a, 2.0).detach();
  EXPECT_FALSE(d.requires_grad());
  EXPECT_DOUBLE_EQ(d[1], 4.0);
}

TEST(Tensor, DropoutScalesKeptUnits) {
  Tensor x = Tensor::vector({1, 2, 3, 4}, true);
  const Tensor y = dropout(x, 0.5, {1, 0, 1, 0});
  EXPECT_DOUBLE_EQ(y[0], 2.0);
  EXPECT_DOUBLE_EQ(y[1], 0.0);
  backward(sum(y));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 0.0);
}

TEST(GradCheck, PassesForCorrectGraph) {
  std::mt19937_64 rng(7);
  Tensor w = rand_tensor({3, 3}, rng);
  const Tensor x = rand_tensor({2, 3}, rng, 1.0, false);
  const auto rep = grad_check([&] { return reduce(gelu(matmul(x, w))); }, w);
  EXPECT_TRUE(rep.passed);
  EXPECT_LT(rep.max_relative_error, 1e-6);
}

TEST(GradCheck, FlagsAWrongGradient) {
  // A hand-built op whose backward is off by a factor of two.
  Tensor w = Tensor::vector({0.3, -0.2}, true);
  auto bad_square = [&] {
    std::vector<double> out = {w[0] * w[0] + w[1] * w[1]};
    return detail::make_result({}, std::move(out), {w}, [](const detail::Node& self, std::span<double* const> pg) {
      const auto& v = self.parents[0]->value;
      for (std::size_t i = 0; i < v.size(); ++i) pg[0][i] += self.grad[0] * v[i];
    });
  };
  const auto rep = grad_check(bad_square, w);
  EXPECT_FALSE(rep.passed);
  EXPECT_NEAR(rep.max_relative_error, 0.5, 1e-6);
}

// Property: matmul is linear in each argument.
TEST(TensorProperty, MatmulIsBilinear) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor a = rand_tensor({3, 4}, rng, 1.0, false), b = rand_tensor({3, 4}, rng, 1.0, false);
    const Tensor w = rand_tensor({4, 2}, rng, 1.0, false);
    const Tensor lhs = matmul(add(a, scale(b, 2.0)), w);
    const Tensor rhs = add(matmul(a, w), scale(matmul(b, w), 2.0));
    for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-12);
  }
}

// Property: softmax rows sum to one and are shift invariant.
TEST(TensorProperty, SoftmaxRowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = rand_tensor({2, 6}, rng, 5.0, false);
    const Tensor p = softmax_rows(x);
    const Tensor q = softmax_rows(add(x, Tensor::from({2, 6}, std::vector<double>(12, 17.0))));
    for (std::size_t r = 0; r < 2; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 6; ++c) {
        s += p.at(r, c);
        EXPECT_NEAR(p.at(r, c), q.at(r, c), 1e-12);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}
