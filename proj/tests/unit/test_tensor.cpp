#include <gtest/gtest.h>

#include <cmath>

#include "samlm/gru.hpp"
#include "samlm/tensor.hpp"
#include "support/oracles.hpp"

using namespace samlm;

namespace {

Mat random_mat(std::size_t r, std::size_t c, Rng& rng) {
  Mat m(r, c);
  for (double& x : m.data()) x = rng.uniform(-1.0, 1.0);
  return m;
}

}  // namespace

TEST(Matvec, IdentityReturnsInput) {
  const Mat v = Mat::column({1.5, -2.0, 3.25});
  EXPECT_EQ(matvec(Mat::identity(3), v), v);
}

TEST(Matvec, HandComputed) {
  const Mat m(2, 2, {1, 2, 3, 4});
  const Mat out = matvec(m, Mat::column({1, 1}));
  EXPECT_EQ(out, Mat::column({3, 7}));
}

TEST(Matvec, MatchesTripleLoopOracle) {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat m = random_mat(5, 4, rng);
    const Mat v = random_mat(4, 1, rng);
    const Mat out = matvec(m, v);
    const auto expected = oracle::matvec(oracle::copy(m), oracle::copy_vec(v));
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(out[i], expected[i], 1e-12);
  }
}

TEST(Matvec, ShapeMismatchThrows) {
  EXPECT_THROW(matvec(Mat(2, 3), Mat(2, 1)), Error);
  EXPECT_THROW(matvec(Mat(2, 3), Mat(3, 2)), Error);
}

TEST(Softmax, UniformOnEqualInputs) {
  const Mat p = softmax(Mat::column({0, 0, 0}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeInputsDoNotOverflow) {
  const Mat p = softmax(Mat::column({1000, 0}));
  EXPECT_TRUE(all_finite(p));
  EXPECT_NEAR(p[0], 1.0, 1e-15);
  EXPECT_NEAR(p[1], 0.0, 1e-15);
}

TEST(Softmax, MatchesDirectEvaluation) {
  const Mat p = softmax(Mat::column({1, 2, 3}));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(p[0], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(p[1], std::exp(2.0) / z, 1e-15);
  EXPECT_NEAR(p[2], std::exp(3.0) / z, 1e-15);
}

TEST(Softmax, SumsToOneForRandomInputs) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.index(50);
    Mat v(n, 1);
    for (double& x : v.data()) x = rng.uniform(-300.0, 300.0);
    const Mat p = softmax(v);
    double total = 0.0;
    for (double x : p.data()) {
      EXPECT_GE(x, 0.0);
      total += x;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Elementwise, BasicIdentities) {
  EXPECT_EQ(sigmoid(0.0), 0.5);
  const Mat v = Mat::column({1, -2, 3});
  EXPECT_EQ(hadamard(v, Mat(3, 1, 1.0)), v);
  EXPECT_EQ(concat(Mat::column({1, 2}), Mat::column({3})), Mat::column({1, 2, 3}));
  EXPECT_EQ(add(v, v), Mat::column({2, -4, 6}));
  EXPECT_THROW(hadamard(v, Mat(2, 1)), Error);
  EXPECT_THROW(add(v, Mat(2, 1)), Error);
}

TEST(Elementwise, SigmoidIsStableAtExtremes) {
  EXPECT_NEAR(sigmoid(-800.0), 0.0, 1e-300);
  EXPECT_EQ(sigmoid(800.0), 1.0);
}

TEST(Kernels, Deterministic) {
  Rng a(9), b(9);
  const Mat m1 = random_mat(7, 6, a), m2 = random_mat(7, 6, b);
  const Mat v1 = random_mat(6, 1, a), v2 = random_mat(6, 1, b);
  EXPECT_EQ(softmax(matvec(m1, v1)), softmax(matvec(m2, v2)));
}

TEST(ParamStore, NamesAreUnique) {
  ParamStore store;
  store.add("w", Mat(2, 2));
  EXPECT_THROW(store.add("w", Mat(1, 1)), Error);
  EXPECT_THROW(store.id("missing"), Error);
  EXPECT_TRUE(store.grad("w").same_shape(store.value("w")));
}

TEST(GradCheck, QuadraticIsExact) {
  ParamStore store;
  Rng rng(1);
  store.add("theta", random_mat(4, 3, rng));
  store.add("phi", random_mat(5, 1, rng));
  const LossFn f = [](ParamStore& s) {
    double loss = 0.0;
    for (ParamId id = 0; id < s.size(); ++id) {
      loss += 0.5 * squared_norm(s.value(id));
      s.grad(id) += s.value(id);
    }
    return loss;
  };
  const auto report = grad_check(f, store, 1e-5, 1e-4);
  EXPECT_TRUE(report.passed);
  EXPECT_LT(report.max_error(), 1e-8);
  ASSERT_EQ(report.entries.size(), 2u);
}

TEST(GradCheck, SingleStepGruCrossEntropy) {
  ParamStore store;
  Rng rng(5);
  const GruCell cell = GruCell::create(store, "cell", 3, 4, rng, 0.5);
  const ParamId out = store.add("out", random_mat(6, 4, rng));
  const Mat w = random_mat(3, 1, rng);
  const Mat h0 = random_mat(4, 1, rng);
  const int target = 2;
  const LossFn f = [&](ParamStore& s) {
    GruCache cache;
    const Mat h = gru_step(cell, s, w, h0, &cache);
    const Mat logits = matvec(s.value(out), h);
    const Mat p = softmax(logits);
    Mat dlogits = p;
    dlogits[target] -= 1.0;
    add_outer(s.grad(out), dlogits, h);
    gru_backward(cell, s, cache, matvec_transposed(s.value(out), dlogits), s.grads());
    return log_sum_exp(logits) - logits[target];
  };
  const auto report = grad_check(f, store, 1e-5, 1e-4);
  EXPECT_TRUE(report.passed) << report.max_error();
}

TEST(GradCheck, CorruptedGradientFails) {
  ParamStore store;
  Rng rng(2);
  store.add("theta", random_mat(3, 3, rng));
  const LossFn f = [](ParamStore& s) {
    s.grad(0) += s.value(0);
    s.grad(0)[4] += 0.1;
    return 0.5 * squared_norm(s.value(0));
  };
  const auto report = grad_check(f, store, 1e-5, 1e-4);
  EXPECT_FALSE(report.passed);
  EXPECT_EQ(report.entries[0].worst_index, 4u);
}

TEST(GradCheck, RejectsBadEpsAndNonFiniteLoss) {
  ParamStore store;
  store.add("x", Mat(1, 1, 1.0));
  const LossFn ok = [](ParamStore& s) { return s.value(0)[0]; };
  EXPECT_THROW(grad_check(ok, store, 1e-2), Error);
  const LossFn bad = [](ParamStore&) { return std::nan(""); };
  EXPECT_THROW(grad_check(bad, store, 1e-5), Error);
}
