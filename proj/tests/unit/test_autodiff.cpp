#include "apf/autodiff.hpp"
#include "apf/errors.hpp"
#include "apf/gradcheck.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace apf;

TEST(Linear, IdentityAndBias) {
  std::mt19937_64 rng(1);
  const Matrix x = oracle::random_matrix(4, 3, rng);
  Param w("w", 3, 3), b("b", 1, 3);
  w.value.setIdentity();
  EXPECT_TRUE(linear_forward(x, w, b).isApprox(x));
  b.value << 1, 2, 3;
  const Matrix y = linear_forward(Matrix::Zero(4, 3), w, b);
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(y.row(i).isApprox(b.value.row(0)));
}

TEST(Activations, PointValues) {
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
  Matrix x(1, 2);
  x << 0.0, -1.0;
  EXPECT_DOUBLE_EQ(activation_forward(x, ActivationKind::kTanh)(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(activation_forward(x, ActivationKind::kRelu)(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(activation_forward(x, ActivationKind::kPrelu, 0.25)(0, 1), -0.25);
  EXPECT_NEAR(activation_forward(x, ActivationKind::kElu)(0, 1), std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_TRUE(std::isfinite(sigmoid(-1000.0)));
  EXPECT_DOUBLE_EQ(sigmoid(1000.0), 1.0);
}

TEST(Activations, ParseRoundTrip) {
  for (auto k : {ActivationKind::kIdentity, ActivationKind::kSigmoid, ActivationKind::kRelu,
                 ActivationKind::kElu, ActivationKind::kPrelu, ActivationKind::kTanh})
    EXPECT_EQ(parse_activation(to_string(k)), k);
  EXPECT_THROW(parse_activation("swish"), ValidationError);
  EXPECT_EQ(parse_norm("batch"), NormKind::kBatch);
  EXPECT_THROW(parse_norm("group"), ValidationError);
}

TEST(LogSigmoid, ClampedAtFloor) {
  EXPECT_NEAR(log_sigmoid_clamped(0.0), -std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(log_sigmoid_clamped(-100.0), std::log(kLogFloor));
  EXPECT_DOUBLE_EQ(log_sigmoid_clamped_grad(-100.0), 0.0);
  EXPECT_NEAR(log_sigmoid_clamped_grad(0.0), 0.5, 1e-15);
}

TEST(Standardize, FixedPointConstantAndRandom) {
  Matrix s(4, 1);
  s << -1, -1, 1, 1;  // mean 0, population std 1
  EXPECT_LT((standardize(s) - s).cwiseAbs().maxCoeff(), 1e-4);

  EXPECT_LT(standardize(Matrix::Constant(5, 2, 7.0)).norm(), 1e-12);

  std::mt19937_64 rng(2);
  const Matrix z = 3.0 * oracle::random_matrix(5, 3, rng).array() + 2.0;
  const Matrix out = standardize(z);
  for (int c = 0; c < 3; ++c) {
    const double mean = out.col(c).mean();
    const double var = (out.col(c).array() - mean).square().mean();
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(var), 1.0, 1e-4);
  }
}

TEST(Adam, ZeroGradientLeavesParams) {
  Param p("p", 2, 2);
  p.value << 1, 2, 3, 4;
  const Matrix before = p.value;
  Adam opt({.learning_rate = 0.1}, {&p});
  for (int i = 0; i < 5; ++i) opt.step();
  EXPECT_EQ(p.value, before);
}

TEST(Adam, DescendsQuadratic) {
  Param p("w", 1, 1);
  p.value(0, 0) = 20.0;  // far enough that 100 steps of size ~lr stay on one side
  Adam opt({.learning_rate = 0.1}, {&p});
  double prev = std::abs(p.value(0, 0));
  for (int i = 0; i < 100; ++i) {
    p.grad(0, 0) = 2.0 * p.value(0, 0);
    opt.step();
    const double cur = std::abs(p.value(0, 0));
    ASSERT_LT(cur, prev) << "step " << i;
    prev = cur;
  }
}

TEST(Adam, MatchesHandSteppedReference) {
  Param p("p", 1, 2);
  p.value << 1.0, -2.0;
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.1;
  Adam opt({.learning_rate = lr, .weight_decay = wd}, {&p});
  double w[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  const double g1[2] = {0.5, -1.5}, g2[2] = {0.25, 2.0};
  for (int t = 1; t <= 2; ++t) {
    const double* g = t == 1 ? g1 : g2;
    p.grad << g[0], g[1];
    opt.step();
    for (int i = 0; i < 2; ++i) {
      w[i] *= 1.0 - lr * wd;
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      w[i] -= lr * mh / (std::sqrt(vh) + eps);
      EXPECT_NEAR(p.value(0, i), w[i], 1e-10);
    }
  }
}

TEST(Adam, RejectsNonFiniteGradient) {
  Param p("bad", 1, 1);
  p.grad(0, 0) = std::nan("");
  Adam opt({}, {&p});
  EXPECT_THROW(opt.step(), NumericError);
}

TEST(Mlp, ParamsDependOnConfiguration) {
  std::mt19937_64 rng(3);
  Mlp plain("m", 3, 4, 2, ActivationKind::kRelu, NormKind::kNone, rng);
  EXPECT_EQ(plain.params().size(), 4u);
  Mlp full("m", 3, 4, 2, ActivationKind::kPrelu, NormKind::kLayer, rng);
  EXPECT_EQ(full.params().size(), 7u);
}

TEST(Gradcheck, SuitePasses) {
  for (std::uint64_t seed : {0u, 1u}) {
    for (const auto& r : run_gradcheck_suite(seed)) {
      EXPECT_TRUE(r.passed) << r.name << " rel error " << r.rel_error;
      EXPECT_LT(r.rel_error, 1e-4) << r.name;
    }
  }
}

TEST(Gradcheck, LinearAtTighterTolerance) {
  std::mt19937_64 rng(4);
  const Matrix x = oracle::random_matrix(3, 2, rng);
  Param w("w", 2, 2), b("b", 1, 2);
  glorot_uniform(w, rng);
  const Matrix target = oracle::random_matrix(3, 2, rng);
  auto loss = [&] {
    const Matrix r = linear_forward(x, w, b) - target;
    linear_backward(x, r, w, b);
    return 0.5 * r.squaredNorm();
  };
  const auto res = check_params("linear", {&w, &b}, loss, 1e-6);
  EXPECT_TRUE(res.passed) << res.rel_error;
}
