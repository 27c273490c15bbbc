// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "latentaug/gradsuite.hpp"
#include "latentaug/nn.hpp"
#include "test_util.hpp"

using namespace latentaug;

TEST(CrossEntropy, MatchesHandValueAndGradient) {
  Mat<double> logits(3, 2);
  logits << 1, 0, 2, 0, 3, 0;
  const std::vector<std::uint32_t> labels{2, 0};
  Mat<double> d;
  const double loss = softmax_cross_entropy<double>(logits, labels, &d);
  const double l0 = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
  const double l1 = std::log(3.0);
  EXPECT_NEAR(loss, (l0 + l1) / 2, 1e-12);
  // Column sums of d are zero; the label entry is (p - 1) / n.
  EXPECT_NEAR(d.col(0).sum(), 0.0, 1e-12);
  EXPECT_NEAR(d(0, 1), (1.0 / 3.0 - 1.0) / 2.0, 1e-12);
}

TEST(CrossEntropy, StableForHugeLogits) {
  Mat<double> logits(2, 1);
  logits << 1000, -1000;
  const std::vector<std::uint32_t> labels{0};
  EXPECT_NEAR(softmax_cross_entropy<double>(logits, labels, nullptr), 0.0, 1e-12);
}

TEST(GradCheck, AffineReluLayer) {
  Rng rng(1);
  ParamStore<double> store;
  const AffineLayer layer = AffineLayer::create(store, "fc", 4, 3, rng);
  store.value(layer.bias) = rng.normal_matrix<double>(3, 1);
  const Mat<double> x = rng.normal_matrix<double>(4, 5);
  const std::vector<std::uint32_t> labels{0, 1, 2, 0, 1};
  auto loss = [&](ParamStore<double>& p) {
    AffineTape<double> tape;
    const Mat<double> y = layer.forward(p, x, Activation::none, &tape);
    Mat<double> dy;
    const double v = softmax_cross_entropy<double>(y, labels, &dy);
    layer.backward(p, tape, dy, false);
    return v;
  };
  const auto r = grad_check(store, loss);
  EXPECT_LT(r.max_rel_error, 1e-6);
  EXPECT_EQ(r.checked, 15);
}

TEST(GradCheck, CatchesAWrongGradient) {
  ParamStore<double> store;
  store.add("w", Mat<double>::Constant(1, 1, 2.0));
  auto loss = [](ParamStore<double>& p) {
    const double w = p.value(0)(0, 0);
    p.grad(0)(0, 0) += 3 * w;  // true derivative of w^2 is 2w
    return w * w;
  };
  const auto r = grad_check(store, loss);
  EXPECT_GT(r.max_rel_error, 0.3);
  EXPECT_EQ(r.worst_param, "w");
}

TEST(GradCheck, FrozenParamsAreSkipped) {
  ParamStore<double> store;
  store.add("frozen", Mat<double>::Constant(2, 2, 1.0), false);
  store.add("live", Mat<double>::Constant(1, 1, 1.0));
  auto loss = [](ParamStore<double>& p) {
    p.grad(1)(0, 0) += 2 * p.value(1)(0, 0);
    return p.value(1)(0, 0) * p.value(1)(0, 0) + p.value(0).sum();
  };
  EXPECT_EQ(grad_check(store, loss).checked, 1);
  EXPECT_EQ(store.scalar_count(true), 1);
  EXPECT_EQ(store.scalar_count(false), 5);
}

TEST(GradSuite, FewInstancesPassAndCoverConditioning) {
  const auto report = run_grad_suite(6, 42);
  EXPECT_LT(report.worst, 1e-4) << report.worst_where;
  bool projection = false, null = false;
  for (const auto& r : report.instances) {
    projection |= r.projection_covered;
    null |= r.null_covered;
  }
  EXPECT_TRUE(projection);
  EXPECT_TRUE(null);
}

TEST(Optimizer, AdamFirstStepMovesByLr) {
  ParamStore<double> store;
  store.add("w", Mat<double>::Constant(2, 1, 1.0));
  store.grad(0) << 0.5, -4.0;
  Optimizer<double> opt({.kind = OptimizerKind::adam, .lr = 0.1, .eps = 0.0});
  opt.step(store);
  EXPECT_NEAR(store.value(0)(0), 0.9, 1e-12);
  EXPECT_NEAR(store.value(0)(1), 1.1, 1e-12);
}

TEST(Optimizer, SgdMomentumAndFrozen) {
  ParamStore<double> store;
  store.add("w", Mat<double>::Constant(1, 1, 0.0));
  store.add("b", Mat<double>::Constant(1, 1, 0.0), false);
  Optimizer<double> opt({.kind = OptimizerKind::sgd_momentum, .lr = 1.0, .momentum = 0.5});
  store.grad(0)(0) = 1.0;
  store.grad(1)(0) = 1.0;
  opt.step(store);
  opt.step(store);
  EXPECT_DOUBLE_EQ(store.value(0)(0), -2.5);  // -1 then -(0.5 + 1)
  EXPECT_DOUBLE_EQ(store.value(1)(0), 0.0);
}

TEST(Optimizer, RejectsNonFiniteGradient) {
  ParamStore<double> store;
  store.add("w", Mat<double>::Zero(1, 1));
  store.grad(0)(0) = NAN;
  Optimizer<double> opt({});
  expect_error(ErrorKind::NumericalError, [&] { opt.step(store); });
}

TEST(Ema, InverseDecayWarmup) {
  EXPECT_DOUBLE_EQ(Ema<double>::decay_at(0, 0.9999), 0.1);
  EXPECT_DOUBLE_EQ(Ema<double>::decay_at(90, 0.9999), 91.0 / 100.0);
  EXPECT_DOUBLE_EQ(Ema<double>::decay_at(1000000, 0.999), 0.999);

  ParamStore<double> store;
  store.add("w", Mat<double>::Constant(1, 1, 0.0));
  Ema<double> ema(store, 0.9999);
  store.value(0)(0) = 10.0;
  ema.update(store);  // d = 0.1
  EXPECT_NEAR(ema.shadow()[0](0), 9.0, 1e-12);
  ema.update(store);  // d = 2/11
  EXPECT_NEAR(ema.shadow()[0](0), 9.0 * 2.0 / 11.0 + 10.0 * 9.0 / 11.0, 1e-12);
  expect_error(ErrorKind::InvalidConfig, [&] { Ema<double>(store, 1.0); });
}
