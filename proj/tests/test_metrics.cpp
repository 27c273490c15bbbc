// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "latentaug/metrics.hpp"
#include "latentaug/rng.hpp"
#include "test_util.hpp"

using namespace latentaug;

namespace {

// Independent per-class counting, written without the confusion matrix.
struct Brute {
  double ua = 0, wa = 0, f1 = 0;
};

Brute brute(const std::vector<std::uint32_t>& pred, const std::vector<std::uint32_t>& lab, std::uint32_t c) {
  Brute b;
  int present = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < lab.size(); ++i) correct += pred[i] == lab[i];
  b.wa = 100.0 * static_cast<double>(correct) / static_cast<double>(lab.size());
  for (std::uint32_t k = 0; k < c; ++k) {
    double tp = 0, fn = 0, fp = 0;
    for (std::size_t i = 0; i < lab.size(); ++i) {
      if (lab[i] == k && pred[i] == k) tp += 1;
      if (lab[i] == k && pred[i] != k) fn += 1;
      if (lab[i] != k && pred[i] == k) fp += 1;
    }
    if (tp + fn == 0) continue;
    ++present;
    const double r = tp / (tp + fn);
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    b.ua += r;
    b.f1 += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  b.ua *= 100.0 / present;
  b.f1 *= 100.0 / present;
  return b;
}

}  // namespace

TEST(Metrics, HandEnumeratedTwoByTwo) {
  // Confusion [[1,1],[0,2]].
  const std::vector<std::uint32_t> labels{0, 0, 1, 1};
  const std::vector<std::uint32_t> preds{0, 1, 1, 1};
  const auto m = compute_metrics(preds, labels, 2);
  EXPECT_NEAR(m.ua, 75.0, 1e-12);
  EXPECT_NEAR(m.wa, 75.0, 1e-12);
  EXPECT_NEAR(m.macro_f1, 73.3333333333, 1e-6);
  EXPECT_EQ(m.confusion[0][1], 1u);
  EXPECT_EQ(m.confusion[1][1], 2u);
}

TEST(Metrics, AgreesWithBruteForce) {
  Rng rng(3);
  for (int t = 0; t < 300; ++t) {
    const auto c = static_cast<std::uint32_t>(1 + rng.index(10));
    const std::size_t n = 1 + rng.index(200);
    std::vector<std::uint32_t> p(n), l(n);
    for (std::size_t i = 0; i < n; ++i) {
      l[i] = static_cast<std::uint32_t>(rng.index(c));
      p[i] = rng.bernoulli(0.5) ? l[i] : static_cast<std::uint32_t>(rng.index(c));
    }
    const auto m = compute_metrics(p, l, c);
    const auto b = brute(p, l, c);
    EXPECT_NEAR(m.ua, b.ua, 1e-9);
    EXPECT_NEAR(m.wa, b.wa, 1e-9);
    EXPECT_NEAR(m.macro_f1, b.f1, 1e-9);
  }
}

TEST(Metrics, PerfectPredictionsAndEmpty) {
  const std::vector<std::uint32_t> y{0, 1, 2, 2};
  const auto m = compute_metrics(y, y, 3);
  EXPECT_DOUBLE_EQ(m.ua, 100.0);
  EXPECT_DOUBLE_EQ(m.macro_f1, 100.0);
  const std::vector<std::uint32_t> none;
  expect_error(ErrorKind::EmptyInput, [&] { compute_metrics(none, none, 3); });
  const std::vector<std::uint32_t> shorter{0};
  expect_error(ErrorKind::DimensionMismatch, [&] { compute_metrics(shorter, y, 3); });
}

TEST(Metrics, MacroF1IsHundredOnlyWhenDiagonal) {
  const std::vector<std::uint32_t> labels{0, 0, 1, 1, 2};
  const std::vector<std::uint32_t> one_off{0, 0, 1, 2, 2};
  EXPECT_LT(compute_metrics(one_off, labels, 3).macro_f1, 100.0);
  EXPECT_DOUBLE_EQ(compute_metrics(labels, labels, 3).macro_f1, 100.0);
}

TEST(Metrics, UaInvariantToRecallPreservingDuplication) {
  Rng rng(8);
  std::vector<std::uint32_t> p, l;
  for (int i = 0; i < 60; ++i) {
    l.push_back(static_cast<std::uint32_t>(rng.index(4)));
    p.push_back(static_cast<std::uint32_t>(rng.index(4)));
  }
  const double base = compute_metrics(p, l, 4).ua;
  std::vector<std::uint32_t> p2, l2;
  for (std::size_t i = 0; i < l.size(); ++i)
    for (std::uint32_t r = 0; r <= l[i]; ++r) {  // class c duplicated c+1 times
      p2.push_back(p[i]);
      l2.push_back(l[i]);
    }
  EXPECT_NEAR(compute_metrics(p2, l2, 4).ua, base, 1e-9);
}

TEST(Metrics, GroupsAndExcludedClass) {
  EXPECT_EQ(class_group(101), ClassGroup::many);
  EXPECT_EQ(class_group(100), ClassGroup::medium);
  EXPECT_EQ(class_group(20), ClassGroup::medium);
  EXPECT_EQ(class_group(19), ClassGroup::small);

  const std::vector<std::uint32_t> labels{0, 0, 1, 1, 2, 2};
  const std::vector<std::uint32_t> preds{0, 0, 1, 0, 0, 0};
  const std::vector<std::uint64_t> counts{500, 50, 5};
  const auto m = compute_metrics(preds, labels, 3, counts, 0u);
  EXPECT_DOUBLE_EQ(*m.acc_many, 100.0);
  EXPECT_DOUBLE_EQ(*m.acc_medium, 50.0);
  EXPECT_DOUBLE_EQ(*m.acc_small, 0.0);
  EXPECT_DOUBLE_EQ(*m.ua_without_excluded, 25.0);
  const auto csv = m.to_csv();
  EXPECT_NE(csv.find("class,recall,precision,f1"), std::string::npos);
  EXPECT_NE(csv.find("ua,wa,macro_f1,ua_wo_excluded,acc_many,acc_medium,acc_small"), std::string::npos);
  EXPECT_NE(csv.find("50.00,50.00,"), std::string::npos);
}

TEST(Compactness, RatioOfIntraClassDistances) {
  Mat<float> a(1, 4), b(1, 4);
  a << 0, 2, 10, 14;
  b << 0, 1, 10, 12;
  const std::vector<std::uint32_t> labels{0, 0, 1, 1};
  EXPECT_NEAR(mean_intra_class_distance(a, labels), 3.0, 1e-9);
  EXPECT_NEAR(compactness_ratio(a, b, labels), 1.5 / 3.0, 1e-9);
  const std::vector<std::uint32_t> singleton{0, 1, 2, 3};
  expect_error(ErrorKind::InsufficientSupport, [&] { mean_intra_class_distance(a, singleton); });
}
