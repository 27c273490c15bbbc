// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "latentaug/sampler.hpp"
#include "test_util.hpp"

using namespace latentaug;

namespace {

DenoiserModel<float> small_model(std::uint64_t seed) {
  DenoiserConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden = {8};
  cfg.time_dim = 4;
  cfg.condition.num_classes = 3;
  cfg.condition.embed_dim = 3;
  cfg.condition.width = 4;
  cfg.seed = seed;
  DenoiserModel<float> model(cfg);
  Rng rng(seed + 1);
  for (auto& p : model.params()) p.value = 0.5f * rng.normal_matrix<float>(p.value.rows(), p.value.cols());
  return model;
}

}  // namespace

TEST(Karras, EndpointsAndShape) {
  const auto s = karras_sigmas(20, 0.002, 80.0, 7.0);
  ASSERT_EQ(s.size(), 21u);
  EXPECT_EQ(s.front(), 80.0);
  EXPECT_EQ(s[19], 0.002);
  EXPECT_EQ(s.back(), 0.0);
  for (std::size_t i = 1; i < s.size(); ++i) EXPECT_LT(s[i], s[i - 1]);
  // Evenly spaced in sigma^(1/rho).
  const double d0 = std::pow(s[0], 1 / 7.0) - std::pow(s[1], 1 / 7.0);
  const double d9 = std::pow(s[9], 1 / 7.0) - std::pow(s[10], 1 / 7.0);
  EXPECT_NEAR(d0, d9, 1e-12);
  EXPECT_EQ(karras_sigmas(1, 0.1, 5.0, 7.0), (std::vector<double>{5.0, 0.0}));
  expect_error(ErrorKind::InvalidConfig, [] { karras_sigmas(0, 0.1, 1, 7); });
}

TEST(Cfg, CombineIdentities) {
  Rng rng(1);
  const Mat<double> c = rng.normal_matrix<double>(4, 3);
  const Mat<double> u = rng.normal_matrix<double>(4, 3);
  EXPECT_EQ(cfg_combine<double>(c, u, 1.0), c);
  EXPECT_EQ(cfg_combine<double>(c, u, 0.0), u);
  const Mat<double> a = cfg_combine<double>(c, u, 0.4);
  const Mat<double> b = cfg_combine<double>(c, u, 2.2);
  // Affine in the scale.
  EXPECT_TRUE(cfg_combine<double>(c, u, 1.3).isApprox(a + (1.3 - 0.4) / (2.2 - 0.4) * (b - a), 1e-12));
}

TEST(Integrate, EulerConstantDenoiserClosedForm) {
  const Vec<float> v = Vec<float>::Constant(2, 0.5f);
  DenoiseFn<float> constant = [&](const Mat<float>& x, double) {
    Mat<float> out(x.rows(), x.cols());
    out.colwise() = v;
    return out;
  };
  const auto sigmas = karras_sigmas(10, 0.01, 10.0, 7.0);
  SamplerConfig cfg;
  cfg.integrator = Integrator::euler;
  Mat<float> x0(2, 1);
  x0 << 10.0f, -7.0f;
  Rng stream(0);
  int checked = 0;
  integrate(constant, x0, sigmas, cfg, std::span<Rng>(&stream, 1), [&](int step, const Mat<float>& x) {
    const double sigma = sigmas[static_cast<std::size_t>(step)];
    for (Index i = 0; i < 2; ++i) {
      const double expect = v[i] + (x0(i, 0) - v[i]) * sigma / 10.0;
      EXPECT_LE(std::abs(x(i, 0) - expect), 1e-5 * std::max(1.0, std::abs(expect)));
    }
    ++checked;
  });
  EXPECT_EQ(checked, 11);
}

TEST(Integrate, AncestralAndSdeLandOnConstant) {
  DenoiseFn<float> constant = [](const Mat<float>& x, double) { return Mat<float>::Constant(x.rows(), x.cols(), 1.5f); };
  const auto sigmas = karras_sigmas(8, 0.01, 20.0, 7.0);
  for (auto integrator : {Integrator::euler_ancestral, Integrator::dpmpp_sde}) {
    SamplerConfig cfg;
    cfg.integrator = integrator;
    std::vector<Rng> streams{Rng(1), Rng(2)};
    Rng init(3);
    const Mat<float> x = integrate(constant, 20.0f * init.normal_matrix<float>(3, 2), sigmas, cfg, streams);
    EXPECT_TRUE(x.isApprox(Mat<float>::Constant(3, 2, 1.5f), 1e-6f));
  }
}

TEST(Guidance, ScaleOneIsConditionedScaleZeroIsNull) {
  const auto model = small_model(3);
  const std::vector<ConditionDraw> draws{{1, 0, -1, false}, {2, 0, -1, false}};
  Rng rng(4);
  const Mat<float> x = rng.normal_matrix<float>(3, 2);
  const std::vector<float> sig{1.7f, 1.7f};
  const Mat<float> cond = model.denoise(x, sig, draws);
  const std::vector<ConditionDraw> nulls(2, model.condition().null_draw());
  const Mat<float> uncond = model.denoise(x, sig, nulls);
  EXPECT_EQ(guided_denoiser(model, draws, 1.0)(x, 1.7), cond);
  EXPECT_EQ(guided_denoiser(model, draws, 0.0)(x, 1.7), uncond);
  EXPECT_TRUE(guided_denoiser(model, draws, 1.2)(x, 1.7).isApprox(uncond + 1.2f * (cond - uncond), 1e-6f));
}

TEST(GenerateSet, DeterministicAndStreamIsolated) {
  const auto model = small_model(7);
  SamplerConfig cfg;
  cfg.steps = 6;
  const std::vector<std::uint32_t> one{1};
  const std::vector<std::uint32_t> three{0, 1, 2};
  const auto a = generate_set(model, one, 5, 0, cfg, 99);
  const auto b = generate_set(model, three, 5, 0, cfg, 99);
  ASSERT_EQ(a.size(), 5);
  ASSERT_EQ(b.size(), 15);
  EXPECT_EQ(a.vectors, b.vectors.middleCols(5, 5));
  EXPECT_EQ(generate_set(model, one, 5, 0, cfg, 99).vectors, a.vectors);
  EXPECT_NE(generate_set(model, one, 5, 0, cfg, 100).vectors, a.vectors);
  EXPECT_EQ(b.class_ids[7], 1u);
  const std::vector<std::uint32_t> bad{3};
  expect_error(ErrorKind::InvalidConfig, [&] { generate_set(model, bad, 1, 0, cfg, 0); });
}

TEST(GenerateSet, DatasetRoundTripKeepsProvenance) {
  const auto model = small_model(2);
  SamplerConfig cfg;
  cfg.steps = 3;
  const std::vector<std::uint32_t> classes{0, 2};
  const auto set = generate_set(model, classes, 3, 1, cfg, 5);
  const auto ds = set.to_dataset(DatasetManifest::with_default_names(3, 3, 2));
  EXPECT_EQ(ds.manifest.count(2, 1, Split::train), 3u);
  const auto back = AugmentationSet::from_dataset(ds);
  EXPECT_EQ(back.vectors, set.vectors);
  EXPECT_EQ(back.provenance, set.provenance);
}

TEST(SamplerConfig, Validation) {
  SamplerConfig cfg;
  cfg.cfg_scale = -1.0;
  expect_error(ErrorKind::InvalidConfig, [&] { cfg.validate(); });
}

// For N(0, sd^2 I) the Bayes denoiser is linear, D*(x; s) = sd^2 x / (s^2 + sd^2),
// so an Euler step scales x by 1 + (s' - s) s / (s^2 + sd^2). The sample variance
// is the product of those factors squared times sigma_max^2.
TEST(Integrate, EulerOnBayesGaussianDenoiserMatchesRecursion) {
  const double sd = 1.0;
  DenoiseFn<float> bayes = [&](const Mat<float>& x, double s) {
    return Mat<float>(static_cast<float>(sd * sd / (s * s + sd * sd)) * x);
  };
  SamplerConfig cfg;
  cfg.integrator = Integrator::euler;
  for (int steps : {20, 200}) {
    const auto sigmas = karras_sigmas(steps, 0.002, 80.0, 7.0);
    double scale = 1.0;
    for (int i = 0; i < steps; ++i) {
      const double s = sigmas[static_cast<std::size_t>(i)], next = sigmas[static_cast<std::size_t>(i) + 1];
      scale *= 1.0 + (next - s) * s / (s * s + sd * sd);
    }
    const Index n = 10000;
    Rng init(11);
    std::vector<Rng> streams(static_cast<std::size_t>(n), Rng(0));
    const Mat<float> x0 = 80.0f * init.normal_matrix<float>(4, n);
    const Mat<double> x = integrate(bayes, x0, sigmas, cfg, streams).cast<double>();
    const double var = x.array().square().mean();
    const double expect = 80.0 * 80.0 * scale * scale;
    EXPECT_NEAR(var / expect, 1.0, 0.03) << steps;
    EXPECT_LT(std::abs(x.mean()), 0.05) << steps;
    // Coarse grids lose variance; the fine grid lands inside [0.85, 1.15].
    if (steps == 200) {
      EXPECT_GT(var, 0.85);
      EXPECT_LT(var, 1.15);
    } else {
      EXPECT_LT(var, 0.8);
    }
  }
}
