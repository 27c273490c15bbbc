// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "latentaug/diffusion.hpp"
#include "test_util.hpp"

using namespace latentaug;

namespace {

DenoiserConfig tiny_config(ConditionMode mode = ConditionMode::class_only) {
  DenoiserConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden = {8, 8};
  cfg.time_dim = 4;
  cfg.condition.mode = mode;
  cfg.condition.num_classes = 2;
  cfg.condition.embed_dim = 3;
  cfg.condition.width = 4;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST(Preconditioning, ClosedForms) {
  for (double sigma : {0.01, 0.5, 1.0, 7.0, 80.0}) {
    for (double sd : {0.5, 1.0, 2.0}) {
      const auto p = precondition(sigma, sd);
      const double t = sigma * sigma + sd * sd;
      EXPECT_NEAR(p.c_skip, sd * sd / t, 1e-15);
      EXPECT_NEAR(p.c_out, sigma * sd / std::sqrt(t), 1e-12);
      EXPECT_NEAR(p.c_in, 1 / std::sqrt(t), 1e-15);
      // Unit-variance training target: c_skip^2 sd^2 + c_out^2 ... identity c_skip + (c_out/sd)^2 = 1.
      EXPECT_NEAR(p.c_skip + p.c_out * p.c_out / (sd * sd), 1.0, 1e-12);
      EXPECT_NEAR(loss_weight(sigma, sd), 1.0 / t, 1e-15);
    }
  }
}

TEST(NoiseSchedule, InverseCdfEndpointsAndMonotone) {
  NoiseSchedule s{0.002, 80.0, 0.7};
  EXPECT_DOUBLE_EQ(sigma_from_uniform(s, 0.0), 0.002);
  EXPECT_DOUBLE_EQ(sigma_from_uniform(s, 1.0), 80.0);
  double prev = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double v = sigma_from_uniform(s, i / 100.0);
    EXPECT_GE(v, prev);
    prev = v;
  }
  // atan(sigma/sd) is uniform, so the median sits at sd * tan(mid angle).
  const double mid = 0.5 * (std::atan(0.002 / 0.7) + std::atan(80.0 / 0.7));
  EXPECT_NEAR(sigma_from_uniform(s, 0.5), 0.7 * std::tan(mid), 1e-12);
  NoiseSchedule bad{1.0, 0.5, 1.0};
  expect_error(ErrorKind::InvalidConfig, [&] { sigma_from_uniform(bad, 0.5); });
}

TEST(SigmaData, GlobalStandardDeviation) {
  Mat<float> z(2, 2);
  z << 1, 3, 1, 3;
  EXPECT_NEAR(estimate_sigma_data(z), 1.0, 1e-12);
  expect_error(ErrorKind::EmptyDataset, [] { estimate_sigma_data(Mat<float>(3, 0)); });
}

TEST(Denoiser, SmallSigmaIsNearIdentity) {
  DenoiserModel<double> model(tiny_config());
  Rng rng(3);
  const Mat<double> x = rng.normal_matrix<double>(3, 4);
  const std::vector<double> sig(4, 1e-6);
  const std::vector<ConditionDraw> draws(4, model.condition().null_draw());
  EXPECT_TRUE(model.denoise(x, sig, draws).isApprox(x, 1e-5));
}

TEST(Denoiser, ConfigValidation) {
  auto cfg = tiny_config();
  cfg.hidden = {8, 6};
  expect_error(ErrorKind::InvalidConfig, [&] { cfg.validate(); });
  cfg = tiny_config();
  cfg.time_dim = 3;
  expect_error(ErrorKind::InvalidConfig, [&] { cfg.validate(); });
  cfg = tiny_config();
  cfg.dropout = 1.0;
  expect_error(ErrorKind::InvalidConfig, [&] { cfg.validate(); });
}

TEST(Denoiser, RejectsBadSigma) {
  DenoiserModel<double> model(tiny_config());
  const std::vector<double> sig{0.0};
  const std::vector<ConditionDraw> draws{model.condition().null_draw()};
  expect_error(ErrorKind::InvalidSigma, [&] { model.denoise(Mat<double>::Zero(3, 1), sig, draws); });
}

TEST(Denoiser, CheckpointRoundTripPreservesOutputs) {
  TempDir dir;
  auto cfg = tiny_config(ConditionMode::class_plus_subdomain_latent);
  cfg.condition.reference_dim = 3;
  DenoiserModel<float> model(cfg);
  Rng rng(4);
  model.condition().set_subdomain_pool({rng.normal_matrix<float>(3, 2), rng.normal_matrix<float>(3, 3)});
  for (auto& p : model.params()) p.value = rng.normal_matrix<float>(p.value.rows(), p.value.cols());
  write_denoiser(dir.path / "d.gelw", model);
  const auto back = read_denoiser(dir.path / "d.gelw");
  const Mat<float> x = rng.normal_matrix<float>(3, 2);
  const std::vector<float> sig{0.3f, 4.0f};
  const std::vector<ConditionDraw> draws{{1, 1, 2, false}, model.condition().null_draw()};
  const Mat<float> a = model.denoise(x, sig, draws);
  const Mat<float> b = back.denoise(x, sig, draws);
  EXPECT_EQ(a, b);
  EXPECT_EQ(back.schedule().sigma_data, model.schedule().sigma_data);
}

TEST(Diffusion, ShortTrainingReducesLossAndDropsConditions) {
  Rng rng(6);
  DiffusionData data;
  data.latents = rng.normal_matrix<float>(3, 64);
  for (Index j = 0; j < 64; ++j) {
    data.latents.col(j).array() += (j % 2 ? 3.0f : -3.0f);
    data.labels.push_back({static_cast<std::uint32_t>(j % 2), 0});
  }
  auto cfg = tiny_config();
  cfg.input_dim = 0;
  cfg.schedule.sigma_data = 0.0;
  DiffTrainConfig tc;
  tc.iterations = 600;
  tc.batch = 32;
  tc.lr = 3e-3;
  tc.cond_dropout = 0.2;
  tc.ema_max_decay = 0.99;
  tc.log_every = 100;
  const auto trained = train_diffusion(data, cfg, {}, {}, tc);
  EXPECT_EQ(trained.model.config().input_dim, 3);
  EXPECT_NEAR(trained.model.schedule().sigma_data, estimate_sigma_data(data.latents), 1e-6);
  ASSERT_EQ(trained.stats.loss_history.size(), 6u);
  EXPECT_LT(trained.stats.loss_history.back(), trained.stats.loss_history.front());
  EXPECT_NEAR(trained.stats.null_fraction(), 0.2, 0.03);
  DiffTrainConfig bad = tc;
  bad.cond_dropout = 1.5;
  expect_error(ErrorKind::InvalidConfig, [&] { train_diffusion(data, cfg, {}, {}, bad); });
}
