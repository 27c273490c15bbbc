// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <set>

#include "latentaug/config.hpp"
#include "latentaug/pipeline.hpp"
#include "test_util.hpp"

using namespace latentaug;
namespace fs = std::filesystem;

namespace {

PipelineConfig tiny(const fs::path& out) {
  PipelineConfig cfg;
  cfg.synthetic.m = 6;
  cfg.synthetic.n_train = 30;
  cfg.synthetic.n_test = 10;
  cfg.scenario.kind = ScenarioKind::zero_shot;
  cfg.scenario.target_subdomain = 2;
  cfg.adapter_hidden = {8};
  cfg.stage1.epochs = 3;
  cfg.stage3.epochs = 3;
  cfg.denoiser.hidden = {16};
  cfg.denoiser.time_dim = 4;
  cfg.denoiser.condition.embed_dim = 4;
  cfg.denoiser.condition.width = 8;
  cfg.diffusion.iterations = 30;
  cfg.diffusion.batch = 16;
  cfg.sampler.steps = 4;
  cfg.n_aug = 10;
  cfg.out_dir = out.string();
  return cfg;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  PipelineConfig cfg = tiny("x");
  cfg.condition_mode = ConditionMode::class_only;
  cfg.sampler.integrator = Integrator::dpmpp_sde;
  cfg.stage3.loss = LossKind::logit_adjusted;
  const auto j = to_json(cfg);
  const auto back = pipeline_config_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(to_json(back).dump(), j.dump());
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  expect_error(ErrorKind::InvalidConfig, [] { pipeline_config_from_json(nlohmann::json::parse(R"({"n_augs": 3})")); });
  expect_error(ErrorKind::InvalidConfig,
               [] { pipeline_config_from_json(nlohmann::json::parse(R"({"sampler": {"integrator": "rk4"}})")); });
  expect_error(ErrorKind::InvalidConfig, [] { pipeline_config_from_json(nlohmann::json::parse(R"({"n_aug": "many"})")); });
  expect_error(ErrorKind::InvalidConfig, [] { parse_condition_mode("class_plus_everything"); });
  PipelineConfig cfg;
  cfg.tap_layer = 3;
  expect_error(ErrorKind::InvalidLayer, [&] { cfg.validate(); });
}

TEST(Pipeline, AugmentationClassesPerScenario) {
  PipelineConfig cfg;
  LatentDataset d;
  d.manifest = DatasetManifest::with_default_names(2, 4, 1);
  d.manifest.count(0, 0, Split::train) = 500;
  d.manifest.count(1, 0, Split::train) = 19;
  d.manifest.count(2, 0, Split::train) = 20;
  d.manifest.count(3, 0, Split::train) = 3;
  EXPECT_EQ(augmentation_classes(d, cfg), (std::vector<std::uint32_t>{1, 3}));
  cfg.scenario.kind = ScenarioKind::zero_shot;
  cfg.scenario.kept_class = 2;
  EXPECT_EQ(augmentation_classes(d, cfg), (std::vector<std::uint32_t>{0, 1, 3}));
  cfg.scenario.kind = ScenarioKind::k_shot;
  EXPECT_EQ(augmentation_classes(d, cfg).size(), 4u);
}

TEST(Pipeline, MembershipPredicates) {
  PipelineConfig cfg;
  cfg.scenario.kind = ScenarioKind::zero_shot;
  cfg.scenario.target_subdomain = 1;
  const std::vector<std::uint32_t> aug{2};
  const LatentRecord train_target{Eigen::VectorXf::Zero(1), 0, 1, Split::train};
  const LatentRecord train_other{Eigen::VectorXf::Zero(1), 2, 0, Split::train};
  const LatentRecord test_target{Eigen::VectorXf::Zero(1), 3, 1, Split::test};
  EXPECT_TRUE(stage3_member(train_target, cfg, aug));
  EXPECT_FALSE(stage3_member(train_other, cfg, aug));
  EXPECT_FALSE(stage3_member(test_target, cfg, aug));
  EXPECT_TRUE(evaluation_member(test_target, cfg));
  EXPECT_FALSE(evaluation_member(train_target, cfg));
  cfg.scenario.kind = ScenarioKind::none;
  EXPECT_TRUE(stage3_member(train_other, cfg, aug));
  EXPECT_FALSE(stage3_member(train_target, cfg, aug));
}

TEST(LatentFill, InterpolatesAndNeedsTwoLatents) {
  Rng rng(1);
  Mat<float> one(2, 1);
  one << 1, 2;
  expect_error(ErrorKind::InsufficientSupport, [&] { latent_fill_augment(one, 0, 0, 5, 0.1, rng); });
  Mat<float> two(1, 2);
  two << -1, 3;
  const auto set = latent_fill_augment(two, 4, 2, 200, 0.0, rng);
  ASSERT_EQ(set.size(), 200);
  EXPECT_GE(set.vectors.minCoeff(), -1.0f);
  EXPECT_LE(set.vectors.maxCoeff(), 3.0f);
  EXPECT_EQ(set.class_ids[17], 4u);
  EXPECT_EQ(set.subdomain_ids[17], 2u);
}

TEST(Pipeline, TinyZeroShotRunIsIsolatedAndDeterministic) {
  TempDir dir;
  const PipelineConfig cfg = tiny(dir.path / "a");
  std::map<std::string, std::set<Split>> splits;
  bool evaluate_off_target = false;
  const auto report = run_pipeline(cfg, [&](std::string_view stage, const LatentRecord& r) {
    splits[std::string(stage)].insert(r.split);
    if (stage == "evaluate" && r.subdomain_id != 2) evaluate_off_target = true;
  });
  for (const char* s : {"stage1", "stage2", "stage3"}) {
    ASSERT_TRUE(splits.count(s)) << s;
    EXPECT_EQ(splits[s], std::set<Split>{Split::train}) << s;
  }
  EXPECT_EQ(splits["evaluate"], std::set<Split>{Split::test});
  EXPECT_FALSE(evaluate_off_target);

  ASSERT_TRUE(report.pretrained.metrics && report.gt_only.metrics && report.gelda.metrics);
  EXPECT_FALSE(report.latent_fill.metrics);
  EXPECT_NE(report.latent_fill.error.find("InsufficientSupport"), std::string::npos);
  EXPECT_EQ(report.augmented, 30u);
  for (const char* f : {"report.json", "metrics.csv", "augmented.geld", "denoiser.gelw", "adapter_gelda.gelw"})
    EXPECT_TRUE(fs::exists(dir.path / "a" / f)) << f;

  PipelineConfig again = cfg;
  again.out_dir = (dir.path / "b").string();
  const auto second = run_pipeline(again);
  EXPECT_EQ(second.to_json(false)["checkpoints"], report.to_json(false)["checkpoints"]);
  EXPECT_EQ(second.to_json(false)["gelda"].dump(), report.to_json(false)["gelda"].dump());
}

TEST(Pipeline, TestSplitValuesCannotLeakIntoTraining) {
  TempDir dir;
  PipelineConfig cfg = tiny(dir.path / "clean");
  const LatentDataset data = load_pipeline_dataset(cfg);
  write_dataset(data, dir.path / "clean.geld");
  LatentDataset poisoned = data;
  Rng rng(77);
  for (auto& r : poisoned.records)
    if (r.split == Split::test) r.vector = 100.0f * rng.normal_matrix<float>(r.vector.size(), 1).col(0);
  write_dataset(poisoned, dir.path / "poisoned.geld");

  cfg.dataset = (dir.path / "clean.geld").string();
  const auto a = run_pipeline(cfg);
  cfg.dataset = (dir.path / "poisoned.geld").string();
  cfg.out_dir = (dir.path / "poisoned").string();
  const auto b = run_pipeline(cfg);
  // Every trained artifact is byte-identical; only the scores may differ.
  EXPECT_EQ(a.checkpoints, b.checkpoints);
}

TEST(Pipeline, StageErrorsCarryTheStageName) {
  TempDir dir;
  PipelineConfig cfg = tiny(dir.path);
  cfg.scenario.target_subdomain = 7;
  try {
    run_pipeline(cfg);
    ADD_FAILURE() << "expected InvalidScenario";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidScenario);
    EXPECT_EQ(std::string(e.what()).rfind("InvalidScenario: scenario: ", 0), 0u) << e.what();
  }
}

TEST(Sweep, OneEntryPerValueWithErrorsRecorded) {
  TempDir dir;
  const PipelineConfig cfg = tiny(dir.path);
  const auto entries = sweep(cfg, SweepAxis::tap_layer, {"1", "5"});
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_TRUE(entries[0].report.has_value());
  EXPECT_FALSE(entries[1].report.has_value());
  EXPECT_NE(entries[1].error.find("InvalidLayer"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir.path / "tap_layer_1" / "report.json"));
  EXPECT_EQ(sweep_table(entries).rfind("value,pretrained_ua", 0), 0u);
  EXPECT_EQ(denoiser_size_widths("tiny"), (std::vector<Index>{64, 64}));
  expect_error(ErrorKind::InvalidConfig, [] { denoiser_size_widths("huge"); });
}
