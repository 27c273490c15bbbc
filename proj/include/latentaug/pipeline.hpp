// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "latentaug/adapter.hpp"
#include "latentaug/diffusion.hpp"
#include "latentaug/latent_store.hpp"
#include "latentaug/metrics.hpp"
#include "latentaug/sampler.hpp"

namespace latentaug {

/// Parameters of the synthetic transfer family (see transfer_family).
struct SyntheticFamily {
  std::uint32_t m = 16;
  std::uint32_t c = 4;
  std::uint32_t k = 3;
  double class_distance = 6.0;
  double subdomain_norm = 3.0;
  double per_cell_std = 1.0;
  std::uint32_t n_train = 200;
  std::uint32_t n_test = 100;
};

struct LatentFillConfig {
  bool enabled = true;
  double noise_std = 0.1;
};

/// Every stage seed is derived from `seed` and the stage name, so the seed
/// fields inside the nested configs are ignored.
struct PipelineConfig {
  /// GELD file; when empty the synthetic family below is generated.
  std::string dataset;
  SyntheticFamily synthetic;
  ScenarioSpec scenario;
  int tap_layer = 0;
  std::vector<Index> adapter_hidden{512, 256};
  TrainConfig stage1;
  TrainConfig stage3;
  DenoiserConfig denoiser;
  DiffTrainConfig diffusion{.iterations = 20000};
  SamplerConfig sampler;
  std::uint32_t n_aug = 200;
  ConditionMode condition_mode = ConditionMode::class_plus_subdomain_latent;
  /// Semantic vectors for class_plus_semantic_vector (GELD, K = 1).
  std::string semantic_vectors;
  /// Scenario none augments classes with fewer train samples than this.
  std::uint32_t small_threshold = 20;
  LatentFillConfig latent_fill;
  std::string out_dir = "out";
  std::uint64_t seed = 0;

  void validate() const;
};

/// Observes every record a stage consumes. Stage names: "stage1", "stage2",
/// "stage3", "latent_fill", "evaluate".
using RecordHook = std::function<void(std::string_view stage, const LatentRecord& record)>;

struct ModelScore {
  std::optional<MetricsReport> metrics;
  /// Set instead of metrics when the model could not be built (e.g. Latent
  /// Filling without two target latents per class).
  std::string error;
};

struct RunReport {
  std::uint64_t seed = 0;
  std::map<std::string, double> timings;
  std::map<std::string, std::string> checkpoints;  // name -> "path#fnv64"
  std::uint64_t augmented = 0;
  double null_fraction = 0.0;
  ModelScore pretrained;
  ModelScore gt_only;
  ModelScore gelda;
  ModelScore latent_fill;
  nlohmann::ordered_json config;

  /// Deterministic for a given config unless `with_timings`.
  nlohmann::ordered_json to_json(bool with_timings = true) const;
  std::string to_csv() const;
};

/// Dataset named by the config (file or synthetic), before any scenario.
LatentDataset load_pipeline_dataset(const PipelineConfig& cfg);

/// Classes that get synthetic samples in the target subdomain.
std::vector<std::uint32_t> augmentation_classes(const LatentDataset& train, const PipelineConfig& cfg);

/// Records used as Stage-3 ground truth: the target subdomain's train records
/// for subdomain scenarios, or the augmented classes' train records otherwise.
bool stage3_member(const LatentRecord& record, const PipelineConfig& cfg, std::span<const std::uint32_t> aug_classes);

/// Test records scored for the report.
bool evaluation_member(const LatentRecord& record, const PipelineConfig& cfg);

/// Latents of train records in Z^(l), one matrix per subdomain.
std::vector<Mat<float>> subdomain_pools(const AdapterModel<float>& model, const LatentDataset& train, int l);

MetricsReport evaluate_adapter(const AdapterModel<float>& model, const LatentDataset& test,
                               std::span<const std::uint64_t> train_counts, std::optional<std::uint32_t> excluded,
                               const std::function<bool(const LatentRecord&)>& keep);

/// Convex interpolation between two distinct same-class latents plus Gaussian
/// noise. Needs at least two latents.
AugmentationSet latent_fill_augment(const Mat<float>& latents, std::uint32_t class_id, std::uint32_t subdomain_id,
                                    std::uint32_t n, double noise_std, Rng& rng);

RunReport run_pipeline(const PipelineConfig& cfg, const RecordHook& hook = {});

enum class SweepAxis { denoiser_size, n_aug, tap_layer };

struct SweepEntry {
  std::string value;
  std::optional<RunReport> report;
  std::string error;
};

/// Denoiser widths behind the size names tiny, small and base.
std::vector<Index> denoiser_size_widths(const std::string& name);

std::vector<SweepEntry> sweep(const PipelineConfig& cfg, SweepAxis axis, const std::vector<std::string>& values);
std::string sweep_table(const std::vector<SweepEntry>& entries);

}  // namespace latentaug
