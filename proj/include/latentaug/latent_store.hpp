// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "latentaug/types.hpp"

namespace latentaug {

enum class Split : std::uint8_t { train = 0, test = 1 };

struct LatentRecord {
  Eigen::VectorXf vector;
  std::uint32_t class_id = 0;
  std::uint32_t subdomain_id = 0;
  Split split = Split::train;
};

bool bit_equal(const LatentRecord& a, const LatentRecord& b);

/// Dimensions, label names and per-(class, subdomain, split) counts.
struct DatasetManifest {
  std::uint32_t m = 0;
  std::uint32_t c = 0;
  std::uint32_t k = 0;
  std::vector<std::string> class_names;
  std::vector<std::string> subdomain_names;
  // Flattened [class][subdomain][split].
  std::vector<std::uint64_t> histogram;
  std::string source_tag;

  static DatasetManifest with_default_names(std::uint32_t m, std::uint32_t c, std::uint32_t k);

  std::uint64_t count(std::uint32_t cls, std::uint32_t sub, Split split) const;
  std::uint64_t& count(std::uint32_t cls, std::uint32_t sub, Split split);
  std::uint64_t total() const;
  std::uint64_t total(Split split) const;
  /// Train counts per class summed over subdomains.
  std::vector<std::uint64_t> class_counts(Split split) const;

  bool operator==(const DatasetManifest&) const = default;
};

struct LatentDataset {
  std::vector<LatentRecord> records;
  DatasetManifest manifest;

  /// Builds a dataset and derives the manifest histogram from the records.
  static LatentDataset from_records(std::vector<LatentRecord> records, DatasetManifest manifest);

  /// Throws DimensionMismatch / IntegrityError when an invariant is violated.
  void validate() const;

  std::uint32_t dim() const { return manifest.m; }
  std::size_t size() const { return records.size(); }

  /// Columns of all records accepted by `keep`, in record order.
  Mat<float> stack(const std::function<bool(const LatentRecord&)>& keep,
                   std::vector<std::uint32_t>* class_ids = nullptr,
                   std::vector<std::uint32_t>* subdomain_ids = nullptr) const;
};

/// Recomputes the histogram of `manifest` from `records`.
void recount(DatasetManifest& manifest, std::span<const LatentRecord> records);

/// Mean over frames, coordinate-wise.
Eigen::VectorXf temporal_pool(std::span<const Eigen::VectorXf> frames);

// "GELD" binary payload plus a ".manifest" sidecar holding the manifest as JSON.
inline constexpr char kDatasetMagic[4] = {'G', 'E', 'L', 'D'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 28;

std::filesystem::path manifest_path(const std::filesystem::path& data_path);
std::uint64_t write_dataset(const LatentDataset& dataset, const std::filesystem::path& path);
LatentDataset read_dataset(const std::filesystem::path& path);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

struct SyntheticSpec {
  std::uint32_t m = 0;
  std::uint32_t c = 0;
  std::uint32_t k = 0;
  std::vector<Eigen::VectorXf> class_offsets;
  std::vector<Eigen::VectorXf> subdomain_offsets;
  double per_cell_std = 1.0;
  // Indexed [class * k + subdomain].
  std::vector<std::uint32_t> n_train;
  std::vector<std::uint32_t> n_test;
  std::uint64_t seed = 0;

  void set_uniform_counts(std::uint32_t train, std::uint32_t test);
  Eigen::VectorXf cell_mean(std::uint32_t cls, std::uint32_t sub) const;
};

/// Class offsets on a regular simplex with the given pairwise distance and
/// subdomain offsets of the given norm along seeded random directions, so a
/// subdomain shift is partly entangled with the class geometry.
SyntheticSpec transfer_family(std::uint32_t m, std::uint32_t c, std::uint32_t k, double class_distance,
                              double subdomain_norm, double per_cell_std, std::uint32_t n_train,
                              std::uint32_t n_test, std::uint64_t seed);

LatentDataset make_synthetic(const SyntheticSpec& spec);

enum class ScenarioKind { none, zero_shot, k_shot };

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::none;
  std::uint32_t target_subdomain = 0;
  std::uint32_t kept_class = 0;
  std::uint32_t shots = 0;
  std::uint64_t seed = 0;
};

/// Filters the train split; test records pass through untouched.
LatentDataset apply_scenario(const LatentDataset& dataset, const ScenarioSpec& scenario);

}  // namespace latentaug
