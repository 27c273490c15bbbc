// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentaug/types.hpp"

namespace latentaug {

/// Long-tail groups by training count: many > 100, medium 20..100, small < 20.
enum class ClassGroup { many, medium, small };
ClassGroup class_group(std::uint64_t train_count);

// All rates are percentages.
struct MetricsReport {
  std::size_t n = 0;
  std::vector<std::vector<std::uint64_t>> confusion;  // [true][predicted]
  std::vector<bool> present;                          // class occurs in the labels
  std::vector<double> recall;
  std::vector<double> precision;
  std::vector<double> f1;
  double ua = 0.0;
  double wa = 0.0;
  double macro_f1 = 0.0;
  std::optional<std::uint32_t> excluded_class;
  std::optional<double> ua_without_excluded;
  std::optional<double> acc_many;
  std::optional<double> acc_medium;
  std::optional<double> acc_small;

  std::string to_csv() const;
  nlohmann::ordered_json to_json() const;
};

/// `train_counts` (per class) drives the many/medium/small split; pass an empty
/// span to skip the group accuracies.
MetricsReport compute_metrics(std::span<const std::uint32_t> predictions, std::span<const std::uint32_t> labels,
                              std::size_t num_classes, std::span<const std::uint64_t> train_counts = {},
                              std::optional<std::uint32_t> excluded_class = std::nullopt);

/// Mean intra-class pairwise Euclidean distance in space_b divided by the same
/// quantity in space_a. Columns are samples; both spaces share `labels`.
double compactness_ratio(const Mat<float>& space_a, const Mat<float>& space_b, std::span<const std::uint32_t> labels);

/// Mean over all same-class pairs of ||x_i - x_j||.
double mean_intra_class_distance(const Mat<float>& space, std::span<const std::uint32_t> labels);

}  // namespace latentaug
