// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

#include "latentaug/types.hpp"

namespace latentaug {

std::uint64_t splitmix64(std::uint64_t x);

/// Folds a list of tags into a seed. Streams derived from distinct tag lists
/// are statistically independent, which lets each cell/sample/step own its
/// randomness regardless of evaluation order.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

/// Stable 64-bit tag for a purpose string ("stage1.shuffle", ...).
std::uint64_t purpose_tag(std::string_view purpose);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags)
      : engine_(derive_seed(seed, tags)) {}

  /// Uniform on [0, 1).
  double uniform() { return uniform_(engine_); }
  double normal() { return normal_(engine_); }
  /// Uniform integer on [0, n).
  std::size_t index(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename S>
  Mat<S> normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Mat<S> out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = static_cast<S>(normal());
    return out;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace latentaug
