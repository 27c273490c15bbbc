// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latentaug/nn.hpp"

namespace latentaug {

struct GradInstanceResult {
  std::string label;  // "adapter" or "denoiser/<mode>"
  GradCheckResult check;
  /// Draws rejected because a ReLU input sat within the kink margin.
  int resampled = 0;
  /// Denoiser instances: whether the projection and null vector received a
  /// nonzero gradient, i.e. were actually exercised.
  bool projection_covered = false;
  bool null_covered = false;
};

/// Random small adapter (random depth, widths, frozen prefix, CE or LA loss).
GradInstanceResult check_adapter_instance(std::uint64_t seed);

/// Random small denoiser (condition mode picked by seed) with a batch that
/// mixes conditioned and null draws, random sigmas and optional dropout.
GradInstanceResult check_denoiser_instance(std::uint64_t seed);

struct GradSuiteReport {
  std::vector<GradInstanceResult> instances;
  double worst = 0.0;
  std::string worst_where;

  bool within(double tolerance) const { return worst < tolerance; }
};

/// `count` adapter instances followed by `count` denoiser instances.
GradSuiteReport run_grad_suite(int count, std::uint64_t seed);

}  // namespace latentaug
