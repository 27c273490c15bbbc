// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "latentaug/adapter.hpp"
#include "latentaug/diffusion.hpp"
#include "latentaug/latent_store.hpp"

namespace latentaug {

enum class Integrator { euler, euler_ancestral, dpmpp_sde };

struct SamplerConfig {
  int steps = 20;
  double cfg_scale = 1.2;
  Integrator integrator = Integrator::euler_ancestral;
  double rho = 7.0;
  std::uint64_t seed = 0;
  /// Ancestral noise amount and scale (euler_ancestral, dpmpp_sde).
  double eta = 1.0;
  double s_noise = 1.0;

  void validate() const;
};

/// n sigmas interpolated in sigma^(1/rho) from sigma_max down to sigma_min,
/// followed by a terminal 0.
std::vector<double> karras_sigmas(int n, double sigma_min, double sigma_max, double rho);

/// d_uncond + scale * (d_cond - d_uncond); scale 1 and 0 return the inputs
/// unchanged.
template <typename S>
Mat<S> cfg_combine(const Mat<S>& d_cond, const Mat<S>& d_uncond, double scale);

template <typename S>
using DenoiseFn = std::function<Mat<S>(const Mat<S>& x, double sigma)>;

using StepObserver = std::function<void(int step, const Mat<float>& x)>;

/// Runs the reverse process from x (already at sigmas[0]) to the final sigma.
/// Column j draws its noise from streams[j] only.
Mat<float> integrate(const DenoiseFn<float>& denoise, Mat<float> x, const std::vector<double>& sigmas,
                     const SamplerConfig& cfg, std::span<Rng> streams, const StepObserver& observer = {});

/// Classifier-free guided denoiser for a fixed set of condition draws.
DenoiseFn<float> guided_denoiser(const DenoiserModel<float>& model, std::vector<ConditionDraw> draws, double scale);

/// One sample: draws the condition and initial noise from `rng`.
Vec<float> sample_one(const DenoiserModel<float>& model, const ConditionInput& input, const SamplerConfig& cfg, Rng& rng);

/// Synthetic latents with labels, plus where they came from.
struct AugmentationSet {
  Mat<float> vectors;
  std::vector<std::uint32_t> class_ids;
  std::vector<std::uint32_t> subdomain_ids;
  std::string provenance;

  Index size() const { return vectors.cols(); }
  void append(const AugmentationSet& other);
  LabeledLatents labeled() const;
  /// All records tagged as train; provenance goes into the manifest source_tag.
  LatentDataset to_dataset(const DatasetManifest& like) const;
  static AugmentationSet from_dataset(const LatentDataset& dataset);
};

/// n_per_class samples for each class, all labeled with `subdomain`. Sample i
/// of class c uses the stream (seed, c, i), so the result does not depend on
/// which other classes are requested.
AugmentationSet generate_set(const DenoiserModel<float>& model, std::span<const std::uint32_t> classes,
                             std::uint32_t n_per_class, std::uint32_t subdomain, const SamplerConfig& cfg,
                             std::uint64_t seed);

}  // namespace latentaug
