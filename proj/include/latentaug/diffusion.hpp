// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "latentaug/checkpoint.hpp"
#include "latentaug/condition.hpp"
#include "latentaug/nn.hpp"

namespace latentaug {

struct NoiseSchedule {
  double sigma_min = 0.01;
  double sigma_max = 80.0;
  double sigma_data = 1.0;

  void validate() const;
};

/// Inverse CDF of the cosine-interpolated sigma distribution:
/// sigma = sigma_data * tan(u * (atan(max/data) - atan(min/data)) + atan(min/data)).
double sigma_from_uniform(const NoiseSchedule& schedule, double u);
double sample_sigma(const NoiseSchedule& schedule, Rng& rng);

struct Preconditioning {
  double c_skip = 0.0;
  double c_out = 0.0;
  double c_in = 0.0;
};

Preconditioning precondition(double sigma, double sigma_data);

/// Denoised-space loss weight 1 / (sigma^2 + sigma_data^2).
double loss_weight(double sigma, double sigma_data);

/// Standard deviation of all entries of `latents` around their common mean.
double estimate_sigma_data(const Mat<float>& latents);

struct DenoiserConfig {
  Index input_dim = 0;
  /// Residual block widths; blocks preserve width, so entries must agree.
  std::vector<Index> hidden{512, 512, 512};
  Index time_dim = 256;
  ConditionConfig condition;
  NoiseSchedule schedule;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  Index width() const { return hidden.front(); }
  void validate() const;
};

/// Preconditioned conditional denoiser D(x; sigma, c) = c_skip x + c_out F(c_in x; t(sigma), c),
/// where F is a residual dense network whose blocks each receive the projected
/// condition additively.
template <typename S>
class DenoiserModel {
 public:
  struct Block {
    AffineLayer inject;
    AffineLayer fc1;
    AffineLayer fc2;
  };

  struct BlockTape {
    AffineTape<S> inject;
    Mat<S> entry;  // h + inject(e), before the pre-activation ReLU
    AffineTape<S> fc1;
    AffineTape<S> fc2;
    Mat<S> dropout_mask;
  };

  struct Tape {
    std::vector<S> sigmas;
    typename ConditionSource<S>::Tape condition;
    Mat<S> time;
    AffineTape<S> mix;
    AffineTape<S> input;
    std::vector<BlockTape> blocks;
    Mat<S> final_hidden;
    AffineTape<S> output;
  };

  DenoiserModel() = default;
  explicit DenoiserModel(const DenoiserConfig& config);

  const DenoiserConfig& config() const { return config_; }
  const NoiseSchedule& schedule() const { return config_.schedule; }
  void set_sigma_data(double sigma_data);
  void set_time_frequencies(Vec<S> frequencies);

  ParamStore<S>& params() { return params_; }
  const ParamStore<S>& params() const { return params_; }
  ConditionSource<S>& condition() { return condition_; }
  const ConditionSource<S>& condition() const { return condition_; }
  const TimeEmbedding<S>& time_embedding() const { return time_; }

  /// Raw network F(c_in x; t, c). `conditions` are final-width condition columns.
  Mat<S> network(const Mat<S>& scaled_x, std::span<const S> sigmas, const Mat<S>& conditions, Tape* tape,
                 Rng* dropout_rng = nullptr) const;

  /// Preconditioned denoiser over a batch of draws.
  Mat<S> denoise(const Mat<S>& x, std::span<const S> sigmas, std::span<const ConditionDraw> draws,
                 Tape* tape = nullptr, Rng* dropout_rng = nullptr) const;
  /// Same with precomputed condition columns (used by the sampler's null branch).
  Mat<S> denoise_with(const Mat<S>& x, std::span<const S> sigmas, const Mat<S>& conditions) const;

  /// Accumulates parameter gradients given dL/dD.
  void backward(const Tape& tape, const Mat<S>& ddenoised);

  template <typename T>
  DenoiserModel<T> cast() const {
    DenoiserModel<T> out;
    out.config_ = config_;
    out.params_ = params_.template cast<T>();
    out.condition_ = condition_.template cast<T>();
    out.time_ = TimeEmbedding<T>(time_.frequencies().template cast<T>());
    out.mix_ = mix_;
    out.input_ = input_;
    out.blocks_ = blocks_;
    out.output_ = output_;
    return out;
  }

 private:
  template <typename>
  friend class DenoiserModel;

  DenoiserConfig config_;
  ParamStore<S> params_;
  ConditionSource<S> condition_;
  TimeEmbedding<S> time_;
  AffineLayer mix_;
  AffineLayer input_;
  std::vector<Block> blocks_;
  AffineLayer output_;
};

/// Frozen randomness of one loss evaluation.
template <typename S>
struct DiffusionBatch {
  Mat<S> clean;
  std::vector<S> sigmas;
  Mat<S> noise;
  std::vector<ConditionDraw> draws;
};

/// mean_j w(sigma_j) * ||D(x0_j + sigma_j eps_j) - x0_j||^2 / M; fills
/// gradients when `with_grad`.
template <typename S>
S diffusion_loss(DenoiserModel<S>& model, const DiffusionBatch<S>& batch, bool with_grad, Rng* dropout_rng = nullptr);

/// Draws sigma, noise and the (possibly dropped) condition for one sample and
/// evaluates its loss.
template <typename S>
S diffusion_loss(DenoiserModel<S>& model, const Vec<S>& x0, const ConditionInput& input, double cond_dropout,
                 Rng& rng, bool with_grad);

struct DiffTrainConfig {
  std::int64_t iterations = 400000;
  int batch = 64;
  double lr = 5e-4;
  double weight_decay = 1e-4;
  double cond_dropout = 0.1;
  double ema_max_decay = 0.9999;
  std::uint64_t seed = 0;
  /// Loss is averaged over windows of this many steps in the returned history.
  std::int64_t log_every = 1000;

  void validate() const;
};

struct DiffusionStats {
  std::uint64_t conditions_seen = 0;
  std::uint64_t nulls_seen = 0;
  std::vector<double> loss_history;

  double null_fraction() const {
    return conditions_seen ? static_cast<double>(nulls_seen) / static_cast<double>(conditions_seen) : 0.0;
  }
};

struct TrainedDenoiser {
  /// Carries the EMA weights.
  DenoiserModel<float> model;
  DiffusionStats stats;
};

/// Latents (one column each) with their class and subdomain labels.
struct DiffusionData {
  Mat<float> latents;
  std::vector<ConditionInput> labels;
};

/// Stage 2. `config.input_dim` and `config.schedule.sigma_data` are filled from
/// the data when left at zero.
TrainedDenoiser train_diffusion(const DiffusionData& data, DenoiserConfig config, const std::vector<Mat<float>>& pools,
                                const Mat<float>& semantic, const DiffTrainConfig& cfg);

std::vector<NamedTensor> denoiser_tensors(const DenoiserModel<float>& model);
void write_denoiser(const std::filesystem::path& path, const DenoiserModel<float>& model);
DenoiserModel<float> read_denoiser(const std::filesystem::path& path);

}  // namespace latentaug
