// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "latentaug/checkpoint.hpp"
#include "latentaug/latent_store.hpp"
#include "latentaug/nn.hpp"

namespace latentaug {

/// Stack of affine layers over frozen embeddings: ReLU between layers, a linear
/// head producing class logits. Z^(0) is the input space and Z^(l) the
/// post-ReLU output of layer l.
template <typename S>
class AdapterModel {
 public:
  struct Tape {
    int start_layer = 0;
    std::vector<AffineTape<S>> layers;
  };

  AdapterModel() = default;
  AdapterModel(std::vector<Index> dims, std::uint64_t seed);

  Index input_dim() const { return dims_.front(); }
  Index num_classes() const { return dims_.back(); }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  const std::vector<Index>& dims() const { return dims_; }
  /// Width of Z^(l).
  Index latent_dim(int l) const;

  ParamStore<S>& params() { return params_; }
  const ParamStore<S>& params() const { return params_; }
  const std::vector<AffineLayer>& layers() const { return layers_; }

  int frozen_prefix() const { return frozen_prefix_; }
  /// Marks layers 1..l (one-based) non-trainable.
  void set_frozen_prefix(int l);

  /// Logits for inputs living in Z^(start_layer).
  Mat<S> forward_from(int start_layer, const Mat<S>& z, Tape* tape = nullptr) const;
  void backward(const Tape& tape, const Mat<S>& dlogits);

  /// Activation in Z^(l) for inputs in Z^(0); l = 0 is the identity.
  Mat<S> tap(const Mat<S>& z0, int l) const;

  Mat<S> predict_proba(const Mat<S>& z, int start_layer = 0) const;
  std::vector<std::uint32_t> predict(const Mat<S>& z, int start_layer = 0) const;

  template <typename T>
  AdapterModel<T> cast() const {
    AdapterModel<T> out;
    out.dims_ = dims_;
    out.layers_ = layers_;
    out.params_ = params_.template cast<T>();
    out.frozen_prefix_ = frozen_prefix_;
    return out;
  }

 private:
  template <typename>
  friend class AdapterModel;

  std::vector<Index> dims_;
  std::vector<AffineLayer> layers_;
  ParamStore<S> params_;
  int frozen_prefix_ = 0;
};

AdapterModel<float> build_adapter(Index m, Index c, const std::vector<Index>& hidden = {512, 256},
                                  std::uint64_t seed = 0);

std::vector<NamedTensor> adapter_tensors(const AdapterModel<float>& model);
void write_adapter(const std::filesystem::path& path, const AdapterModel<float>& model);
AdapterModel<float> read_adapter(const std::filesystem::path& path);

/// logit_c + tau * ln(prior_c).
template <typename S>
Vec<S> la_adjust(const Vec<S>& logits, std::span<const double> priors, double tau);

/// Class frequencies of `labels`; throws InvalidPrior when a class is absent.
std::vector<double> class_priors(std::span<const std::uint32_t> labels, Index num_classes);

enum class LossKind { cross_entropy, logit_adjusted };

struct TrainConfig {
  int epochs = 100;
  int batch = 32;
  double lr = 1e-3;
  int warmup_epochs = 10;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::cross_entropy;
  double la_tau = 1.0;
  OptimizerKind optimizer = OptimizerKind::adam;
  double momentum = 0.9;
  double weight_decay = 0.0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  std::string to_json() const;
};

struct LabeledLatents {
  Mat<float> x;
  std::vector<std::uint32_t> labels;

  Index size() const { return x.cols(); }
};

/// Train split of `dataset` as inputs in Z^(0).
LabeledLatents train_split(const LatentDataset& dataset);

/// Stage 1: every layer trained on the full (imbalanced) train split.
TrainHistory train_stage1(AdapterModel<float>& model, const LatentDataset& dataset, const TrainConfig& cfg);

/// Stage 3: layers up to l stay frozen; GT and synthetic latents in Z^(l) are
/// shuffled together and fed to layer l+1.
TrainHistory finetune_stage3(AdapterModel<float>& model, int l, const LabeledLatents& gt, const LabeledLatents& aug,
                             const TrainConfig& cfg);

}  // namespace latentaug
