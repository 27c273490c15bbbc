// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "latentaug/error.hpp"
#include "latentaug/rng.hpp"
#include "latentaug/types.hpp"

namespace latentaug {

// Small dense engine for the two fixed architectures in this library.
// Networks record exactly what their backward pass needs ("tapes"); there is
// no general graph.

enum class Activation { none, relu };

template <typename Derived>
void ensure_finite(const Eigen::DenseBase<Derived>& m, std::string_view what) {
  if (!m.allFinite()) fail(ErrorKind::NumericalError, "non-finite values in " + std::string(what));
}

template <typename S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
  /// Non-trainable entries are buffers: checkpointed, never updated.
  bool trainable = true;
};

template <typename S>
class ParamStore {
 public:
  std::size_t add(std::string name, Mat<S> value, bool trainable = true);

  std::size_t size() const { return params_.size(); }
  Param<S>& operator[](std::size_t i) { return params_[i]; }
  const Param<S>& operator[](std::size_t i) const { return params_[i]; }
  std::size_t index_of(std::string_view name) const;

  Mat<S>& value(std::size_t i) { return params_[i].value; }
  const Mat<S>& value(std::size_t i) const { return params_[i].value; }
  Mat<S>& grad(std::size_t i) { return params_[i].grad; }

  void zero_grad();
  Index scalar_count(bool trainable_only = true) const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  template <typename T>
  ParamStore<T> cast() const {
    ParamStore<T> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<T>(), p.trainable);
    return out;
  }

 private:
  std::vector<Param<S>> params_;
};

/// Raw affine map y = act(W x + b) over a batch of columns.
template <typename S>
Mat<S> affine_apply(const Mat<S>& weight, const Vec<S>& bias, const Mat<S>& x, Activation act);

template <typename S>
struct AffineTape {
  Mat<S> input;
  Mat<S> pre;  // W x + b before the activation
  Activation act = Activation::none;
};

/// Indices of a weight/bias pair inside a ParamStore.
struct AffineLayer {
  std::size_t weight = 0;
  std::size_t bias = 0;
  Index in = 0;
  Index out = 0;

  /// Glorot-uniform weights, zero bias.
  template <typename S>
  static AffineLayer create(ParamStore<S>& store, const std::string& name, Index in, Index out, Rng& rng);

  template <typename S>
  Mat<S> forward(const ParamStore<S>& store, const Mat<S>& x, Activation act, AffineTape<S>* tape) const;

  /// Accumulates dW, db into the store; returns dL/dx (empty when !need_input_grad).
  template <typename S>
  Mat<S> backward(ParamStore<S>& store, const AffineTape<S>& tape, const Mat<S>& dy, bool need_input_grad = true) const;
};

template <typename S>
Mat<S> softmax(const Mat<S>& logits);

/// Mean softmax cross-entropy over the batch; fills dlogits when non-null.
template <typename S>
S softmax_cross_entropy(const Mat<S>& logits, std::span<const std::uint32_t> labels, Mat<S>* dlogits);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  Index worst_index = -1;
  Index checked = 0;

  bool within(double tolerance) const { return max_rel_error < tolerance; }
};

/// Evaluates the loss and fills gradients for every trainable parameter.
using LossWithGrad = std::function<double(ParamStore<double>&)>;

/// Central differences against the analytic gradient, in 64-bit. Relative
/// error per entry is |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult grad_check(ParamStore<double>& params, const LossWithGrad& loss, double h = 1e-5);

enum class OptimizerKind { sgd_momentum, adam, adamw };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

template <typename S>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  /// One update of every trainable parameter. Gradients are left as-is.
  void step(ParamStore<S>& params, double lr_scale = 1.0);

  std::uint64_t step_count() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<Mat<S>> first_;
  std::vector<Mat<S>> second_;
};

/// Shadow weights with the inverse decay d(t) = min(max_decay, (1+t)/(10+t)).
template <typename S>
class Ema {
 public:
  Ema() = default;
  Ema(const ParamStore<S>& params, double max_decay);

  static double decay_at(std::uint64_t t, double max_decay);

  void update(const ParamStore<S>& params);
  /// Copies the shadow into a store with the same layout.
  void copy_to(ParamStore<S>& params) const;

  std::uint64_t step_count() const { return steps_; }
  double max_decay() const { return max_decay_; }
  const std::vector<Mat<S>>& shadow() const { return shadow_; }

 private:
  std::vector<Mat<S>> shadow_;
  std::uint64_t steps_ = 0;
  double max_decay_ = 0.9999;
};

}  // namespace latentaug
