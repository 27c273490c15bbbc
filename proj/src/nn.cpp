// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include "latentaug/nn.hpp"

#include <algorithm>
#include <cmath>

namespace latentaug {

template <typename S>
std::size_t ParamStore<S>::add(std::string name, Mat<S> value, bool trainable) {
  Param<S> p;
  p.name = std::move(name);
  p.grad = Mat<S>::Zero(value.rows(), value.cols());
  p.value = std::move(value);
  p.trainable = trainable;
  params_.push_back(std::move(p));
  return params_.size() - 1;
}

template <typename S>
std::size_t ParamStore<S>::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  fail(ErrorKind::InvalidConfig, "no parameter named " + std::string(name));
}

template <typename S>
void ParamStore<S>::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

template <typename S>
Index ParamStore<S>::scalar_count(bool trainable_only) const {
  Index n = 0;
  for (const auto& p : params_)
    if (p.trainable || !trainable_only) n += p.value.size();
  return n;
}

template <typename S>
Mat<S> affine_apply(const Mat<S>& weight, const Vec<S>& bias, const Mat<S>& x, Activation act) {
  require(weight.cols() == x.rows() && weight.rows() == bias.size(), ErrorKind::DimensionMismatch,
          "affine shapes do not conform");
  Mat<S> y = weight * x;
  y.colwise() += bias;
  if (act == Activation::relu) y = y.cwiseMax(S(0));
  ensure_finite(y, "affine output");
  return y;
}

template <typename S>
AffineLayer AffineLayer::create(ParamStore<S>& store, const std::string& name, Index in, Index out, Rng& rng) {
  require(in >= 1 && out >= 1, ErrorKind::InvalidConfig, "layer " + name + " has a zero dimension");
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Mat<S> w(out, in);
  for (Index j = 0; j < in; ++j)
    for (Index i = 0; i < out; ++i) w(i, j) = static_cast<S>((2.0 * rng.uniform() - 1.0) * limit);
  AffineLayer layer;
  layer.in = in;
  layer.out = out;
  layer.weight = store.add(name + ".weight", std::move(w));
  layer.bias = store.add(name + ".bias", Mat<S>::Zero(out, 1));
  return layer;
}

template <typename S>
Mat<S> AffineLayer::forward(const ParamStore<S>& store, const Mat<S>& x, Activation act, AffineTape<S>* tape) const {
  const Mat<S>& w = store.value(weight);
  require(x.rows() == in, ErrorKind::DimensionMismatch,
          "layer expects input width " + std::to_string(in) + ", got " + std::to_string(x.rows()));
  Mat<S> pre(out, x.cols());
  pre.noalias() = w * x;
  pre.colwise() += store.value(bias).col(0);
  ensure_finite(pre, store[weight].name);
  Mat<S> y = act == Activation::relu ? Mat<S>(pre.cwiseMax(S(0))) : pre;
  if (tape) {
    tape->input = x;
    tape->pre = std::move(pre);
    tape->act = act;
  }
  return y;
}

template <typename S>
Mat<S> AffineLayer::backward(ParamStore<S>& store, const AffineTape<S>& tape, const Mat<S>& dy,
                             bool need_input_grad) const {
  Mat<S> dpre = dy;
  if (tape.act == Activation::relu) dpre = (tape.pre.array() > S(0)).select(dy, S(0));
  auto& w = store[weight];
  auto& b = store[bias];
  if (w.trainable) w.grad.noalias() += dpre * tape.input.transpose();
  if (b.trainable) b.grad.col(0) += dpre.rowwise().sum();
  if (!need_input_grad) return {};
  Mat<S> dx(in, dy.cols());
  dx.noalias() = w.value.transpose() * dpre;
  return dx;
}

template <typename S>
Mat<S> softmax(const Mat<S>& logits) {
  Mat<S> p = logits;
  for (Index j = 0; j < p.cols(); ++j) {
    const S mx = p.col(j).maxCoeff();
    p.col(j) = (p.col(j).array() - mx).exp();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

template <typename S>
S softmax_cross_entropy(const Mat<S>& logits, std::span<const std::uint32_t> labels, Mat<S>* dlogits) {
  require(static_cast<Index>(labels.size()) == logits.cols(), ErrorKind::DimensionMismatch,
          "label count differs from batch size");
  require(!labels.empty(), ErrorKind::EmptyInput, "empty batch");
  const Mat<S> p = softmax(logits);
  const auto n = static_cast<S>(labels.size());
  S loss = 0;
  for (Index j = 0; j < logits.cols(); ++j) {
    const auto y = static_cast<Index>(labels[j]);
    require(y < logits.rows(), ErrorKind::DimensionMismatch, "label out of range");
    const S mx = logits.col(j).maxCoeff();
    const S lse = mx + std::log((logits.col(j).array() - mx).exp().sum());
    loss += lse - logits(y, j);
  }
  loss /= n;
  if (!std::isfinite(static_cast<double>(loss))) fail(ErrorKind::NumericalError, "non-finite cross-entropy");
  if (dlogits) {
    *dlogits = p;
    for (Index j = 0; j < logits.cols(); ++j) (*dlogits)(labels[j], j) -= S(1);
    *dlogits /= n;
  }
  return loss;
}

GradCheckResult grad_check(ParamStore<double>& params, const LossWithGrad& loss, double h) {
  params.zero_grad();
  const double base = loss(params);
  if (!std::isfinite(base)) fail(ErrorKind::NumericalError, "grad_check: non-finite loss");
  std::vector<Mat<double>> analytic;
  for (const auto& p : params) analytic.push_back(p.grad);

  GradCheckResult result;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    for (Index e = 0; e < params[i].value.size(); ++e) {
      double& v = params[i].value.data()[e];
      const double saved = v;
      v = saved + h;
      params.zero_grad();
      const double up = loss(params);
      v = saved - h;
      params.zero_grad();
      const double down = loss(params);
      v = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        fail(ErrorKind::NumericalError, "grad_check: non-finite loss while perturbing " + params[i].name);
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[i].data()[e];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = params[i].name;
        result.worst_index = e;
      }
    }
  }
  // Leave the store holding the analytic gradient of the unperturbed point.
  for (std::size_t i = 0; i < params.size(); ++i) params[i].grad = analytic[i];
  return result;
}

template <typename S>
void Optimizer<S>::step(ParamStore<S>& params, double lr_scale) {
  if (first_.empty()) {
    for (const auto& p : params) {
      first_.push_back(Mat<S>::Zero(p.value.rows(), p.value.cols()));
      second_.push_back(Mat<S>::Zero(p.value.rows(), p.value.cols()));
    }
  }
  require(first_.size() == params.size(), ErrorKind::DimensionMismatch, "optimizer state does not match parameters");
  for (const auto& p : params)
    if (p.trainable) ensure_finite(p.grad, "gradient of " + p.name);

  ++steps_;
  const S lr = static_cast<S>(config_.lr * lr_scale);
  const S wd = static_cast<S>(config_.weight_decay);
  const auto t = static_cast<double>(steps_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.trainable) continue;
    switch (config_.kind) {
      case OptimizerKind::sgd_momentum: {
        Mat<S> g = p.grad;
        if (wd != S(0)) g += wd * p.value;
        first_[i] = static_cast<S>(config_.momentum) * first_[i] + g;
        p.value -= lr * first_[i];
        break;
      }
      case OptimizerKind::adam:
      case OptimizerKind::adamw: {
        Mat<S> g = p.grad;
        if (config_.kind == OptimizerKind::adam && wd != S(0)) g += wd * p.value;
        const auto b1 = static_cast<S>(config_.beta1);
        const auto b2 = static_cast<S>(config_.beta2);
        first_[i] = b1 * first_[i] + (S(1) - b1) * g;
        second_[i] = b2 * second_[i] + (S(1) - b2) * g.cwiseProduct(g);
        const auto c1 = static_cast<S>(1.0 - std::pow(config_.beta1, t));
        const auto c2 = static_cast<S>(1.0 - std::pow(config_.beta2, t));
        if (config_.kind == OptimizerKind::adamw && wd != S(0)) p.value -= (lr * wd) * p.value;
        p.value.array() -= lr * (first_[i].array() / c1) /
                           ((second_[i].array() / c2).sqrt() + static_cast<S>(config_.eps));
        break;
      }
    }
  }
}

template <typename S>
Ema<S>::Ema(const ParamStore<S>& params, double max_decay) : max_decay_(max_decay) {
  require(max_decay > 0.0 && max_decay < 1.0, ErrorKind::InvalidConfig, "EMA max decay must lie in (0, 1)");
  for (const auto& p : params) shadow_.push_back(p.value);
}

template <typename S>
double Ema<S>::decay_at(std::uint64_t t, double max_decay) {
  const auto td = static_cast<double>(t);
  return std::min(max_decay, (1.0 + td) / (10.0 + td));
}

template <typename S>
void Ema<S>::update(const ParamStore<S>& params) {
  require(params.size() == shadow_.size(), ErrorKind::DimensionMismatch, "EMA shadow does not match parameters");
  const auto d = static_cast<S>(decay_at(steps_, max_decay_));
  for (std::size_t i = 0; i < shadow_.size(); ++i) {
    const auto& v = params[i].value;
    require(v.rows() == shadow_[i].rows() && v.cols() == shadow_[i].cols(), ErrorKind::DimensionMismatch,
            "EMA shape mismatch for " + params[i].name);
    if (!params[i].trainable) {
      shadow_[i] = v;
      continue;
    }
    shadow_[i] = d * shadow_[i] + (S(1) - d) * v;
  }
  ++steps_;
}

template <typename S>
void Ema<S>::copy_to(ParamStore<S>& params) const {
  require(params.size() == shadow_.size(), ErrorKind::DimensionMismatch, "EMA shadow does not match parameters");
  for (std::size_t i = 0; i < shadow_.size(); ++i) params[i].value = shadow_[i];
}

#define LATENTAUG_INSTANTIATE(S)                                                                               \
  template class ParamStore<S>;                                                                               \
  template Mat<S> affine_apply<S>(const Mat<S>&, const Vec<S>&, const Mat<S>&, Activation);                   \
  template AffineLayer AffineLayer::create<S>(ParamStore<S>&, const std::string&, Index, Index, Rng&);        \
  template Mat<S> AffineLayer::forward<S>(const ParamStore<S>&, const Mat<S>&, Activation, AffineTape<S>*)    \
      const;                                                                                                  \
  template Mat<S> AffineLayer::backward<S>(ParamStore<S>&, const AffineTape<S>&, const Mat<S>&, bool) const; \
  template Mat<S> softmax<S>(const Mat<S>&);                                                                  \
  template S softmax_cross_entropy<S>(const Mat<S>&, std::span<const std::uint32_t>, Mat<S>*);                \
  template class Optimizer<S>;                                                                                \
  template class Ema<S>;

LATENTAUG_INSTANTIATE(float)
LATENTAUG_INSTANTIATE(double)

#undef LATENTAUG_INSTANTIATE

}  // namespace latentaug
