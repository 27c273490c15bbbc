// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include "latentaug/adapter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

namespace latentaug {

template <typename S>
AdapterModel<S>::AdapterModel(std::vector<Index> dims, std::uint64_t seed) : dims_(std::move(dims)) {
  require(dims_.size() >= 2, ErrorKind::InvalidConfig, "adapter needs at least one layer");
  for (Index d : dims_) require(d >= 1, ErrorKind::InvalidConfig, "adapter dimensions must be positive");
  Rng rng(seed, {purpose_tag("adapter.init")});
  for (std::size_t i = 0; i + 1 < dims_.size(); ++i)
    layers_.push_back(AffineLayer::create(params_, "adapter." + std::to_string(i + 1), dims_[i], dims_[i + 1], rng));
}

template <typename S>
Index AdapterModel<S>::latent_dim(int l) const {
  require(l >= 0 && l < num_layers(), ErrorKind::InvalidLayer,
          "tap layer " + std::to_string(l) + " outside [0, " + std::to_string(num_layers()) + ")");
  return dims_[static_cast<std::size_t>(l)];
}

template <typename S>
void AdapterModel<S>::set_frozen_prefix(int l) {
  require(l >= 0 && l <= num_layers(), ErrorKind::InvalidLayer, "frozen prefix out of range");
  frozen_prefix_ = l;
  for (int i = 0; i < num_layers(); ++i) {
    const bool trainable = i >= l;
    params_[layers_[i].weight].trainable = trainable;
    params_[layers_[i].bias].trainable = trainable;
  }
}

template <typename S>
Mat<S> AdapterModel<S>::forward_from(int start_layer, const Mat<S>& z, Tape* tape) const {
  require(start_layer >= 0 && start_layer < num_layers(), ErrorKind::InvalidLayer, "start layer out of range");
  require(z.rows() == dims_[static_cast<std::size_t>(start_layer)], ErrorKind::DimensionMismatch,
          "input width " + std::to_string(z.rows()) + " does not match Z^(" + std::to_string(start_layer) + ")");
  if (tape) {
    tape->start_layer = start_layer;
    tape->layers.assign(layers_.size() - static_cast<std::size_t>(start_layer), {});
  }
  Mat<S> h = z;
  for (int i = start_layer; i < num_layers(); ++i) {
    const auto act = i + 1 == num_layers() ? Activation::none : Activation::relu;
    h = layers_[i].forward(params_, h, act, tape ? &tape->layers[i - start_layer] : nullptr);
  }
  return h;
}

template <typename S>
void AdapterModel<S>::backward(const Tape& tape, const Mat<S>& dlogits) {
  Mat<S> g = dlogits;
  for (int i = num_layers() - 1; i >= tape.start_layer; --i)
    g = layers_[i].backward(params_, tape.layers[i - tape.start_layer], g, i > tape.start_layer);
}

template <typename S>
Mat<S> AdapterModel<S>::tap(const Mat<S>& z0, int l) const {
  require(l >= 0 && l < num_layers(), ErrorKind::InvalidLayer,
          "tap layer " + std::to_string(l) + " outside [0, " + std::to_string(num_layers()) + ")");
  require(z0.rows() == input_dim(), ErrorKind::DimensionMismatch, "tap input width mismatch");
  Mat<S> h = z0;
  for (int i = 0; i < l; ++i) h = layers_[i].forward(params_, h, Activation::relu, static_cast<AffineTape<S>*>(nullptr));
  return h;
}

template <typename S>
Mat<S> AdapterModel<S>::predict_proba(const Mat<S>& z, int start_layer) const {
  return softmax(forward_from(start_layer, z));
}

template <typename S>
std::vector<std::uint32_t> AdapterModel<S>::predict(const Mat<S>& z, int start_layer) const {
  const Mat<S> logits = forward_from(start_layer, z);
  std::vector<std::uint32_t> out(static_cast<std::size_t>(logits.cols()));
  for (Index j = 0; j < logits.cols(); ++j) {
    Index arg = 0;
    logits.col(j).maxCoeff(&arg);
    out[static_cast<std::size_t>(j)] = static_cast<std::uint32_t>(arg);
  }
  return out;
}

template class AdapterModel<float>;
template class AdapterModel<double>;

AdapterModel<float> build_adapter(Index m, Index c, const std::vector<Index>& hidden, std::uint64_t seed) {
  require(m >= 1 && c >= 1, ErrorKind::InvalidConfig, "adapter needs M >= 1 and C >= 1");
  std::vector<Index> dims{m};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(c);
  return AdapterModel<float>(std::move(dims), seed);
}

std::vector<NamedTensor> adapter_tensors(const AdapterModel<float>& model) {
  std::vector<float> dims;
  for (Index d : model.dims()) dims.push_back(static_cast<float>(d));
  std::vector<NamedTensor> out{make_tensor("meta.adapter_dims", dims),
                               make_tensor("meta.frozen_prefix", {static_cast<float>(model.frozen_prefix())})};
  auto params = to_tensors(model.params());
  out.insert(out.end(), params.begin(), params.end());
  return out;
}

void write_adapter(const std::filesystem::path& path, const AdapterModel<float>& model) {
  write_checkpoint(path, adapter_tensors(model));
}

AdapterModel<float> read_adapter(const std::filesystem::path& path) {
  const auto tensors = read_checkpoint(path);
  std::vector<Index> dims;
  for (float d : find_tensor(tensors, "meta.adapter_dims").data) dims.push_back(static_cast<Index>(d));
  AdapterModel<float> model(dims, 0);
  load_tensors(model.params(), tensors);
  model.set_frozen_prefix(static_cast<int>(find_tensor(tensors, "meta.frozen_prefix").data.at(0)));
  return model;
}

template <typename S>
Vec<S> la_adjust(const Vec<S>& logits, std::span<const double> priors, double tau) {
  require(static_cast<Index>(priors.size()) == logits.size(), ErrorKind::DimensionMismatch,
          "prior count differs from logit count");
  Vec<S> out = logits;
  for (Index c = 0; c < logits.size(); ++c) {
    const double p = priors[static_cast<std::size_t>(c)];
    require(p > 0.0 && std::isfinite(p), ErrorKind::InvalidPrior, "class " + std::to_string(c) + " has zero prior");
    out[c] += static_cast<S>(tau * std::log(p));
  }
  return out;
}

template Vec<float> la_adjust<float>(const Vec<float>&, std::span<const double>, double);
template Vec<double> la_adjust<double>(const Vec<double>&, std::span<const double>, double);

std::vector<double> class_priors(std::span<const std::uint32_t> labels, Index num_classes) {
  require(!labels.empty(), ErrorKind::EmptyDataset, "cannot compute priors of an empty set");
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (auto y : labels) {
    require(y < num_classes, ErrorKind::DimensionMismatch, "label out of range");
    counts[y] += 1.0;
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    require(counts[c] > 0.0, ErrorKind::InvalidPrior, "class " + std::to_string(c) + " has no training samples");
    counts[c] /= static_cast<double>(labels.size());
  }
  return counts;
}

void TrainConfig::validate() const {
  require(epochs >= 1, ErrorKind::InvalidConfig, "epochs must be >= 1");
  require(batch >= 1, ErrorKind::InvalidConfig, "batch must be >= 1");
  require(lr > 0.0, ErrorKind::InvalidConfig, "lr must be positive");
  require(warmup_epochs >= 0, ErrorKind::InvalidConfig, "warmup_epochs must be >= 0");
}

std::string TrainHistory::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& e : epochs) j.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"accuracy", e.accuracy}});
  return j.dump(2) + "\n";
}

LabeledLatents train_split(const LatentDataset& dataset) {
  LabeledLatents out;
  out.x = dataset.stack([](const LatentRecord& r) { return r.split == Split::train; }, &out.labels);
  return out;
}

namespace {

TrainHistory train_loop(AdapterModel<float>& model, int start_layer, const Mat<float>& x,
                        const std::vector<std::uint32_t>& labels, const TrainConfig& cfg) {
  cfg.validate();
  require(x.cols() > 0, ErrorKind::EmptyDataset, "no training samples");
  const Index n = x.cols();
  const Index c = model.num_classes();

  Vec<float> log_prior_shift = Vec<float>::Zero(c);
  if (cfg.loss == LossKind::logit_adjusted) {
    const auto priors = class_priors(labels, c);
    log_prior_shift = la_adjust<float>(Vec<float>::Zero(c), priors, cfg.la_tau);
  }

  OptimizerConfig opt;
  opt.kind = cfg.optimizer;
  opt.lr = cfg.lr;
  opt.momentum = cfg.momentum;
  opt.weight_decay = cfg.weight_decay;
  Optimizer<float> optimizer(opt);

  const Index steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const auto warmup_steps = static_cast<double>(cfg.warmup_epochs * steps_per_epoch);
  std::uint64_t step = 0;

  TrainHistory history;
  std::vector<Index> order(static_cast<std::size_t>(n));
  AdapterModel<float>::Tape tape;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng(cfg.seed, {purpose_tag("adapter.shuffle"), static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), rng.engine());

    double loss_sum = 0.0;
    Index correct = 0;
    for (Index start = 0; start < n; start += cfg.batch) {
      const Index b = std::min<Index>(cfg.batch, n - start);
      Mat<float> xb(x.rows(), b);
      std::vector<std::uint32_t> yb(static_cast<std::size_t>(b));
      for (Index j = 0; j < b; ++j) {
        xb.col(j) = x.col(order[static_cast<std::size_t>(start + j)]);
        yb[static_cast<std::size_t>(j)] = labels[static_cast<std::size_t>(order[static_cast<std::size_t>(start + j)])];
      }
      Mat<float> logits = model.forward_from(start_layer, xb, &tape);
      for (Index j = 0; j < b; ++j) {
        Index arg = 0;
        logits.col(j).maxCoeff(&arg);
        if (arg == static_cast<Index>(yb[static_cast<std::size_t>(j)])) ++correct;
      }
      logits.colwise() += log_prior_shift;
      Mat<float> dlogits;
      const float loss = softmax_cross_entropy<float>(logits, yb, &dlogits);
      loss_sum += static_cast<double>(loss) * static_cast<double>(b);

      model.params().zero_grad();
      model.backward(tape, dlogits);
      const double scale = warmup_steps > 0 ? std::min(1.0, static_cast<double>(step + 1) / warmup_steps) : 1.0;
      optimizer.step(model.params(), scale);
      ++step;
    }
    history.epochs.push_back(
        {epoch + 1, loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)});
  }
  model.params().zero_grad();
  return history;
}

}  // namespace

TrainHistory train_stage1(AdapterModel<float>& model, const LatentDataset& dataset, const TrainConfig& cfg) {
  require(dataset.dim() == model.input_dim(), ErrorKind::DimensionMismatch,
          "dataset width " + std::to_string(dataset.dim()) + " differs from adapter input " +
              std::to_string(model.input_dim()));
  require(dataset.manifest.c == model.num_classes(), ErrorKind::DimensionMismatch,
          "dataset class count differs from adapter head");
  const auto train = train_split(dataset);
  require(train.size() > 0, ErrorKind::EmptyDataset, "train split is empty");
  model.set_frozen_prefix(0);
  return train_loop(model, 0, train.x, train.labels, cfg);
}

TrainHistory finetune_stage3(AdapterModel<float>& model, int l, const LabeledLatents& gt, const LabeledLatents& aug,
                             const TrainConfig& cfg) {
  const Index width = model.latent_dim(l);
  require(gt.size() == 0 || gt.x.rows() == width, ErrorKind::DimensionMismatch,
          "GT latents do not live in Z^(" + std::to_string(l) + ")");
  require(aug.size() == 0 || aug.x.rows() == width, ErrorKind::DimensionMismatch,
          "augmented latents do not live in Z^(" + std::to_string(l) + ")");
  require(static_cast<Index>(gt.labels.size()) == gt.size() && static_cast<Index>(aug.labels.size()) == aug.size(),
          ErrorKind::DimensionMismatch, "label count mismatch");

  Mat<float> x(width, gt.size() + aug.size());
  if (gt.size() > 0) x.leftCols(gt.size()) = gt.x;
  if (aug.size() > 0) x.rightCols(aug.size()) = aug.x;
  std::vector<std::uint32_t> labels = gt.labels;
  labels.insert(labels.end(), aug.labels.begin(), aug.labels.end());

  model.set_frozen_prefix(l);
  return train_loop(model, l, x, labels, cfg);
}

}  // namespace latentaug
