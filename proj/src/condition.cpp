// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include "latentaug/condition.hpp"

#include <cmath>
#include <numbers>

namespace latentaug {

template <typename S>
TimeEmbedding<S>::TimeEmbedding(Index dim, std::uint64_t seed) {
  require(dim >= 2 && dim % 2 == 0, ErrorKind::InvalidConfig, "time embedding dim must be even and >= 2");
  Rng rng(seed, {purpose_tag("time.frequencies")});
  freqs_ = rng.normal_matrix<S>(dim / 2, 1);
}

template <typename S>
Vec<S> TimeEmbedding<S>::operator()(double sigma) const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) fail(ErrorKind::InvalidSigma, "sigma must be positive and finite");
  const double c_noise = std::log(sigma) / 4.0;
  const Index half = freqs_.size();
  Vec<S> out(2 * half);
  for (Index i = 0; i < half; ++i) {
    const double arg = 2.0 * std::numbers::pi * static_cast<double>(freqs_[i]) * c_noise;
    out[i] = static_cast<S>(std::sin(arg));
    out[half + i] = static_cast<S>(std::cos(arg));
  }
  return out;
}

template <typename S>
Mat<S> TimeEmbedding<S>::batch(std::span<const S> sigmas) const {
  Mat<S> out(dim(), static_cast<Index>(sigmas.size()));
  for (std::size_t j = 0; j < sigmas.size(); ++j) out.col(static_cast<Index>(j)) = (*this)(static_cast<double>(sigmas[j]));
  return out;
}

void ConditionConfig::validate() const {
  require(num_classes >= 1 && embed_dim >= 1 && width >= 1, ErrorKind::InvalidConfig,
          "condition dimensions must be positive");
  if (mode != ConditionMode::class_only)
    require(reference_dim >= 1, ErrorKind::InvalidConfig, "condition mode needs a reference width");
}

template <typename S>
ConditionSource<S>::ConditionSource(const ConditionConfig& config, ParamStore<S>& store, Rng& rng) : config_(config) {
  config_.validate();
  class_table_ = store.add("cond.class_table", rng.normal_matrix<S>(config_.embed_dim, config_.num_classes));
  projection_ = AffineLayer::create(store, "cond.projection", config_.concat_dim(), config_.width, rng);
  null_ = store.add("cond.null", Mat<S>(rng.normal_matrix<S>(config_.width, 1) * S(0.1)));
}

template <typename S>
void ConditionSource<S>::set_subdomain_pool(std::vector<Mat<S>> pools) {
  for (const auto& p : pools)
    require(p.cols() == 0 || p.rows() == config_.reference_dim, ErrorKind::DimensionMismatch,
            "subdomain pool width differs from the condition reference width");
  pools_ = std::move(pools);
}

template <typename S>
void ConditionSource<S>::set_semantic_vectors(Mat<S> table) {
  require(table.cols() == 0 || table.rows() == config_.reference_dim, ErrorKind::DimensionMismatch,
          "semantic vector width differs from the condition reference width");
  semantic_ = std::move(table);
}

template <typename S>
ConditionDraw ConditionSource<S>::draw(const ConditionInput& input, Rng& rng) const {
  require(input.class_id < config_.num_classes, ErrorKind::InvalidConfig, "class id out of range");
  ConditionDraw d;
  d.class_id = input.class_id;
  switch (config_.mode) {
    case ConditionMode::class_only:
      break;
    case ConditionMode::class_plus_subdomain_latent: {
      if (input.subdomain_id >= pools_.size() || pools_[input.subdomain_id].cols() == 0)
        fail(ErrorKind::EmptySubdomainPool, "no reference latents for subdomain " + std::to_string(input.subdomain_id));
      d.reference_group = input.subdomain_id;
      d.reference_index = static_cast<Index>(rng.index(static_cast<std::size_t>(pools_[input.subdomain_id].cols())));
      break;
    }
    case ConditionMode::class_plus_semantic_vector: {
      const std::uint32_t key = config_.semantic_key == SemanticKey::by_class ? input.class_id : input.subdomain_id;
      if (key >= semantic_.cols())
        fail(ErrorKind::MissingCondition, "no semantic vector for key " + std::to_string(key));
      d.reference_index = key;
      break;
    }
  }
  return d;
}

template <typename S>
ConditionDraw ConditionSource<S>::null_draw() const {
  ConditionDraw d;
  d.is_null = true;
  return d;
}

template <typename S>
Vec<S> ConditionSource<S>::reference(const ConditionDraw& d) const {
  switch (config_.mode) {
    case ConditionMode::class_plus_subdomain_latent:
      return pools_.at(d.reference_group).col(d.reference_index);
    case ConditionMode::class_plus_semantic_vector:
      return semantic_.col(d.reference_index);
    case ConditionMode::class_only:
      break;
  }
  return {};
}

template <typename S>
Mat<S> ConditionSource<S>::forward(const ParamStore<S>& store, std::span<const ConditionDraw> draws,
                                   Tape* tape) const {
  const auto n = static_cast<Index>(draws.size());
  Mat<S> out(config_.width, n);
  std::vector<Index> live;
  for (Index j = 0; j < n; ++j) {
    if (draws[j].is_null) {
      out.col(j) = store.value(null_).col(0);
    } else {
      live.push_back(j);
    }
  }
  AffineTape<S> proj_tape;
  if (!live.empty()) {
    const auto& table = store.value(class_table_);
    Mat<S> concat(config_.concat_dim(), static_cast<Index>(live.size()));
    for (std::size_t i = 0; i < live.size(); ++i) {
      const auto& d = draws[live[i]];
      require(d.class_id < table.cols(), ErrorKind::InvalidConfig, "class id out of range");
      concat.col(static_cast<Index>(i)).head(config_.embed_dim) = table.col(d.class_id);
      if (config_.mode != ConditionMode::class_only)
        concat.col(static_cast<Index>(i)).tail(config_.reference_dim) = reference(d);
    }
    const Mat<S> projected = projection_.forward(store, concat, Activation::none, tape ? &proj_tape : nullptr);
    for (std::size_t i = 0; i < live.size(); ++i) out.col(live[i]) = projected.col(static_cast<Index>(i));
  }
  if (tape) {
    tape->draws.assign(draws.begin(), draws.end());
    tape->projection = std::move(proj_tape);
    tape->live_columns = std::move(live);
  }
  return out;
}

template <typename S>
void ConditionSource<S>::backward(ParamStore<S>& store, const Tape& tape, const Mat<S>& dcond) const {
  const auto n = static_cast<Index>(tape.draws.size());
  auto& null_param = store[null_];
  for (Index j = 0; j < n; ++j)
    if (tape.draws[j].is_null && null_param.trainable) null_param.grad.col(0) += dcond.col(j);
  if (tape.live_columns.empty()) return;
  Mat<S> dlive(config_.width, static_cast<Index>(tape.live_columns.size()));
  for (std::size_t i = 0; i < tape.live_columns.size(); ++i)
    dlive.col(static_cast<Index>(i)) = dcond.col(tape.live_columns[i]);
  const Mat<S> dconcat = projection_.backward(store, tape.projection, dlive, true);
  auto& table = store[class_table_];
  if (!table.trainable) return;
  for (std::size_t i = 0; i < tape.live_columns.size(); ++i) {
    const auto& d = tape.draws[tape.live_columns[i]];
    table.grad.col(d.class_id) += dconcat.col(static_cast<Index>(i)).head(config_.embed_dim);
  }
}

template <typename S>
ConditionVector build_condition(const ConditionSource<S>& source, const ParamStore<S>& store,
                                const ConditionInput& input, Rng& rng) {
  const ConditionDraw d = source.draw(input, rng);
  const Mat<S> u = source.forward(store, std::span<const ConditionDraw>(&d, 1));
  ensure_finite(u, "condition vector");
  return {u.col(0).template cast<float>(), false};
}

template <typename S>
ConditionVector drop_condition(const ConditionVector& cond, double p, const ConditionSource<S>& source,
                               const ParamStore<S>& store, Rng& rng) {
  if (rng.bernoulli(p)) return {store.value(source.null_index()).col(0).template cast<float>(), true};
  return cond;
}

#define LATENTAUG_INSTANTIATE(S)                                                                                   \
  template class TimeEmbedding<S>;                                                                                 \
  template class ConditionSource<S>;                                                                               \
  template ConditionVector build_condition<S>(const ConditionSource<S>&, const ParamStore<S>&,                      \
                                              const ConditionInput&, Rng&);                                        \
  template ConditionVector drop_condition<S>(const ConditionVector&, double, const ConditionSource<S>&,            \
                                             const ParamStore<S>&, Rng&);

LATENTAUG_INSTANTIATE(float)
LATENTAUG_INSTANTIATE(double)

#undef LATENTAUG_INSTANTIATE

}  // namespace latentaug
