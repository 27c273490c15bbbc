// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include "latentaug/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace latentaug {

void NoiseSchedule::validate() const {
  require(sigma_min > 0.0 && sigma_min <= sigma_max && std::isfinite(sigma_max), ErrorKind::InvalidConfig,
          "noise schedule needs 0 < sigma_min <= sigma_max");
  require(sigma_data > 0.0 && std::isfinite(sigma_data), ErrorKind::InvalidConfig, "sigma_data must be positive");
}

double sigma_from_uniform(const NoiseSchedule& s, double u) {
  s.validate();
  const double lo = std::atan(s.sigma_min / s.sigma_data);
  const double hi = std::atan(s.sigma_max / s.sigma_data);
  const double sigma = s.sigma_data * std::tan(u * (hi - lo) + lo);
  // tan/atan round-off can step just outside the interval at the endpoints.
  return std::clamp(sigma, s.sigma_min, s.sigma_max);
}

double sample_sigma(const NoiseSchedule& schedule, Rng& rng) { return sigma_from_uniform(schedule, rng.uniform()); }

Preconditioning precondition(double sigma, double sigma_data) {
  const double total = sigma * sigma + sigma_data * sigma_data;
  const double root = std::sqrt(total);
  return {sigma_data * sigma_data / total, sigma * sigma_data / root, 1.0 / root};
}

double loss_weight(double sigma, double sigma_data) { return 1.0 / (sigma * sigma + sigma_data * sigma_data); }

double estimate_sigma_data(const Mat<float>& latents) {
  require(latents.size() > 0, ErrorKind::EmptyDataset, "cannot estimate sigma_data of an empty set");
  const Mat<double> d = latents.cast<double>();
  const double mean = d.mean();
  return std::sqrt((d.array() - mean).square().mean());
}

void DenoiserConfig::validate() const {
  require(input_dim >= 1, ErrorKind::InvalidConfig, "denoiser input width must be positive");
  require(!hidden.empty(), ErrorKind::InvalidConfig, "denoiser needs at least one residual block");
  for (Index w : hidden)
    require(w == hidden.front(), ErrorKind::InvalidConfig, "residual blocks must share one width");
  require(hidden.front() >= 1, ErrorKind::InvalidConfig, "denoiser width must be positive");
  require(time_dim >= 2 && time_dim % 2 == 0, ErrorKind::InvalidConfig, "time embedding dim must be even");
  require(dropout >= 0.0 && dropout < 1.0, ErrorKind::InvalidConfig, "dropout must lie in [0, 1)");
  condition.validate();
  schedule.validate();
  require(schedule.sigma_min < schedule.sigma_max, ErrorKind::InvalidConfig, "sigma_min must be below sigma_max");
}

template <typename S>
DenoiserModel<S>::DenoiserModel(const DenoiserConfig& config) : config_(config) {
  config_.validate();
  // Checkpoints store the schedule in binary32; keep the live values representable.
  auto& s = config_.schedule;
  s.sigma_min = static_cast<float>(s.sigma_min);
  s.sigma_max = static_cast<float>(s.sigma_max);
  s.sigma_data = static_cast<float>(s.sigma_data);
  Rng rng(config_.seed, {purpose_tag("denoiser.init")});
  condition_ = ConditionSource<S>(config_.condition, params_, rng);
  time_ = TimeEmbedding<S>(config_.time_dim, config_.seed);
  const Index w = config_.width();
  const Index cw = config_.condition.width;
  mix_ = AffineLayer::create(params_, "den.mix", cw + config_.time_dim, cw, rng);
  input_ = AffineLayer::create(params_, "den.input", config_.input_dim, w, rng);
  for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
    const std::string name = "den.block" + std::to_string(i);
    Block b;
    b.inject = AffineLayer::create(params_, name + ".inject", cw, w, rng);
    b.fc1 = AffineLayer::create(params_, name + ".fc1", w, w, rng);
    b.fc2 = AffineLayer::create(params_, name + ".fc2", w, w, rng);
    blocks_.push_back(b);
  }
  output_ = AffineLayer::create(params_, "den.output", w, config_.input_dim, rng);
  // F starts at zero so D starts as the skip path.
  params_.value(output_.weight).setZero();
}

template <typename S>
void DenoiserModel<S>::set_sigma_data(double sigma_data) {
  config_.schedule.sigma_data = static_cast<float>(sigma_data);
  config_.schedule.validate();
}

template <typename S>
void DenoiserModel<S>::set_time_frequencies(Vec<S> frequencies) {
  require(2 * frequencies.size() == config_.time_dim, ErrorKind::DimensionMismatch, "time frequency count mismatch");
  time_ = TimeEmbedding<S>(std::move(frequencies));
}

template <typename S>
Mat<S> DenoiserModel<S>::network(const Mat<S>& scaled_x, std::span<const S> sigmas, const Mat<S>& conditions,
                                 Tape* tape, Rng* dropout_rng) const {
  const Index n = scaled_x.cols();
  require(scaled_x.rows() == config_.input_dim, ErrorKind::DimensionMismatch, "denoiser input width mismatch");
  require(conditions.rows() == config_.condition.width && conditions.cols() == n &&
              static_cast<Index>(sigmas.size()) == n,
          ErrorKind::DimensionMismatch, "denoiser batch shapes disagree");

  Mat<S> time = time_.batch(sigmas);
  Mat<S> cat(conditions.rows() + time.rows(), n);
  cat.topRows(conditions.rows()) = conditions;
  cat.bottomRows(time.rows()) = time;
  const Mat<S> e = mix_.forward(params_, cat, Activation::relu, tape ? &tape->mix : nullptr);
  Mat<S> h = input_.forward(params_, scaled_x, Activation::none, tape ? &tape->input : nullptr);
  if (tape) {
    tape->time = std::move(time);
    tape->blocks.assign(blocks_.size(), {});
  }
  const bool drop = config_.dropout > 0.0 && dropout_rng != nullptr;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    BlockTape* bt = tape ? &tape->blocks[i] : nullptr;
    Mat<S> entry = h + blocks_[i].inject.forward(params_, e, Activation::none, bt ? &bt->inject : nullptr);
    Mat<S> z = blocks_[i].fc1.forward(params_, Mat<S>(entry.cwiseMax(S(0))), Activation::relu, bt ? &bt->fc1 : nullptr);
    if (drop) {
      const double keep = 1.0 - config_.dropout;
      Mat<S> mask(z.rows(), z.cols());
      for (Index k = 0; k < mask.size(); ++k)
        mask.data()[k] = dropout_rng->bernoulli(keep) ? static_cast<S>(1.0 / keep) : S(0);
      z = z.cwiseProduct(mask);
      if (bt) bt->dropout_mask = std::move(mask);
    }
    h = entry + blocks_[i].fc2.forward(params_, z, Activation::none, bt ? &bt->fc2 : nullptr);
    if (bt) bt->entry = std::move(entry);
  }
  Mat<S> out = output_.forward(params_, Mat<S>(h.cwiseMax(S(0))), Activation::none, tape ? &tape->output : nullptr);
  if (tape) tape->final_hidden = std::move(h);
  return out;
}

template <typename S>
Mat<S> DenoiserModel<S>::denoise_with(const Mat<S>& x, std::span<const S> sigmas, const Mat<S>& conditions) const {
  ensure_finite(x, "denoiser input");
  const Index n = x.cols();
  Mat<S> scaled(x.rows(), n);
  Vec<S> skip(n), out_scale(n);
  for (Index j = 0; j < n; ++j) {
    const auto p = precondition(static_cast<double>(sigmas[j]), config_.schedule.sigma_data);
    scaled.col(j) = x.col(j) * static_cast<S>(p.c_in);
    skip[j] = static_cast<S>(p.c_skip);
    out_scale[j] = static_cast<S>(p.c_out);
  }
  const Mat<S> f = network(scaled, sigmas, conditions, nullptr);
  Mat<S> d = x * skip.asDiagonal();
  d.noalias() += f * out_scale.asDiagonal();
  return d;
}

template <typename S>
Mat<S> DenoiserModel<S>::denoise(const Mat<S>& x, std::span<const S> sigmas, std::span<const ConditionDraw> draws,
                                 Tape* tape, Rng* dropout_rng) const {
  ensure_finite(x, "denoiser input");
  const Index n = x.cols();
  require(static_cast<Index>(draws.size()) == n, ErrorKind::DimensionMismatch, "one condition draw per column");
  const Mat<S> conditions = condition_.forward(params_, draws, tape ? &tape->condition : nullptr);
  Mat<S> scaled(x.rows(), n);
  Vec<S> skip(n), out_scale(n);
  for (Index j = 0; j < n; ++j) {
    const auto p = precondition(static_cast<double>(sigmas[j]), config_.schedule.sigma_data);
    scaled.col(j) = x.col(j) * static_cast<S>(p.c_in);
    skip[j] = static_cast<S>(p.c_skip);
    out_scale[j] = static_cast<S>(p.c_out);
  }
  if (tape) tape->sigmas.assign(sigmas.begin(), sigmas.end());
  const Mat<S> f = network(scaled, sigmas, conditions, tape, dropout_rng);
  Mat<S> d = x * skip.asDiagonal();
  d.noalias() += f * out_scale.asDiagonal();
  ensure_finite(d, "denoiser output");
  return d;
}

template <typename S>
void DenoiserModel<S>::backward(const Tape& tape, const Mat<S>& ddenoised) {
  const Index n = ddenoised.cols();
  Vec<S> out_scale(n);
  for (Index j = 0; j < n; ++j)
    out_scale[j] = static_cast<S>(precondition(static_cast<double>(tape.sigmas[j]), config_.schedule.sigma_data).c_out);
  const Mat<S> df = ddenoised * out_scale.asDiagonal();

  Mat<S> dh = output_.backward(params_, tape.output, df, true);
  dh = (tape.final_hidden.array() > S(0)).select(dh, S(0));
  Mat<S> de = Mat<S>::Zero(config_.condition.width, n);
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    const auto& bt = tape.blocks[i];
    Mat<S> dz = blocks_[i].fc2.backward(params_, bt.fc2, dh, true);
    if (bt.dropout_mask.size() > 0) dz = dz.cwiseProduct(bt.dropout_mask);
    Mat<S> drelu = blocks_[i].fc1.backward(params_, bt.fc1, dz, true);
    Mat<S> dentry = dh + Mat<S>((bt.entry.array() > S(0)).select(drelu, S(0)));
    de += blocks_[i].inject.backward(params_, bt.inject, dentry, true);
    dh = std::move(dentry);
  }
  input_.backward(params_, tape.input, dh, false);
  const Mat<S> dcat = mix_.backward(params_, tape.mix, de, true);
  condition_.backward(params_, tape.condition, dcat.topRows(config_.condition.width));
}

template <typename S>
S diffusion_loss(DenoiserModel<S>& model, const DiffusionBatch<S>& batch, bool with_grad, Rng* dropout_rng) {
  const Index n = batch.clean.cols();
  require(n > 0, ErrorKind::EmptyInput, "empty diffusion batch");
  ensure_finite(batch.clean, "clean latents");
  const Vec<S> sig = Eigen::Map<const Vec<S>>(batch.sigmas.data(), n);
  const Mat<S> noisy = batch.clean + batch.noise * sig.asDiagonal();
  typename DenoiserModel<S>::Tape tape;
  const Mat<S> d = model.denoise(noisy, batch.sigmas, batch.draws, with_grad ? &tape : nullptr, dropout_rng);
  const Mat<S> diff = d - batch.clean;
  const double sd = model.schedule().sigma_data;
  const auto m = static_cast<double>(batch.clean.rows());
  Vec<S> w(n);
  S loss = 0;
  for (Index j = 0; j < n; ++j) {
    w[j] = static_cast<S>(loss_weight(static_cast<double>(batch.sigmas[j]), sd));
    loss += w[j] * diff.col(j).squaredNorm();
  }
  loss /= static_cast<S>(m * static_cast<double>(n));
  if (!std::isfinite(static_cast<double>(loss))) fail(ErrorKind::NumericalError, "non-finite diffusion loss");
  if (with_grad) {
    const Vec<S> scale = w * static_cast<S>(2.0 / (m * static_cast<double>(n)));
    model.backward(tape, diff * scale.asDiagonal());
  }
  return loss;
}

template <typename S>
S diffusion_loss(DenoiserModel<S>& model, const Vec<S>& x0, const ConditionInput& input, double cond_dropout,
                 Rng& rng, bool with_grad) {
  DiffusionBatch<S> batch;
  batch.clean = x0;
  batch.sigmas = {static_cast<S>(sample_sigma(model.schedule(), rng))};
  batch.draws = {rng.bernoulli(cond_dropout) ? model.condition().null_draw() : model.condition().draw(input, rng)};
  batch.noise = rng.normal_matrix<S>(x0.size(), 1);
  return diffusion_loss(model, batch, with_grad);
}

template class DenoiserModel<float>;
template class DenoiserModel<double>;
template float diffusion_loss<float>(DenoiserModel<float>&, const DiffusionBatch<float>&, bool, Rng*);
template double diffusion_loss<double>(DenoiserModel<double>&, const DiffusionBatch<double>&, bool, Rng*);
template float diffusion_loss<float>(DenoiserModel<float>&, const Vec<float>&, const ConditionInput&, double, Rng&,
                                     bool);
template double diffusion_loss<double>(DenoiserModel<double>&, const Vec<double>&, const ConditionInput&, double,
                                       Rng&, bool);

void DiffTrainConfig::validate() const {
  require(iterations >= 1 && batch >= 1 && lr > 0.0, ErrorKind::InvalidConfig,
          "diffusion iterations, batch and lr must be positive");
  require(weight_decay >= 0.0, ErrorKind::InvalidConfig, "weight decay must be nonnegative");
  require(cond_dropout >= 0.0 && cond_dropout <= 1.0, ErrorKind::InvalidConfig, "cond_dropout must lie in [0, 1]");
  require(log_every >= 1, ErrorKind::InvalidConfig, "log_every must be positive");
}

TrainedDenoiser train_diffusion(const DiffusionData& data, DenoiserConfig config, const std::vector<Mat<float>>& pools,
                                const Mat<float>& semantic, const DiffTrainConfig& cfg) {
  cfg.validate();
  const Index n = data.latents.cols();
  require(n > 0, ErrorKind::EmptyDataset, "no latents to train the denoiser on");
  require(static_cast<Index>(data.labels.size()) == n, ErrorKind::DimensionMismatch, "one label per latent");
  ensure_finite(data.latents, "training latents");
  if (config.input_dim == 0) config.input_dim = data.latents.rows();
  require(config.input_dim == data.latents.rows(), ErrorKind::DimensionMismatch, "latent width differs from config");
  if (config.schedule.sigma_data <= 0.0) {
    config.schedule.sigma_data = estimate_sigma_data(data.latents);
    require(config.schedule.sigma_data > 0.0, ErrorKind::InvalidConfig,
            "training latents have zero spread; set sigma_data explicitly");
  }
  if (config.condition.reference_dim == 0) {
    if (config.condition.mode == ConditionMode::class_plus_subdomain_latent) config.condition.reference_dim = config.input_dim;
    if (config.condition.mode == ConditionMode::class_plus_semantic_vector) config.condition.reference_dim = semantic.rows();
  }

  TrainedDenoiser out;
  auto& model = out.model;
  model = DenoiserModel<float>(config);
  if (config.condition.mode == ConditionMode::class_plus_subdomain_latent) model.condition().set_subdomain_pool(pools);
  if (config.condition.mode == ConditionMode::class_plus_semantic_vector) model.condition().set_semantic_vectors(semantic);

  OptimizerConfig opt;
  opt.kind = OptimizerKind::adamw;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  Optimizer<float> optimizer(opt);
  Ema<float> ema(model.params(), cfg.ema_max_decay);

  DiffusionBatch<float> batch;
  batch.clean.resize(config.input_dim, cfg.batch);
  double window = 0.0;
  for (std::int64_t step = 0; step < cfg.iterations; ++step) {
    Rng rng(cfg.seed, {purpose_tag("diffusion.step"), static_cast<std::uint64_t>(step)});
    batch.sigmas.clear();
    batch.draws.clear();
    for (int j = 0; j < cfg.batch; ++j) {
      const auto idx = rng.index(static_cast<std::size_t>(n));
      batch.clean.col(j) = data.latents.col(static_cast<Index>(idx));
      batch.sigmas.push_back(static_cast<float>(sample_sigma(model.schedule(), rng)));
      const bool dropped = rng.bernoulli(cfg.cond_dropout);
      batch.draws.push_back(dropped ? model.condition().null_draw() : model.condition().draw(data.labels[idx], rng));
      ++out.stats.conditions_seen;
      if (dropped) ++out.stats.nulls_seen;
    }
    batch.noise = rng.normal_matrix<float>(config.input_dim, cfg.batch);

    model.params().zero_grad();
    window += static_cast<double>(diffusion_loss(model, batch, true, &rng));
    optimizer.step(model.params());
    ema.update(model.params());
    if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.iterations) {
      const auto len = (step + 1) % cfg.log_every == 0 ? cfg.log_every : (step + 1) % cfg.log_every;
      out.stats.loss_history.push_back(window / static_cast<double>(len));
      window = 0.0;
    }
  }
  ema.copy_to(model.params());
  model.params().zero_grad();
  return out;
}

namespace {

std::vector<float> matrix_payload(const Mat<float>& m) {
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return out;
}

NamedTensor matrix_tensor(std::string name, const Mat<float>& m) {
  return {std::move(name), {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
          matrix_payload(m)};
}

Mat<float> tensor_matrix(const NamedTensor& t) {
  require(t.dims.size() == 2, ErrorKind::FormatError, "tensor " + t.name + " is not a matrix");
  Mat<float> m(t.dims[0], t.dims[1]);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = t.data[static_cast<std::size_t>(i * m.cols() + j)];
  return m;
}

}  // namespace

std::vector<NamedTensor> denoiser_tensors(const DenoiserModel<float>& model) {
  const auto& c = model.config();
  const auto& s = c.schedule;
  std::vector<NamedTensor> out;
  out.push_back(make_tensor("meta.schedule", {static_cast<float>(s.sigma_min), static_cast<float>(s.sigma_max),
                                              static_cast<float>(s.sigma_data)}));
  std::vector<float> widths{static_cast<float>(c.input_dim),
                            static_cast<float>(c.time_dim),
                            static_cast<float>(c.condition.num_classes),
                            static_cast<float>(c.condition.embed_dim),
                            static_cast<float>(c.condition.width),
                            static_cast<float>(c.condition.reference_dim),
                            static_cast<float>(static_cast<int>(c.condition.mode)),
                            static_cast<float>(static_cast<int>(c.condition.semantic_key)),
                            static_cast<float>(c.dropout)};
  out.push_back(make_tensor("meta.widths", widths));
  std::vector<float> hidden;
  for (Index h : c.hidden) hidden.push_back(static_cast<float>(h));
  out.push_back(make_tensor("meta.hidden", hidden));
  const auto& f = model.time_embedding().frequencies();
  out.push_back(make_tensor("meta.time_frequencies", std::vector<float>(f.data(), f.data() + f.size())));
  const auto& pools = model.condition().subdomain_pool();
  out.push_back(make_tensor("meta.pool_count", {static_cast<float>(pools.size())}));
  for (std::size_t k = 0; k < pools.size(); ++k) out.push_back(matrix_tensor("pool." + std::to_string(k), pools[k]));
  out.push_back(matrix_tensor("semantic", model.condition().semantic_vectors()));
  auto params = to_tensors(model.params());
  out.insert(out.end(), params.begin(), params.end());
  return out;
}

void write_denoiser(const std::filesystem::path& path, const DenoiserModel<float>& model) {
  write_checkpoint(path, denoiser_tensors(model));
}

DenoiserModel<float> read_denoiser(const std::filesystem::path& path) {
  const auto tensors = read_checkpoint(path);
  const auto& sched = find_tensor(tensors, "meta.schedule").data;
  const auto& widths = find_tensor(tensors, "meta.widths").data;
  require(sched.size() == 3 && widths.size() == 9, ErrorKind::FormatError, "malformed denoiser metadata");
  DenoiserConfig c;
  c.schedule = {sched[0], sched[1], sched[2]};
  c.input_dim = static_cast<Index>(widths[0]);
  c.time_dim = static_cast<Index>(widths[1]);
  c.condition.num_classes = static_cast<Index>(widths[2]);
  c.condition.embed_dim = static_cast<Index>(widths[3]);
  c.condition.width = static_cast<Index>(widths[4]);
  c.condition.reference_dim = static_cast<Index>(widths[5]);
  c.condition.mode = static_cast<ConditionMode>(static_cast<int>(widths[6]));
  c.condition.semantic_key = static_cast<SemanticKey>(static_cast<int>(widths[7]));
  c.dropout = widths[8];
  c.hidden.clear();
  for (float h : find_tensor(tensors, "meta.hidden").data) c.hidden.push_back(static_cast<Index>(h));
  DenoiserModel<float> model(c);
  load_tensors(model.params(), tensors);
  const auto& freqs = find_tensor(tensors, "meta.time_frequencies").data;
  require(static_cast<Index>(freqs.size()) * 2 == c.time_dim, ErrorKind::FormatError, "time frequency count mismatch");
  const auto pool_count = static_cast<std::size_t>(find_tensor(tensors, "meta.pool_count").data.at(0));
  std::vector<Mat<float>> pools;
  for (std::size_t k = 0; k < pool_count; ++k) pools.push_back(tensor_matrix(find_tensor(tensors, "pool." + std::to_string(k))));
  if (!pools.empty()) model.condition().set_subdomain_pool(std::move(pools));
  const Mat<float> semantic = tensor_matrix(find_tensor(tensors, "semantic"));
  if (semantic.size() > 0) model.condition().set_semantic_vectors(semantic);
  model.set_time_frequencies(Vec<float>(Eigen::Map<const Vec<float>>(freqs.data(), static_cast<Index>(freqs.size()))));
  return model;
}

}  // namespace latentaug
