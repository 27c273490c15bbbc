// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include "latentaug/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace latentaug {

void SamplerConfig::validate() const {
  require(steps >= 1, ErrorKind::InvalidConfig, "sampler needs at least one step");
  require(cfg_scale >= 0.0 && std::isfinite(cfg_scale), ErrorKind::InvalidConfig, "cfg_scale must be >= 0");
  require(rho > 0.0, ErrorKind::InvalidConfig, "rho must be positive");
  require(eta >= 0.0 && s_noise >= 0.0, ErrorKind::InvalidConfig, "eta and s_noise must be >= 0");
}

std::vector<double> karras_sigmas(int n, double sigma_min, double sigma_max, double rho) {
  require(n >= 1, ErrorKind::InvalidConfig, "karras_sigmas needs n >= 1");
  require(sigma_min > 0.0 && sigma_min <= sigma_max && rho > 0.0, ErrorKind::InvalidConfig, "invalid sigma range");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  if (n == 1) {
    out = {sigma_max, 0.0};
    return out;
  }
  const double lo = std::pow(sigma_min, 1.0 / rho);
  const double hi = std::pow(sigma_max, 1.0 / rho);
  for (int i = 0; i < n; ++i) {
    const double ramp = static_cast<double>(i) / static_cast<double>(n - 1);
    out.push_back(std::pow(hi + ramp * (lo - hi), rho));
  }
  out.front() = sigma_max;
  out[static_cast<std::size_t>(n - 1)] = sigma_min;
  out.push_back(0.0);
  return out;
}

template <typename S>
Mat<S> cfg_combine(const Mat<S>& d_cond, const Mat<S>& d_uncond, double scale) {
  require(d_cond.rows() == d_uncond.rows() && d_cond.cols() == d_uncond.cols(), ErrorKind::DimensionMismatch,
          "cfg_combine width mismatch");
  if (scale == 1.0) return d_cond;
  if (scale == 0.0) return d_uncond;
  return d_uncond + static_cast<S>(scale) * (d_cond - d_uncond);
}

template Mat<float> cfg_combine<float>(const Mat<float>&, const Mat<float>&, double);
template Mat<double> cfg_combine<double>(const Mat<double>&, const Mat<double>&, double);

namespace {

struct AncestralStep {
  double down = 0.0;
  double up = 0.0;
};

AncestralStep ancestral_step(double from, double to, double eta) {
  if (to <= 0.0 || eta == 0.0) return {to, 0.0};
  const double up = std::min(to, eta * std::sqrt(to * to * (from * from - to * to) / (from * from)));
  return {std::sqrt(to * to - up * up), up};
}

Mat<float> noise_like(const Mat<float>& x, std::span<Rng> streams) {
  Mat<float> out(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j)
    for (Index i = 0; i < x.rows(); ++i) out(i, j) = static_cast<float>(streams[static_cast<std::size_t>(j)].normal());
  return out;
}

void check_state(const Mat<float>& x, int step) {
  if (!x.allFinite()) fail(ErrorKind::NumericalError, "sampler state became non-finite at step " + std::to_string(step));
}

}  // namespace

Mat<float> integrate(const DenoiseFn<float>& denoise, Mat<float> x, const std::vector<double>& sigmas,
                     const SamplerConfig& cfg, std::span<Rng> streams, const StepObserver& observer) {
  require(sigmas.size() >= 2, ErrorKind::InvalidConfig, "need at least one sampling step");
  require(static_cast<Index>(streams.size()) == x.cols(), ErrorKind::DimensionMismatch, "one noise stream per column");
  const int steps = static_cast<int>(sigmas.size()) - 1;
  if (observer) observer(0, x);
  for (int i = 0; i < steps; ++i) {
    const double sigma = sigmas[static_cast<std::size_t>(i)];
    const double next = sigmas[static_cast<std::size_t>(i) + 1];
    const Mat<float> denoised = denoise(x, sigma);
    check_state(denoised, i);
    switch (cfg.integrator) {
      case Integrator::euler: {
        if (next == 0.0) {
          x = denoised;
        } else {
          x += static_cast<float>((next - sigma) / sigma) * (x - denoised);
        }
        break;
      }
      case Integrator::euler_ancestral: {
        const auto [down, up] = ancestral_step(sigma, next, cfg.eta);
        if (down == 0.0) {
          x = denoised;
        } else {
          x += static_cast<float>((down - sigma) / sigma) * (x - denoised);
        }
        if (next > 0.0 && up > 0.0) x += static_cast<float>(cfg.s_noise * up) * noise_like(x, streams);
        break;
      }
      case Integrator::dpmpp_sde: {
        if (next == 0.0) {
          x = denoised;
          break;
        }
        // Two-stage DPM-Solver++ SDE with midpoint r = 1/2 in t = -ln(sigma).
        const double r = 0.5;
        const double t = -std::log(sigma);
        const double t_next = -std::log(next);
        const double h = t_next - t;
        const double s = t + h * r;
        const double sigma_s = std::exp(-s);
        const double fac = 1.0 / (2.0 * r);

        const auto st1 = ancestral_step(sigma, sigma_s, cfg.eta);
        const double s_ = -std::log(st1.down);
        Mat<float> x2 = static_cast<float>(st1.down / sigma) * x - static_cast<float>(std::expm1(t - s_)) * denoised;
        if (st1.up > 0.0) x2 += static_cast<float>(cfg.s_noise * st1.up) * noise_like(x, streams);
        check_state(x2, i);
        const Mat<float> denoised2 = denoise(x2, sigma_s);
        check_state(denoised2, i);

        const auto st2 = ancestral_step(sigma, next, cfg.eta);
        const double t_next_ = -std::log(st2.down);
        const Mat<float> mixed = static_cast<float>(1.0 - fac) * denoised + static_cast<float>(fac) * denoised2;
        x = static_cast<float>(st2.down / sigma) * x - static_cast<float>(std::expm1(t - t_next_)) * mixed;
        if (st2.up > 0.0) x += static_cast<float>(cfg.s_noise * st2.up) * noise_like(x, streams);
        break;
      }
    }
    check_state(x, i);
    if (observer) observer(i + 1, x);
  }
  return x;
}

DenoiseFn<float> guided_denoiser(const DenoiserModel<float>& model, std::vector<ConditionDraw> draws, double scale) {
  const auto& source = model.condition();
  const Mat<float> cond = source.forward(model.params(), draws);
  std::vector<ConditionDraw> nulls(draws.size(), source.null_draw());
  const Mat<float> uncond = source.forward(model.params(), nulls);
  return [&model, cond, uncond, scale](const Mat<float>& x, double sigma) -> Mat<float> {
    const std::vector<float> sig(static_cast<std::size_t>(x.cols()), static_cast<float>(sigma));
    if (scale == 1.0) return model.denoise_with(x, sig, cond);
    if (scale == 0.0) return model.denoise_with(x, sig, uncond);
    return cfg_combine<float>(model.denoise_with(x, sig, cond), model.denoise_with(x, sig, uncond), scale);
  };
}

Vec<float> sample_one(const DenoiserModel<float>& model, const ConditionInput& input, const SamplerConfig& cfg,
                      Rng& rng) {
  cfg.validate();
  const auto& sched = model.schedule();
  const auto sigmas = karras_sigmas(cfg.steps, sched.sigma_min, sched.sigma_max, cfg.rho);
  std::vector<ConditionDraw> draws{model.condition().draw(input, rng)};
  Mat<float> x = static_cast<float>(sigmas.front()) * rng.normal_matrix<float>(model.config().input_dim, 1);
  std::span<Rng> streams(&rng, 1);
  return integrate(guided_denoiser(model, std::move(draws), cfg.cfg_scale), std::move(x), sigmas, cfg, streams).col(0);
}

void AugmentationSet::append(const AugmentationSet& other) {
  if (other.size() == 0) return;
  if (size() == 0) {
    vectors = other.vectors;
  } else {
    require(other.vectors.rows() == vectors.rows(), ErrorKind::DimensionMismatch, "augmentation widths differ");
    Mat<float> joined(vectors.rows(), size() + other.size());
    joined << vectors, other.vectors;
    vectors = std::move(joined);
  }
  class_ids.insert(class_ids.end(), other.class_ids.begin(), other.class_ids.end());
  subdomain_ids.insert(subdomain_ids.end(), other.subdomain_ids.begin(), other.subdomain_ids.end());
}

LabeledLatents AugmentationSet::labeled() const { return {vectors, class_ids}; }

LatentDataset AugmentationSet::to_dataset(const DatasetManifest& like) const {
  DatasetManifest mf = like;
  mf.m = static_cast<std::uint32_t>(vectors.rows());
  mf.source_tag = provenance;
  std::vector<LatentRecord> records;
  for (Index j = 0; j < size(); ++j)
    records.push_back({vectors.col(j), class_ids[static_cast<std::size_t>(j)], subdomain_ids[static_cast<std::size_t>(j)],
                       Split::train});
  return LatentDataset::from_records(std::move(records), std::move(mf));
}

AugmentationSet AugmentationSet::from_dataset(const LatentDataset& dataset) {
  AugmentationSet out;
  out.vectors = dataset.stack([](const LatentRecord&) { return true; }, &out.class_ids, &out.subdomain_ids);
  out.provenance = dataset.manifest.source_tag;
  return out;
}

AugmentationSet generate_set(const DenoiserModel<float>& model, std::span<const std::uint32_t> classes,
                             std::uint32_t n_per_class, std::uint32_t subdomain, const SamplerConfig& cfg,
                             std::uint64_t seed) {
  cfg.validate();
  const auto& sched = model.schedule();
  const auto sigmas = karras_sigmas(cfg.steps, sched.sigma_min, sched.sigma_max, cfg.rho);
  const Index m = model.config().input_dim;
  for (auto c : classes)
    require(c < model.config().condition.num_classes, ErrorKind::InvalidConfig, "class id out of range");

  AugmentationSet out;
  out.vectors.resize(m, 0);
  std::ostringstream prov;
  prov << "generated seed=" << seed << " steps=" << cfg.steps << " cfg_scale=" << cfg.cfg_scale
       << " integrator=" << static_cast<int>(cfg.integrator) << " rho=" << cfg.rho << " subdomain=" << subdomain;
  out.provenance = prov.str();

  constexpr std::uint32_t kChunk = 256;
  for (std::uint32_t c : classes) {
    for (std::uint32_t start = 0; start < n_per_class; start += kChunk) {
      const std::uint32_t count = std::min(kChunk, n_per_class - start);
      std::vector<Rng> streams;
      std::vector<ConditionDraw> draws;
      Mat<float> x(m, count);
      for (std::uint32_t i = 0; i < count; ++i) {
        streams.emplace_back(seed, std::initializer_list<std::uint64_t>{purpose_tag("sample"), c, start + i});
        draws.push_back(model.condition().draw({c, subdomain}, streams.back()));
        for (Index r = 0; r < m; ++r) x(r, i) = static_cast<float>(sigmas.front() * streams.back().normal());
      }
      const Mat<float> result =
          integrate(guided_denoiser(model, std::move(draws), cfg.cfg_scale), std::move(x), sigmas, cfg, streams);
      ensure_finite(result, "generated latents");
      AugmentationSet chunk;
      chunk.vectors = result;
      chunk.class_ids.assign(count, c);
      chunk.subdomain_ids.assign(count, subdomain);
      out.append(chunk);
    }
  }
  return out;
}

}  // namespace latentaug
