// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include "latentaug/gradsuite.hpp"

#include <algorithm>
#include <cmath>

#include "latentaug/adapter.hpp"
#include "latentaug/diffusion.hpp"

namespace latentaug {

namespace {

// A central difference straddles a ReLU kink when an input to the ReLU is
// within this distance of zero; such draws are rejected and redrawn.
constexpr double kKinkMargin = 1e-4;
constexpr int kMaxRedraws = 50;

double min_abs(const Mat<double>& m) { return m.size() ? m.cwiseAbs().minCoeff() : INFINITY; }

int uniform_int(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.index(static_cast<std::size_t>(hi - lo + 1))); }

}  // namespace

GradInstanceResult check_adapter_instance(std::uint64_t seed) {
  GradInstanceResult out;
  out.label = "adapter";
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    Rng rng(seed, {purpose_tag("gradsuite.adapter"), static_cast<std::uint64_t>(attempt)});
    const int depth = uniform_int(rng, 1, 4);
    std::vector<Index> dims{uniform_int(rng, 2, 6)};
    for (int i = 0; i + 1 < depth; ++i) dims.push_back(uniform_int(rng, 2, 7));
    const int classes = uniform_int(rng, 2, 5);
    dims.push_back(classes);
    AdapterModel<double> model(dims, rng.engine()());
    const int start = uniform_int(rng, 0, depth - 1);
    model.set_frozen_prefix(start > 0 ? uniform_int(rng, 0, start) : 0);

    const Index n = uniform_int(rng, 2, 6);
    const Mat<double> x = rng.normal_matrix<double>(dims[static_cast<std::size_t>(start)], n).cwiseAbs() +
                          (start == 0 ? Mat<double>::Zero(dims[0], n) : Mat<double>::Constant(dims[start], n, 0.1));
    std::vector<std::uint32_t> labels;
    for (Index j = 0; j < n; ++j) labels.push_back(static_cast<std::uint32_t>(rng.index(static_cast<std::size_t>(classes))));
    Vec<double> shift = Vec<double>::Zero(classes);
    if (rng.bernoulli(0.5)) {
      std::vector<double> priors(static_cast<std::size_t>(classes));
      double total = 0.0;
      for (auto& p : priors) total += (p = 0.05 + rng.uniform());
      for (auto& p : priors) p /= total;
      shift = la_adjust<double>(Vec<double>::Zero(classes), priors, 0.5 + rng.uniform());
    }

    AdapterModel<double>::Tape tape;
    model.forward_from(start, x, &tape);
    double margin = INFINITY;
    for (std::size_t i = 0; i + 1 < tape.layers.size(); ++i) margin = std::min(margin, min_abs(tape.layers[i].pre));
    if (margin < kKinkMargin) {
      ++out.resampled;
      continue;
    }

    auto loss = [&](ParamStore<double>&) {
      AdapterModel<double>::Tape t;
      Mat<double> logits = model.forward_from(start, x, &t);
      logits.colwise() += shift;
      Mat<double> dlogits;
      const double value = softmax_cross_entropy<double>(logits, labels, &dlogits);
      model.backward(t, dlogits);
      return value;
    };
    out.check = grad_check(model.params(), loss);
    return out;
  }
  fail(ErrorKind::NumericalError, "gradient suite could not draw a kink-free adapter instance");
}

GradInstanceResult check_denoiser_instance(std::uint64_t seed) {
  GradInstanceResult out;
  const auto mode = static_cast<ConditionMode>(seed % 3);
  out.label = mode == ConditionMode::class_only                    ? "denoiser/class_only"
              : mode == ConditionMode::class_plus_subdomain_latent ? "denoiser/class_plus_subdomain_latent"
                                                                   : "denoiser/class_plus_semantic_vector";
  for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
    Rng rng(seed, {purpose_tag("gradsuite.denoiser"), static_cast<std::uint64_t>(attempt)});
    DenoiserConfig cfg;
    cfg.input_dim = uniform_int(rng, 2, 5);
    const Index width = uniform_int(rng, 3, 6);
    cfg.hidden.assign(static_cast<std::size_t>(uniform_int(rng, 1, 2)), width);
    cfg.time_dim = 2 * uniform_int(rng, 1, 3);
    cfg.condition.mode = mode;
    cfg.condition.num_classes = uniform_int(rng, 2, 4);
    cfg.condition.embed_dim = uniform_int(rng, 2, 4);
    cfg.condition.width = uniform_int(rng, 2, 4);
    const Index semantic_dim = uniform_int(rng, 2, 4);
    if (mode == ConditionMode::class_plus_subdomain_latent) cfg.condition.reference_dim = cfg.input_dim;
    if (mode == ConditionMode::class_plus_semantic_vector) cfg.condition.reference_dim = semantic_dim;
    cfg.schedule.sigma_data = 0.5 + 1.5 * rng.uniform();
    cfg.dropout = rng.bernoulli(0.3) ? 0.2 : 0.0;
    cfg.seed = rng.engine()();

    DenoiserModel<double> model(cfg);
    const std::uint32_t groups = 2;
    if (mode == ConditionMode::class_plus_subdomain_latent) {
      std::vector<Mat<double>> pools;
      for (std::uint32_t g = 0; g < groups; ++g)
        pools.push_back(rng.normal_matrix<double>(cfg.input_dim, uniform_int(rng, 1, 3)));
      model.condition().set_subdomain_pool(std::move(pools));
    }
    if (mode == ConditionMode::class_plus_semantic_vector)
      model.condition().set_semantic_vectors(rng.normal_matrix<double>(semantic_dim, cfg.condition.num_classes));
    // The output layer starts at zero; give it weight so upstream gradients are not vacuous.
    for (auto& p : model.params())
      if (p.name.rfind("den.output", 0) == 0) p.value = 0.5 * rng.normal_matrix<double>(p.value.rows(), p.value.cols());
    for (auto& p : model.params())
      if (p.value.cols() == 1 && p.name.find("bias") != std::string::npos)
        p.value = 0.1 * rng.normal_matrix<double>(p.value.rows(), 1);

    DiffusionBatch<double> batch;
    const Index n = uniform_int(rng, 3, 5);
    batch.clean = rng.normal_matrix<double>(cfg.input_dim, n);
    batch.noise = rng.normal_matrix<double>(cfg.input_dim, n);
    for (Index j = 0; j < n; ++j) {
      batch.sigmas.push_back(sample_sigma(model.schedule(), rng));
      const ConditionInput input{static_cast<std::uint32_t>(rng.index(static_cast<std::size_t>(cfg.condition.num_classes))),
                                 static_cast<std::uint32_t>(rng.index(groups))};
      // First column null, second conditioned; the rest at random.
      const bool null = j == 0 || (j > 1 && rng.bernoulli(0.3));
      batch.draws.push_back(null ? model.condition().null_draw() : model.condition().draw(input, rng));
    }
    const std::uint64_t dropout_seed = rng.engine()();

    // Kink screen on the exact forward pass the checker will differentiate.
    {
      Rng dropout(dropout_seed);
      DenoiserModel<double>::Tape tape;
      const Vec<double> sig = Eigen::Map<const Vec<double>>(batch.sigmas.data(), n);
      model.denoise(batch.clean + batch.noise * sig.asDiagonal(), batch.sigmas, batch.draws, &tape, &dropout);
      double margin = std::min(min_abs(tape.mix.pre), min_abs(tape.final_hidden));
      for (const auto& b : tape.blocks) margin = std::min({margin, min_abs(b.entry), min_abs(b.fc1.pre)});
      if (margin < kKinkMargin) {
        ++out.resampled;
        continue;
      }
    }

    auto loss = [&](ParamStore<double>&) {
      Rng dropout(dropout_seed);
      return static_cast<double>(diffusion_loss(model, batch, true, &dropout));
    };
    out.check = grad_check(model.params(), loss);
    const auto& cond = model.condition();
    out.null_covered = model.params().grad(cond.null_index()).cwiseAbs().maxCoeff() > 0.0;
    out.projection_covered = model.params().grad(cond.projection().weight).cwiseAbs().maxCoeff() > 0.0;
    return out;
  }
  fail(ErrorKind::NumericalError, "gradient suite could not draw a kink-free denoiser instance");
}

GradSuiteReport run_grad_suite(int count, std::uint64_t seed) {
  GradSuiteReport report;
  for (int i = 0; i < count; ++i)
    report.instances.push_back(check_adapter_instance(derive_seed(seed, {purpose_tag("adapter"), static_cast<std::uint64_t>(i)})));
  for (int i = 0; i < count; ++i)
    report.instances.push_back(check_denoiser_instance(derive_seed(seed, {purpose_tag("denoiser"), static_cast<std::uint64_t>(i)})));
  for (std::size_t i = 0; i < report.instances.size(); ++i) {
    const auto& r = report.instances[i];
    if (r.check.max_rel_error >= report.worst) {
      report.worst = r.check.max_rel_error;
      report.worst_where = r.label + " #" + std::to_string(i) + " " + r.check.worst_param + "[" +
                           std::to_string(r.check.worst_index) + "]";
    }
  }
  return report;
}

}  // namespace latentaug
