// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include "latentaug/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "latentaug/config.hpp"
#include "latentaug/error.hpp"

namespace latentaug {

namespace fs = std::filesystem;

void PipelineConfig::validate() const {
  require(tap_layer >= 0 && tap_layer <= static_cast<int>(adapter_hidden.size()), ErrorKind::InvalidLayer,
          "tap_layer " + std::to_string(tap_layer) + " must be below the adapter depth " +
              std::to_string(adapter_hidden.size() + 1));
  require(small_threshold >= 1 || scenario.kind != ScenarioKind::none, ErrorKind::InvalidConfig,
          "small_threshold must be positive");
  require(latent_fill.noise_std >= 0.0, ErrorKind::InvalidConfig, "latent_fill.noise_std must be >= 0");
  stage1.validate();
  stage3.validate();
  diffusion.validate();
  sampler.validate();
}

nlohmann::ordered_json RunReport::to_json(bool with_timings) const {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  if (with_timings) j["timings"] = timings;
  j["checkpoints"] = checkpoints;
  j["augmented"] = augmented;
  j["null_fraction"] = null_fraction;
  auto score = [](const ModelScore& s) {
    nlohmann::ordered_json o;
    if (s.metrics) o = s.metrics->to_json();
    if (!s.error.empty()) o["error"] = s.error;
    return o;
  };
  j["pretrained"] = score(pretrained);
  j["gt_only"] = score(gt_only);
  j["gelda"] = score(gelda);
  j["latent_fill"] = score(latent_fill);
  j["config"] = config;
  return j;
}

namespace {

std::string fmt2(const std::optional<double>& v) {
  if (!v) return {};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", *v);
  return buf;
}

}  // namespace

std::string RunReport::to_csv() const {
  std::ostringstream out;
  out << "model,ua,wa,macro_f1,ua_wo_excluded,acc_many,acc_medium,acc_small\n";
  auto row = [&](const char* name, const ModelScore& s) {
    if (!s.metrics) return;
    const auto& m = *s.metrics;
    out << name << ',' << fmt2(m.ua) << ',' << fmt2(m.wa) << ',' << fmt2(m.macro_f1) << ','
        << fmt2(m.ua_without_excluded) << ',' << fmt2(m.acc_many) << ',' << fmt2(m.acc_medium) << ','
        << fmt2(m.acc_small) << '\n';
  };
  row("pretrained", pretrained);
  row("gt_only", gt_only);
  row("gelda", gelda);
  row("latent_fill", latent_fill);
  return out.str();
}

LatentDataset load_pipeline_dataset(const PipelineConfig& cfg) {
  if (!cfg.dataset.empty()) return read_dataset(cfg.dataset);
  const auto& s = cfg.synthetic;
  const auto spec = transfer_family(s.m, s.c, s.k, s.class_distance, s.subdomain_norm, s.per_cell_std, s.n_train,
                                    s.n_test, derive_seed(cfg.seed, {purpose_tag("data")}));
  return make_synthetic(spec);
}

std::vector<std::uint32_t> augmentation_classes(const LatentDataset& train, const PipelineConfig& cfg) {
  const auto& mf = train.manifest;
  std::vector<std::uint32_t> out;
  switch (cfg.scenario.kind) {
    case ScenarioKind::zero_shot:
      for (std::uint32_t c = 0; c < mf.c; ++c)
        if (c != cfg.scenario.kept_class) out.push_back(c);
      break;
    case ScenarioKind::k_shot:
      for (std::uint32_t c = 0; c < mf.c; ++c) out.push_back(c);
      break;
    case ScenarioKind::none: {
      const auto counts = mf.class_counts(Split::train);
      for (std::uint32_t c = 0; c < mf.c; ++c)
        if (counts[c] < cfg.small_threshold) out.push_back(c);
      break;
    }
  }
  return out;
}

bool stage3_member(const LatentRecord& record, const PipelineConfig& cfg, std::span<const std::uint32_t> aug_classes) {
  if (record.split != Split::train) return false;
  if (cfg.scenario.kind != ScenarioKind::none) return record.subdomain_id == cfg.scenario.target_subdomain;
  return std::find(aug_classes.begin(), aug_classes.end(), record.class_id) != aug_classes.end();
}

bool evaluation_member(const LatentRecord& record, const PipelineConfig& cfg) {
  if (record.split != Split::test) return false;
  return cfg.scenario.kind == ScenarioKind::none || record.subdomain_id == cfg.scenario.target_subdomain;
}

std::vector<Mat<float>> subdomain_pools(const AdapterModel<float>& model, const LatentDataset& train, int l) {
  std::vector<Mat<float>> pools;
  for (std::uint32_t k = 0; k < train.manifest.k; ++k) {
    const Mat<float> z0 =
        train.stack([k](const LatentRecord& r) { return r.split == Split::train && r.subdomain_id == k; });
    pools.push_back(z0.cols() > 0 ? model.tap(z0, l) : Mat<float>(model.latent_dim(l), 0));
  }
  return pools;
}

MetricsReport evaluate_adapter(const AdapterModel<float>& model, const LatentDataset& test,
                               std::span<const std::uint64_t> train_counts, std::optional<std::uint32_t> excluded,
                               const std::function<bool(const LatentRecord&)>& keep) {
  std::vector<std::uint32_t> labels;
  const Mat<float> x = test.stack(keep, &labels);
  require(x.cols() > 0, ErrorKind::EmptyDataset, "no test records to evaluate");
  const auto preds = model.predict(x);
  return compute_metrics(preds, labels, model.num_classes(), train_counts, excluded);
}

AugmentationSet latent_fill_augment(const Mat<float>& latents, std::uint32_t class_id, std::uint32_t subdomain_id,
                                    std::uint32_t n, double noise_std, Rng& rng) {
  require(latents.cols() >= 2, ErrorKind::InsufficientSupport,
          "latent filling for class " + std::to_string(class_id) + " needs two latents, found " +
              std::to_string(latents.cols()));
  AugmentationSet out;
  out.vectors.resize(latents.rows(), n);
  const auto count = static_cast<std::size_t>(latents.cols());
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t a = rng.index(count);
    std::size_t b = rng.index(count - 1);
    if (b >= a) ++b;
    const auto lambda = static_cast<float>(rng.uniform());
    out.vectors.col(i) = lambda * latents.col(static_cast<Index>(a)) + (1.0f - lambda) * latents.col(static_cast<Index>(b));
    if (noise_std > 0.0)
      for (Index r = 0; r < latents.rows(); ++r) out.vectors(r, i) += static_cast<float>(noise_std * rng.normal());
  }
  out.class_ids.assign(n, class_id);
  out.subdomain_ids.assign(n, subdomain_id);
  out.provenance = "latent_fill noise_std=" + std::to_string(noise_std);
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename F>
auto in_stage(const char* stage, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string(stage) + ": " + e.detail());
  }
}

std::string file_id(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(purpose_tag(buf.str())));
  return path.filename().string() + "#" + hex;
}

LabeledLatents tapped(const AdapterModel<float>& model, const LatentDataset& data, int l,
                      const std::function<bool(const LatentRecord&)>& keep) {
  LabeledLatents out;
  const Mat<float> z0 = data.stack(keep, &out.labels);
  out.x = z0.cols() > 0 ? model.tap(z0, l) : Mat<float>(model.latent_dim(l), 0);
  return out;
}

}  // namespace

RunReport run_pipeline(const PipelineConfig& cfg, const RecordHook& hook) {
  cfg.validate();
  RunReport report;
  report.seed = cfg.seed;
  report.config = to_json(cfg);
  const fs::path out_dir = cfg.out_dir;
  fs::create_directories(out_dir);
  auto notify = [&](std::string_view stage, const LatentDataset& data,
                    const std::function<bool(const LatentRecord&)>& keep) {
    if (!hook) return;
    for (const auto& r : data.records)
      if (keep(r)) hook(stage, r);
  };
  auto stage_seed = [&](const char* name) { return derive_seed(cfg.seed, {purpose_tag(name)}); };

  // Scenario, then a hard split: training stages only ever see `train`.
  auto t0 = Clock::now();
  LatentDataset train, test;
  in_stage("scenario", [&] {
    const LatentDataset full = load_pipeline_dataset(cfg);
    ScenarioSpec scenario = cfg.scenario;
    scenario.seed = stage_seed("scenario");
    const LatentDataset scenarioed = apply_scenario(full, scenario);
    std::vector<LatentRecord> tr, te;
    for (const auto& r : scenarioed.records) (r.split == Split::train ? tr : te).push_back(r);
    train = LatentDataset::from_records(std::move(tr), scenarioed.manifest);
    test = LatentDataset::from_records(std::move(te), scenarioed.manifest);
    return 0;
  });
  report.timings["scenario"] = seconds_since(t0);
  const auto train_counts = train.manifest.class_counts(Split::train);
  const int l = cfg.tap_layer;

  // Stage 1.
  t0 = Clock::now();
  AdapterModel<float> pretrained = in_stage("stage1", [&] {
    AdapterModel<float> model = build_adapter(train.dim(), train.manifest.c, cfg.adapter_hidden, stage_seed("stage1.init"));
    TrainConfig tc = cfg.stage1;
    tc.seed = stage_seed("stage1");
    notify("stage1", train, [](const LatentRecord&) { return true; });
    train_stage1(model, train, tc);
    write_adapter(out_dir / "adapter_stage1.gelw", model);
    return model;
  });
  report.checkpoints["adapter_stage1"] = file_id(out_dir / "adapter_stage1.gelw");
  report.timings["stage1"] = seconds_since(t0);

  const auto aug_classes = augmentation_classes(train, cfg);
  const std::optional<std::uint32_t> excluded =
      cfg.scenario.kind == ScenarioKind::zero_shot ? std::optional<std::uint32_t>(cfg.scenario.kept_class) : std::nullopt;
  auto eval_keep = [&](const LatentRecord& r) { return evaluation_member(r, cfg); };
  auto evaluate = [&](const AdapterModel<float>& model) {
    return in_stage("evaluate", [&] {
      notify("evaluate", test, eval_keep);
      return evaluate_adapter(model, test, train_counts, excluded, eval_keep);
    });
  };
  report.pretrained.metrics = evaluate(pretrained);

  // Stage 2: diffusion over the whole tapped train pool.
  t0 = Clock::now();
  const bool need_diffusion = cfg.n_aug > 0 && !aug_classes.empty();
  DenoiserModel<float> denoiser;
  if (need_diffusion) {
    denoiser = in_stage("stage2", [&] {
      notify("stage2", train, [](const LatentRecord&) { return true; });
      DiffusionData data;
      std::vector<std::uint32_t> classes, subs;
      data.latents = pretrained.tap(train.stack([](const LatentRecord&) { return true; }, &classes, &subs), l);
      for (std::size_t i = 0; i < classes.size(); ++i) data.labels.push_back({classes[i], subs[i]});

      DenoiserConfig dc = cfg.denoiser;
      dc.input_dim = 0;
      dc.schedule.sigma_data = 0.0;
      dc.seed = stage_seed("stage2.init");
      dc.condition.mode = cfg.condition_mode;
      dc.condition.num_classes = train.manifest.c;
      dc.condition.reference_dim = 0;
      std::vector<Mat<float>> pools;
      Mat<float> semantic;
      if (cfg.condition_mode == ConditionMode::class_plus_subdomain_latent) pools = subdomain_pools(pretrained, train, l);
      if (cfg.condition_mode == ConditionMode::class_plus_semantic_vector) {
        require(!cfg.semantic_vectors.empty(), ErrorKind::MissingCondition,
                "class_plus_semantic_vector needs a semantic_vectors file");
        const LatentDataset sv = read_dataset(cfg.semantic_vectors);
        std::vector<std::uint32_t> keys;
        const Mat<float> vecs = sv.stack([](const LatentRecord&) { return true; }, &keys);
        const std::uint32_t groups =
            cfg.denoiser.condition.semantic_key == SemanticKey::by_class ? train.manifest.c : train.manifest.k;
        semantic = Mat<float>::Zero(vecs.rows(), groups);
        std::vector<bool> seen(groups, false);
        for (std::size_t i = 0; i < keys.size(); ++i) {
          require(keys[i] < groups, ErrorKind::MissingCondition, "semantic vector key out of range");
          semantic.col(keys[i]) = vecs.col(static_cast<Index>(i));
          seen[keys[i]] = true;
        }
        for (std::uint32_t g = 0; g < groups; ++g)
          require(seen[g], ErrorKind::MissingCondition, "no semantic vector for key " + std::to_string(g));
      }
      DiffTrainConfig tc = cfg.diffusion;
      tc.seed = stage_seed("stage2");
      TrainedDenoiser trained = train_diffusion(data, dc, pools, semantic, tc);
      report.null_fraction = trained.stats.null_fraction();
      write_denoiser(out_dir / "denoiser.gelw", trained.model);
      return std::move(trained.model);
    });
    report.checkpoints["denoiser"] = file_id(out_dir / "denoiser.gelw");
  }
  report.timings["stage2"] = seconds_since(t0);

  // Augmentation in the target subdomain (or each class's majority subdomain
  // when there is no scenario, which keeps the reference pool meaningful).
  t0 = Clock::now();
  AugmentationSet aug;
  aug.vectors.resize(pretrained.latent_dim(l), 0);
  if (need_diffusion) {
    aug = in_stage("generate", [&] {
      SamplerConfig sc = cfg.sampler;
      sc.seed = stage_seed("generate");
      if (cfg.scenario.kind != ScenarioKind::none)
        return generate_set(denoiser, aug_classes, cfg.n_aug, cfg.scenario.target_subdomain, sc, sc.seed);
      AugmentationSet all;
      all.vectors.resize(pretrained.latent_dim(l), 0);
      for (auto c : aug_classes) {
        std::uint32_t best = 0;
        for (std::uint32_t k = 1; k < train.manifest.k; ++k)
          if (train.manifest.count(c, k, Split::train) > train.manifest.count(c, best, Split::train)) best = k;
        const std::uint32_t one[] = {c};
        auto part = generate_set(denoiser, one, cfg.n_aug, best, sc, sc.seed);
        all.provenance = part.provenance;
        all.append(part);
      }
      return all;
    });
    write_dataset(aug.to_dataset(train.manifest), out_dir / "augmented.geld");
  }
  report.augmented = static_cast<std::uint64_t>(aug.size());
  report.timings["generate"] = seconds_since(t0);

  // Stage 3: identical seed for the GT-only and augmented runs.
  t0 = Clock::now();
  auto gt_keep = [&](const LatentRecord& r) { return stage3_member(r, cfg, aug_classes); };
  const LabeledLatents gt = in_stage("stage3", [&] { return tapped(pretrained, train, l, gt_keep); });
  TrainConfig ft = cfg.stage3;
  ft.seed = stage_seed("stage3");
  auto finetune = [&](const LabeledLatents& extra, const char* name) {
    return in_stage("stage3", [&] {
      notify("stage3", train, gt_keep);
      AdapterModel<float> model = pretrained;
      finetune_stage3(model, l, gt, extra, ft);
      write_adapter(out_dir / (std::string(name) + ".gelw"), model);
      report.checkpoints[name] = file_id(out_dir / (std::string(name) + ".gelw"));
      return model;
    });
  };
  const LabeledLatents empty{Mat<float>(pretrained.latent_dim(l), 0), {}};
  report.gt_only.metrics = evaluate(finetune(empty, "adapter_gt_only"));
  report.gelda.metrics = evaluate(finetune(aug.labeled(), "adapter_gelda"));
  report.timings["stage3"] = seconds_since(t0);

  if (cfg.latent_fill.enabled) {
    t0 = Clock::now();
    try {
      const AugmentationSet fill = in_stage("latent_fill", [&] {
        notify("latent_fill", train, gt_keep);
        AugmentationSet all;
        all.vectors.resize(pretrained.latent_dim(l), 0);
        for (auto c : aug_classes) {
          const std::uint32_t sub = cfg.scenario.target_subdomain;
          const LabeledLatents own = tapped(pretrained, train, l, [&](const LatentRecord& r) {
            return gt_keep(r) && r.class_id == c && (cfg.scenario.kind == ScenarioKind::none || r.subdomain_id == sub);
          });
          Rng rng(stage_seed("latent_fill"), {c});
          all.append(latent_fill_augment(own.x, c, sub, cfg.n_aug, cfg.latent_fill.noise_std, rng));
        }
        return all;
      });
      report.latent_fill.metrics = evaluate(finetune(fill.labeled(), "adapter_latent_fill"));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::InsufficientSupport) throw;
      report.latent_fill.error = e.what();
    }
    report.timings["latent_fill"] = seconds_since(t0);
  }

  std::ofstream(out_dir / "report.json") << report.to_json().dump(2) << '\n';
  std::ofstream(out_dir / "metrics.csv") << report.to_csv();
  if (report.gelda.metrics) std::ofstream(out_dir / "metrics_gelda.csv") << report.gelda.metrics->to_csv();
  return report;
}

std::vector<Index> denoiser_size_widths(const std::string& name) {
  if (name == "tiny") return {64, 64};
  if (name == "small") return {128, 128, 128};
  if (name == "base") return {512, 512, 512};
  fail(ErrorKind::InvalidConfig, "unknown denoiser size '" + name + "' (tiny, small, base)");
}

std::vector<SweepEntry> sweep(const PipelineConfig& cfg, SweepAxis axis, const std::vector<std::string>& values) {
  require(!values.empty(), ErrorKind::InvalidConfig, "sweep needs at least one value");
  std::vector<SweepEntry> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    SweepEntry entry;
    entry.value = values[i];
    try {
      PipelineConfig run = cfg;
      run.seed = derive_seed(cfg.seed, {purpose_tag("sweep"), i});
      std::string axis_name;
      switch (axis) {
        case SweepAxis::denoiser_size:
          axis_name = "denoiser_size";
          run.denoiser.hidden = denoiser_size_widths(values[i]);
          break;
        case SweepAxis::n_aug:
          axis_name = "n_aug";
          run.n_aug = static_cast<std::uint32_t>(std::stoul(values[i]));
          break;
        case SweepAxis::tap_layer:
          axis_name = "tap_layer";
          run.tap_layer = std::stoi(values[i]);
          break;
      }
      run.out_dir = (fs::path(cfg.out_dir) / (axis_name + "_" + values[i])).string();
      entry.report = run_pipeline(run);
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    out.push_back(std::move(entry));
  }
  return out;
}

std::string sweep_table(const std::vector<SweepEntry>& entries) {
  std::ostringstream out;
  out << "value,pretrained_ua,gt_only_ua,gelda_ua,gelda_macro_f1,error\n";
  for (const auto& e : entries) {
    out << e.value << ',';
    if (e.report) {
      auto ua = [](const ModelScore& s) { return s.metrics ? std::optional<double>(s.metrics->ua) : std::nullopt; };
      out << fmt2(ua(e.report->pretrained)) << ',' << fmt2(ua(e.report->gt_only)) << ',' << fmt2(ua(e.report->gelda))
          << ',' << fmt2(e.report->gelda.metrics ? std::optional<double>(e.report->gelda.metrics->macro_f1) : std::nullopt)
          << ",";
    } else {
      out << ",,,,";
    }
    std::string err = e.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << err << '\n';
  }
  return out.str();
}

}  // namespace latentaug
