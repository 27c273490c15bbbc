// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "latentaug/config.hpp"
#include "latentaug/error.hpp"
#include "latentaug/gradsuite.hpp"
#include "latentaug/pipeline.hpp"

namespace fs = std::filesystem;
using namespace latentaug;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NumericalError:
      return kExitNumerical;
    case ErrorKind::InvalidConfig:
    case ErrorKind::InvalidLayer:
    case ErrorKind::InvalidScenario:
    case ErrorKind::InvalidSigma:
      return kExitUsage;
    default:
      return kExitData;
  }
}

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
};

PipelineConfig resolve_config(const Globals& g) {
  PipelineConfig cfg = g.config.empty() ? PipelineConfig{} : load_pipeline_config(g.config);
  if (g.seed_set) cfg.seed = g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  fs::create_directories(cfg.out_dir);
  return cfg;
}

std::vector<std::uint32_t> parse_ids(const std::string& text) {
  std::vector<std::uint32_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(static_cast<std::uint32_t>(std::stoul(item)));
  return out;
}

std::vector<std::string> split_values(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

LatentDataset scenario_train(const PipelineConfig& cfg, const std::string& data) {
  PipelineConfig local = cfg;
  if (!data.empty()) local.dataset = data;
  ScenarioSpec scenario = cfg.scenario;
  scenario.seed = derive_seed(cfg.seed, {purpose_tag("scenario")});
  const LatentDataset full = apply_scenario(load_pipeline_dataset(local), scenario);
  std::vector<LatentRecord> train;
  for (const auto& r : full.records)
    if (r.split == Split::train) train.push_back(r);
  return LatentDataset::from_records(std::move(train), full.manifest);
}

// CSV rows: item,class,subdomain,split,v1,...,vM. Rows sharing an item id are
// frames of one clip and are mean-pooled.
LatentDataset ingest_csv(const fs::path& path, std::uint32_t classes, std::uint32_t subdomains, const std::string& tag) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::IoError, "cannot open " + path.string());
  struct Item {
    std::uint32_t cls = 0, sub = 0;
    Split split = Split::train;
    std::vector<Eigen::VectorXf> frames;
  };
  std::vector<std::string> order;
  std::map<std::string, Item> items;
  std::string line;
  std::size_t line_no = 0;
  std::uint32_t max_c = 0, max_k = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells = split_values(line);
    require(cells.size() >= 5, ErrorKind::FormatError, "line " + std::to_string(line_no) + ": too few columns");
    if (line_no == 1 && cells[0] == "item") continue;
    try {
      auto& item = items[cells[0]];
      const bool fresh = item.frames.empty();
      if (fresh) order.push_back(cells[0]);
      const auto cls = static_cast<std::uint32_t>(std::stoul(cells[1]));
      const auto sub = static_cast<std::uint32_t>(std::stoul(cells[2]));
      require(cells[3] == "train" || cells[3] == "test", ErrorKind::FormatError,
              "line " + std::to_string(line_no) + ": split must be train or test");
      const Split split = cells[3] == "train" ? Split::train : Split::test;
      require(fresh || (item.cls == cls && item.sub == sub && item.split == split), ErrorKind::IntegrityError,
              "line " + std::to_string(line_no) + ": frames of item " + cells[0] + " disagree on labels");
      item.cls = cls;
      item.sub = sub;
      item.split = split;
      Eigen::VectorXf v(static_cast<Index>(cells.size() - 4));
      for (std::size_t i = 4; i < cells.size(); ++i) v[static_cast<Index>(i - 4)] = std::stof(cells[i]);
      item.frames.push_back(std::move(v));
      max_c = std::max(max_c, cls + 1);
      max_k = std::max(max_k, sub + 1);
    } catch (const std::logic_error& e) {
      fail(ErrorKind::FormatError, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  require(!items.empty(), ErrorKind::EmptyInput, "no rows in " + path.string());
  std::vector<LatentRecord> records;
  for (const auto& id : order) {
    const auto& item = items[id];
    records.push_back({temporal_pool(item.frames), item.cls, item.sub, item.split});
  }
  const auto m = static_cast<std::uint32_t>(records.front().vector.size());
  DatasetManifest mf = DatasetManifest::with_default_names(m, classes ? classes : max_c, subdomains ? subdomains : max_k);
  mf.source_tag = tag;
  LatentDataset out = LatentDataset::from_records(std::move(records), std::move(mf));
  out.validate();
  return out;
}

void print_metrics(const MetricsReport& m) { std::cout << m.to_csv(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative latent data augmentation toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config whose keys mirror the pipeline config fields");
  auto* seed_opt = app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--out", g.out, "Output directory");
  app.fallthrough();

  auto* synth = app.add_subcommand("synth", "Write the configured synthetic dataset");

  auto* ingest = app.add_subcommand("ingest", "Pool and convert CSV frame vectors to GELD");
  std::string ingest_input, ingest_tag = "ingest";
  std::uint32_t ingest_c = 0, ingest_k = 0;
  ingest->add_option("--input", ingest_input, "CSV: item,class,subdomain,split,v1..vM")->required();
  ingest->add_option("--classes", ingest_c, "Class count (default: inferred)");
  ingest->add_option("--subdomains", ingest_k, "Subdomain count (default: inferred)");
  ingest->add_option("--source-tag", ingest_tag, "Manifest source tag");

  std::string data, adapter_path, denoiser_path, aug_path;
  auto* train_adapter = app.add_subcommand("train-adapter", "Stage 1");
  train_adapter->add_option("--data", data, "GELD dataset (default: config dataset or synthetic)");

  auto* train_diff = app.add_subcommand("train-diffusion", "Stage 2 on latents tapped at the config tap_layer");
  train_diff->add_option("--data", data);
  train_diff->add_option("--adapter", adapter_path)->required();

  auto* generate = app.add_subcommand("generate", "Sample an augmentation set");
  std::string classes_text;
  std::uint32_t n_per_class = 200, subdomain = 0;
  generate->add_option("--denoiser", denoiser_path)->required();
  generate->add_option("--classes", classes_text, "Comma-separated class ids")->required();
  generate->add_option("--n", n_per_class, "Samples per class");
  generate->add_option("--subdomain", subdomain, "Subdomain label and reference group");

  auto* finetune = app.add_subcommand("finetune", "Stage 3 from tap_layer on GT (+ augmentation)");
  int finetune_subdomain = -1;
  finetune->add_option("--adapter", adapter_path)->required();
  finetune->add_option("--data", data);
  finetune->add_option("--aug", aug_path, "Augmentation set in Z^(l)");
  finetune->add_option("--subdomain", finetune_subdomain, "Restrict GT to one subdomain");

  auto* evaluate = app.add_subcommand("evaluate", "Score an adapter on a test split");
  int eval_subdomain = -1, eval_exclude = -1;
  evaluate->add_option("--adapter", adapter_path)->required();
  evaluate->add_option("--data", data);
  evaluate->add_option("--subdomain", eval_subdomain, "Restrict to one subdomain");
  evaluate->add_option("--exclude", eval_exclude, "Class left out of UA w/o excluded");

  auto* run = app.add_subcommand("run", "Full pipeline");

  auto* sweep_cmd = app.add_subcommand("sweep", "One pipeline run per value");
  std::string axis_text, values_text;
  sweep_cmd->add_option("--axis", axis_text, "denoiser_size, n_aug or tap_layer")->required();
  sweep_cmd->add_option("--values", values_text, "Comma-separated values")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  int instances = 100;
  double tolerance = 1e-4;
  gradcheck->add_option("--instances", instances, "Instances per model family");
  gradcheck->add_option("--tolerance", tolerance);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    const PipelineConfig cfg = resolve_config(g);
    const fs::path out = cfg.out_dir;

    if (synth->parsed()) {
      PipelineConfig local = cfg;
      local.dataset.clear();
      const LatentDataset d = load_pipeline_dataset(local);
      const auto bytes = write_dataset(d, out / "synthetic.geld");
      std::cout << (out / "synthetic.geld").string() << " records=" << d.size() << " bytes=" << bytes << '\n';
    } else if (ingest->parsed()) {
      const LatentDataset d = ingest_csv(ingest_input, ingest_c, ingest_k, ingest_tag);
      write_dataset(d, out / "ingested.geld");
      std::cout << (out / "ingested.geld").string() << " records=" << d.size() << " m=" << d.dim() << '\n';
    } else if (train_adapter->parsed()) {
      const LatentDataset train = scenario_train(cfg, data);
      AdapterModel<float> model = build_adapter(train.dim(), train.manifest.c, cfg.adapter_hidden,
                                                derive_seed(cfg.seed, {purpose_tag("stage1.init")}));
      TrainConfig tc = cfg.stage1;
      tc.seed = derive_seed(cfg.seed, {purpose_tag("stage1")});
      const TrainHistory history = train_stage1(model, train, tc);
      write_adapter(out / "adapter_stage1.gelw", model);
      std::ofstream(out / "history_stage1.json") << history.to_json() << '\n';
      std::cout << "final loss " << history.epochs.back().loss << " accuracy " << history.epochs.back().accuracy << '\n';
    } else if (train_diff->parsed()) {
      const LatentDataset train = scenario_train(cfg, data);
      const AdapterModel<float> adapter = read_adapter(adapter_path);
      DiffusionData dd;
      std::vector<std::uint32_t> cls, sub;
      dd.latents = adapter.tap(train.stack([](const LatentRecord&) { return true; }, &cls, &sub), cfg.tap_layer);
      for (std::size_t i = 0; i < cls.size(); ++i) dd.labels.push_back({cls[i], sub[i]});
      DenoiserConfig dc = cfg.denoiser;
      dc.input_dim = 0;
      dc.schedule.sigma_data = 0.0;
      dc.seed = derive_seed(cfg.seed, {purpose_tag("stage2.init")});
      dc.condition.mode = cfg.condition_mode;
      dc.condition.num_classes = train.manifest.c;
      std::vector<Mat<float>> pools;
      if (cfg.condition_mode == ConditionMode::class_plus_subdomain_latent)
        pools = subdomain_pools(adapter, train, cfg.tap_layer);
      Mat<float> semantic;
      if (cfg.condition_mode == ConditionMode::class_plus_semantic_vector) {
        require(!cfg.semantic_vectors.empty(), ErrorKind::MissingCondition, "semantic_vectors file not configured");
        std::vector<std::uint32_t> keys;
        const LatentDataset sv = read_dataset(cfg.semantic_vectors);
        const Mat<float> vecs = sv.stack([](const LatentRecord&) { return true; }, &keys);
        std::uint32_t groups = 0;
        for (auto k : keys) groups = std::max(groups, k + 1);
        semantic = Mat<float>::Zero(vecs.rows(), groups);
        for (std::size_t i = 0; i < keys.size(); ++i) semantic.col(keys[i]) = vecs.col(static_cast<Index>(i));
      }
      DiffTrainConfig tc = cfg.diffusion;
      tc.seed = derive_seed(cfg.seed, {purpose_tag("stage2")});
      const TrainedDenoiser trained = train_diffusion(dd, dc, pools, semantic, tc);
      write_denoiser(out / "denoiser.gelw", trained.model);
      std::cout << "null fraction " << trained.stats.null_fraction() << '\n';
    } else if (generate->parsed()) {
      const DenoiserModel<float> model = read_denoiser(denoiser_path);
      SamplerConfig sc = cfg.sampler;
      sc.seed = derive_seed(cfg.seed, {purpose_tag("generate")});
      const auto classes = parse_ids(classes_text);
      const AugmentationSet set = generate_set(model, classes, n_per_class, subdomain, sc, sc.seed);
      const auto k = std::max<std::uint32_t>(subdomain + 1, static_cast<std::uint32_t>(model.condition().subdomain_pool().size()));
      const DatasetManifest like = DatasetManifest::with_default_names(
          static_cast<std::uint32_t>(model.config().input_dim),
          static_cast<std::uint32_t>(model.config().condition.num_classes), k);
      write_dataset(set.to_dataset(like), out / "augmented.geld");
      std::cout << (out / "augmented.geld").string() << " vectors=" << set.size() << '\n';
    } else if (finetune->parsed()) {
      AdapterModel<float> model = read_adapter(adapter_path);
      const LatentDataset train = scenario_train(cfg, data);
      LabeledLatents gt;
      const Mat<float> z0 = train.stack(
          [&](const LatentRecord& r) {
            return finetune_subdomain < 0 || r.subdomain_id == static_cast<std::uint32_t>(finetune_subdomain);
          },
          &gt.labels);
      gt.x = z0.cols() > 0 ? model.tap(z0, cfg.tap_layer) : Mat<float>(model.latent_dim(cfg.tap_layer), 0);
      LabeledLatents aug{Mat<float>(model.latent_dim(cfg.tap_layer), 0), {}};
      if (!aug_path.empty()) aug = AugmentationSet::from_dataset(read_dataset(aug_path)).labeled();
      TrainConfig tc = cfg.stage3;
      tc.seed = derive_seed(cfg.seed, {purpose_tag("stage3")});
      finetune_stage3(model, cfg.tap_layer, gt, aug, tc);
      write_adapter(out / "adapter_finetuned.gelw", model);
      std::cout << (out / "adapter_finetuned.gelw").string() << '\n';
    } else if (evaluate->parsed()) {
      const AdapterModel<float> model = read_adapter(adapter_path);
      PipelineConfig local = cfg;
      if (!data.empty()) local.dataset = data;
      const LatentDataset d = load_pipeline_dataset(local);
      const auto counts = d.manifest.class_counts(Split::train);
      const std::optional<std::uint32_t> excluded =
          eval_exclude >= 0 ? std::optional<std::uint32_t>(static_cast<std::uint32_t>(eval_exclude)) : std::nullopt;
      const MetricsReport m = evaluate_adapter(model, d, counts, excluded, [&](const LatentRecord& r) {
        return r.split == Split::test &&
               (eval_subdomain < 0 || r.subdomain_id == static_cast<std::uint32_t>(eval_subdomain));
      });
      std::ofstream(out / "metrics.csv") << m.to_csv();
      std::ofstream(out / "metrics.json") << m.to_json().dump(2) << '\n';
      print_metrics(m);
    } else if (run->parsed()) {
      const RunReport report = run_pipeline(cfg);
      std::cout << report.to_csv();
      if (!report.latent_fill.error.empty()) std::cout << "latent_fill: " << report.latent_fill.error << '\n';
    } else if (sweep_cmd->parsed()) {
      const auto entries = sweep(cfg, parse_sweep_axis(axis_text), split_values(values_text));
      const std::string table = sweep_table(entries);
      std::ofstream(out / ("sweep_" + axis_text + ".csv")) << table;
      std::cout << table;
    } else if (gradcheck->parsed()) {
      const GradSuiteReport report = run_grad_suite(instances, cfg.seed);
      std::cout << "instances " << report.instances.size() << " worst relative error " << report.worst << " at "
                << report.worst_where << '\n';
      if (!report.within(tolerance)) {
        std::cerr << "gradient check above tolerance " << tolerance << '\n';
        return kExitNumerical;
      }
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
