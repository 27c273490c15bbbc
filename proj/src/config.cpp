// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#include "latentaug/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include "latentaug/error.hpp"

namespace latentaug {

namespace {

using nlohmann::json;
using ojson = nlohmann::ordered_json;

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  require(j.is_object(), ErrorKind::InvalidConfig, std::string(where) + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    require(ok, ErrorKind::InvalidConfig, "unknown key '" + key + "' in " + std::string(where));
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::InvalidConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

std::string lower_loss(LossKind k) { return k == LossKind::cross_entropy ? "cross_entropy" : "logit_adjusted"; }

LossKind parse_loss(const std::string& s) {
  if (s == "cross_entropy") return LossKind::cross_entropy;
  if (s == "logit_adjusted") return LossKind::logit_adjusted;
  fail(ErrorKind::InvalidConfig, "unknown loss '" + s + "'");
}

std::string optimizer_name(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd_momentum: return "sgd_momentum";
    case OptimizerKind::adam: return "adam";
    case OptimizerKind::adamw: return "adamw";
  }
  return "adam";
}

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "sgd_momentum") return OptimizerKind::sgd_momentum;
  if (s == "adam") return OptimizerKind::adam;
  if (s == "adamw") return OptimizerKind::adamw;
  fail(ErrorKind::InvalidConfig, "unknown optimizer '" + s + "'");
}

TrainConfig train_from_json(const json& j, TrainConfig cfg) {
  check_keys(j, "train config",
             {"epochs", "batch", "lr", "warmup_epochs", "loss", "la_tau", "optimizer", "momentum", "weight_decay"});
  read(j, "epochs", cfg.epochs);
  read(j, "batch", cfg.batch);
  read(j, "lr", cfg.lr);
  read(j, "warmup_epochs", cfg.warmup_epochs);
  std::string s;
  if (j.contains("loss")) {
    read(j, "loss", s);
    cfg.loss = parse_loss(s);
  }
  read(j, "la_tau", cfg.la_tau);
  if (j.contains("optimizer")) {
    read(j, "optimizer", s);
    cfg.optimizer = parse_optimizer(s);
  }
  read(j, "momentum", cfg.momentum);
  read(j, "weight_decay", cfg.weight_decay);
  return cfg;
}

DiffTrainConfig diffusion_from_json(const json& j, DiffTrainConfig cfg) {
  check_keys(j, "diffusion", {"iterations", "batch", "lr", "weight_decay", "cond_dropout", "ema_max_decay", "log_every"});
  read(j, "iterations", cfg.iterations);
  read(j, "batch", cfg.batch);
  read(j, "lr", cfg.lr);
  read(j, "weight_decay", cfg.weight_decay);
  read(j, "cond_dropout", cfg.cond_dropout);
  read(j, "ema_max_decay", cfg.ema_max_decay);
  read(j, "log_every", cfg.log_every);
  return cfg;
}

SamplerConfig sampler_from_json(const json& j, SamplerConfig cfg) {
  check_keys(j, "sampler", {"steps", "cfg_scale", "integrator", "rho", "eta", "s_noise"});
  read(j, "steps", cfg.steps);
  read(j, "cfg_scale", cfg.cfg_scale);
  if (j.contains("integrator")) {
    std::string s;
    read(j, "integrator", s);
    cfg.integrator = parse_integrator(s);
  }
  read(j, "rho", cfg.rho);
  read(j, "eta", cfg.eta);
  read(j, "s_noise", cfg.s_noise);
  return cfg;
}

ScenarioSpec scenario_from_json(const json& j, ScenarioSpec spec) {
  check_keys(j, "scenario", {"kind", "target_subdomain", "kept_class", "shots"});
  if (j.contains("kind")) {
    std::string s;
    read(j, "kind", s);
    spec.kind = parse_scenario_kind(s);
  }
  read(j, "target_subdomain", spec.target_subdomain);
  read(j, "kept_class", spec.kept_class);
  read(j, "shots", spec.shots);
  return spec;
}

DenoiserConfig denoiser_from_json(const json& j, DenoiserConfig cfg) {
  check_keys(j, "denoiser", {"hidden", "time_dim", "condition", "schedule", "dropout"});
  read(j, "hidden", cfg.hidden);
  read(j, "time_dim", cfg.time_dim);
  read(j, "dropout", cfg.dropout);
  if (auto it = j.find("condition"); it != j.end()) {
    check_keys(*it, "denoiser.condition", {"embed_dim", "width", "semantic_key"});
    read(*it, "embed_dim", cfg.condition.embed_dim);
    read(*it, "width", cfg.condition.width);
    if (it->contains("semantic_key")) {
      std::string s;
      read(*it, "semantic_key", s);
      require(s == "by_class" || s == "by_subdomain", ErrorKind::InvalidConfig, "unknown semantic_key '" + s + "'");
      cfg.condition.semantic_key = s == "by_class" ? SemanticKey::by_class : SemanticKey::by_subdomain;
    }
  }
  if (auto it = j.find("schedule"); it != j.end()) {
    check_keys(*it, "denoiser.schedule", {"sigma_min", "sigma_max", "sigma_data"});
    read(*it, "sigma_min", cfg.schedule.sigma_min);
    read(*it, "sigma_max", cfg.schedule.sigma_max);
    read(*it, "sigma_data", cfg.schedule.sigma_data);
  }
  return cfg;
}

ojson denoiser_to_json(const DenoiserConfig& cfg) {
  ojson j;
  j["hidden"] = cfg.hidden;
  j["time_dim"] = cfg.time_dim;
  j["condition"] = {{"embed_dim", cfg.condition.embed_dim},
                    {"width", cfg.condition.width},
                    {"semantic_key", cfg.condition.semantic_key == SemanticKey::by_class ? "by_class" : "by_subdomain"}};
  j["schedule"] = {{"sigma_min", cfg.schedule.sigma_min},
                   {"sigma_max", cfg.schedule.sigma_max},
                   {"sigma_data", cfg.schedule.sigma_data}};
  j["dropout"] = cfg.dropout;
  return j;
}

}  // namespace

std::string to_string(ConditionMode mode) {
  switch (mode) {
    case ConditionMode::class_only: return "class_only";
    case ConditionMode::class_plus_subdomain_latent: return "class_plus_subdomain_latent";
    case ConditionMode::class_plus_semantic_vector: return "class_plus_semantic_vector";
  }
  return "class_only";
}

std::string to_string(Integrator integrator) {
  switch (integrator) {
    case Integrator::euler: return "euler";
    case Integrator::euler_ancestral: return "euler_ancestral";
    case Integrator::dpmpp_sde: return "dpmpp_sde";
  }
  return "euler";
}

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::none: return "none";
    case ScenarioKind::zero_shot: return "zero_shot";
    case ScenarioKind::k_shot: return "k_shot";
  }
  return "none";
}

ConditionMode parse_condition_mode(const std::string& text) {
  for (auto m : {ConditionMode::class_only, ConditionMode::class_plus_subdomain_latent,
                 ConditionMode::class_plus_semantic_vector})
    if (to_string(m) == text) return m;
  fail(ErrorKind::InvalidConfig, "unknown condition mode '" + text + "'");
}

Integrator parse_integrator(const std::string& text) {
  for (auto i : {Integrator::euler, Integrator::euler_ancestral, Integrator::dpmpp_sde})
    if (to_string(i) == text) return i;
  fail(ErrorKind::InvalidConfig, "unknown integrator '" + text + "'");
}

ScenarioKind parse_scenario_kind(const std::string& text) {
  for (auto k : {ScenarioKind::none, ScenarioKind::zero_shot, ScenarioKind::k_shot})
    if (to_string(k) == text) return k;
  fail(ErrorKind::InvalidConfig, "unknown scenario kind '" + text + "'");
}

SweepAxis parse_sweep_axis(const std::string& text) {
  if (text == "denoiser_size") return SweepAxis::denoiser_size;
  if (text == "n_aug") return SweepAxis::n_aug;
  if (text == "tap_layer") return SweepAxis::tap_layer;
  fail(ErrorKind::InvalidConfig, "unknown sweep axis '" + text + "'");
}

ojson to_json(const TrainConfig& cfg) {
  ojson j;
  j["epochs"] = cfg.epochs;
  j["batch"] = cfg.batch;
  j["lr"] = cfg.lr;
  j["warmup_epochs"] = cfg.warmup_epochs;
  j["loss"] = lower_loss(cfg.loss);
  j["la_tau"] = cfg.la_tau;
  j["optimizer"] = optimizer_name(cfg.optimizer);
  j["momentum"] = cfg.momentum;
  j["weight_decay"] = cfg.weight_decay;
  return j;
}

ojson to_json(const DiffTrainConfig& cfg) {
  ojson j;
  j["iterations"] = cfg.iterations;
  j["batch"] = cfg.batch;
  j["lr"] = cfg.lr;
  j["weight_decay"] = cfg.weight_decay;
  j["cond_dropout"] = cfg.cond_dropout;
  j["ema_max_decay"] = cfg.ema_max_decay;
  j["log_every"] = cfg.log_every;
  return j;
}

ojson to_json(const SamplerConfig& cfg) {
  ojson j;
  j["steps"] = cfg.steps;
  j["cfg_scale"] = cfg.cfg_scale;
  j["integrator"] = to_string(cfg.integrator);
  j["rho"] = cfg.rho;
  j["eta"] = cfg.eta;
  j["s_noise"] = cfg.s_noise;
  return j;
}

ojson to_json(const ScenarioSpec& spec) {
  ojson j;
  j["kind"] = to_string(spec.kind);
  j["target_subdomain"] = spec.target_subdomain;
  j["kept_class"] = spec.kept_class;
  j["shots"] = spec.shots;
  return j;
}

ojson to_json(const PipelineConfig& cfg) {
  ojson j;
  j["dataset"] = cfg.dataset;
  const auto& s = cfg.synthetic;
  j["synthetic"] = {{"m", s.m},
                    {"c", s.c},
                    {"k", s.k},
                    {"class_distance", s.class_distance},
                    {"subdomain_norm", s.subdomain_norm},
                    {"per_cell_std", s.per_cell_std},
                    {"n_train", s.n_train},
                    {"n_test", s.n_test}};
  j["scenario"] = to_json(cfg.scenario);
  j["tap_layer"] = cfg.tap_layer;
  j["adapter_hidden"] = cfg.adapter_hidden;
  j["stage1"] = to_json(cfg.stage1);
  j["stage3"] = to_json(cfg.stage3);
  j["denoiser"] = denoiser_to_json(cfg.denoiser);
  j["diffusion"] = to_json(cfg.diffusion);
  j["sampler"] = to_json(cfg.sampler);
  j["n_aug"] = cfg.n_aug;
  j["condition_mode"] = to_string(cfg.condition_mode);
  j["semantic_vectors"] = cfg.semantic_vectors;
  j["small_threshold"] = cfg.small_threshold;
  j["latent_fill"] = {{"enabled", cfg.latent_fill.enabled}, {"noise_std", cfg.latent_fill.noise_std}};
  j["out_dir"] = cfg.out_dir;
  j["seed"] = cfg.seed;
  return j;
}

PipelineConfig pipeline_config_from_json(const json& j) {
  check_keys(j, "config",
             {"dataset", "synthetic", "scenario", "tap_layer", "adapter_hidden", "stage1", "stage3", "denoiser",
              "diffusion", "sampler", "n_aug", "condition_mode", "semantic_vectors", "small_threshold", "latent_fill",
              "out_dir", "seed"});
  PipelineConfig cfg;
  read(j, "dataset", cfg.dataset);
  if (auto it = j.find("synthetic"); it != j.end()) {
    check_keys(*it, "synthetic",
               {"m", "c", "k", "class_distance", "subdomain_norm", "per_cell_std", "n_train", "n_test"});
    auto& s = cfg.synthetic;
    read(*it, "m", s.m);
    read(*it, "c", s.c);
    read(*it, "k", s.k);
    read(*it, "class_distance", s.class_distance);
    read(*it, "subdomain_norm", s.subdomain_norm);
    read(*it, "per_cell_std", s.per_cell_std);
    read(*it, "n_train", s.n_train);
    read(*it, "n_test", s.n_test);
  }
  if (j.contains("scenario")) cfg.scenario = scenario_from_json(j["scenario"], cfg.scenario);
  read(j, "tap_layer", cfg.tap_layer);
  read(j, "adapter_hidden", cfg.adapter_hidden);
  if (j.contains("stage1")) cfg.stage1 = train_from_json(j["stage1"], cfg.stage1);
  if (j.contains("stage3")) cfg.stage3 = train_from_json(j["stage3"], cfg.stage3);
  if (j.contains("denoiser")) cfg.denoiser = denoiser_from_json(j["denoiser"], cfg.denoiser);
  if (j.contains("diffusion")) cfg.diffusion = diffusion_from_json(j["diffusion"], cfg.diffusion);
  if (j.contains("sampler")) cfg.sampler = sampler_from_json(j["sampler"], cfg.sampler);
  read(j, "n_aug", cfg.n_aug);
  if (j.contains("condition_mode")) {
    std::string s;
    read(j, "condition_mode", s);
    cfg.condition_mode = parse_condition_mode(s);
  }
  read(j, "semantic_vectors", cfg.semantic_vectors);
  read(j, "small_threshold", cfg.small_threshold);
  if (auto it = j.find("latent_fill"); it != j.end()) {
    check_keys(*it, "latent_fill", {"enabled", "noise_std"});
    read(*it, "enabled", cfg.latent_fill.enabled);
    read(*it, "noise_std", cfg.latent_fill.noise_std);
  }
  read(j, "out_dir", cfg.out_dir);
  read(j, "seed", cfg.seed);
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::IoError, "cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    fail(ErrorKind::InvalidConfig, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return pipeline_config_from_json(j);
}

}  // namespace latentaug
