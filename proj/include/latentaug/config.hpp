// Copyright (C) 2026 The latentaug Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "latentaug/pipeline.hpp"

namespace latentaug {

// JSON keys mirror the struct field names. Missing keys keep their defaults;
// unknown keys are rejected with InvalidConfig.

nlohmann::ordered_json to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const TrainConfig& cfg);
nlohmann::ordered_json to_json(const DiffTrainConfig& cfg);
nlohmann::ordered_json to_json(const SamplerConfig& cfg);
nlohmann::ordered_json to_json(const ScenarioSpec& spec);

std::string to_string(ConditionMode mode);
std::string to_string(Integrator integrator);
std::string to_string(ScenarioKind kind);
ConditionMode parse_condition_mode(const std::string& text);
Integrator parse_integrator(const std::string& text);
ScenarioKind parse_scenario_kind(const std::string& text);
SweepAxis parse_sweep_axis(const std::string& text);

}  // namespace latentaug
