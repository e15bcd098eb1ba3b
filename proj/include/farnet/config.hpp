// Copyright 2026 The FARNet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Run configuration and its JSON form. Keys mirror the field names below;
// unknown keys are rejected so typos do not silently fall back to defaults.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "farnet/data.hpp"
#include "farnet/losses.hpp"
#include "farnet/model.hpp"
#include "farnet/optimizer.hpp"

namespace farnet {

struct OptimizerConfig {
  std::string kind = "adadelta";
  double lr = 1e-4;
  double rho = 0.9;
  double eps = 1e-6;

  AdadeltaConfig adadelta() const { return {lr, rho, eps}; }
};

struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  DatasetSpec dataset;
  OptimizerConfig optimizer;
  int epochs = 300;
  int batch_size = 1;
  double sigma = 10.0;
  std::uint64_t seed = 0;
  std::string checkpoint_dir = "checkpoints";
  bool deterministic = true;

  // Run control beyond the training recipe.
  int max_iterations = 0;       // optimizer steps; 0 = no cap
  int checkpoint_every = 0;     // epochs between periodic checkpoints; 0 = final only
  int threads = 0;              // OpenMP threads; 0 = runtime default
  std::string validation_split;  // split of `dataset` scored during training; empty = none
  int validate_every = 1;        // epochs between validation passes
  DecodeOptions decode;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const nlohmann::json& j);

}  // namespace farnet
