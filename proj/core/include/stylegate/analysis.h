// Copyright 2026 The stylegate Authors
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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stylegate/style_model.h"
#include "stylegate/synthbench.h"
#include "stylegate/training.h"

namespace stylegate {

// Which inputs a gating analysis looks at.
struct SubsetSpec {
  std::size_t samples = 100;
  std::uint64_t seed = 0;
  std::vector<Split> splits{Split::kEvalSeen, Split::kEvalUnseen};
  std::size_t k_override = 0;  // 0 keeps the trained k_infer
};

struct UtilizationCell {
  std::size_t samples = 0;
  std::vector<double> fraction;            // gate weight mass share per expert
  std::vector<double> selection_fraction;  // share of top-k selections per expert
  std::vector<std::size_t> count;          // top-k selections per expert
};

struct LevelUtilization {
  Resolution resolution = Resolution::kSequence;
  UtilizationCell overall;
  std::map<int, UtilizationCell> per_cluster;
};

struct UtilizationReport {
  std::size_t n_experts = 0;
  std::size_t k = 0;
  std::size_t samples = 0;
  std::vector<LevelUtilization> levels;

  nlohmann::json to_json() const;
  // Rows `level,cluster,expert,fraction,count`; cluster "all" is the overall cell.
  std::string to_csv() const;
  // Writes utilization.csv and utilization.json into `dir`.
  void write(const std::filesystem::path& dir) const;
};

// Picks `spec.samples` indices spread evenly over the clusters present in the
// chosen splits. Deterministic in spec.seed.
std::vector<std::pair<Split, std::size_t>> select_subset(const Dataset& data, const SubsetSpec& spec);

// Noise-off gating statistics of a MoE model. Throws InputError("no gating to
// analyze") for other variants.
UtilizationReport gating_analysis(const StyleModel& model, const Dataset& data, const SubsetSpec& spec = {});

struct ComparisonRow {
  std::string variant;
  std::string split;
  MetricsBundle metrics;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;

  nlohmann::json to_json() const;
  // Header `variant,split,cosine,distortion,frame_error,mse`.
  std::string to_csv() const;
  // Writes comparison.csv and comparison.json into `dir`.
  void write(const std::filesystem::path& dir) const;
};

// Evaluates every model on the same splits. Throws InputError when a split is
// missing from the dataset.
ComparisonTable compare_variants(const std::vector<std::pair<std::string, const StyleModel*>>& models,
                                 const Dataset& data,
                                 const std::vector<Split>& splits = {Split::kEvalSeen, Split::kEvalUnseen},
                                 std::size_t threads = 1);

// Multi-seed comparison: every seed gets a fresh dataset and one training run
// per variant with identical budgets.
struct ExperimentConfig {
  BenchmarkSpec data;
  ModelConfig model;  // variant is overridden per run
  TrainConfig train;
  std::vector<Variant> variants{Variant::kSingle, Variant::kEnsemble, Variant::kMoe};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  bool analyze_gating = true;
  SubsetSpec subset;
  std::size_t threads = 1;
};

struct SeedResult {
  std::uint64_t seed = 0;
  ComparisonTable table;
  std::optional<UtilizationReport> utilization;  // for the moe run
};

struct ExperimentResult {
  std::vector<SeedResult> seeds;
  // Median of each metric over seeds, one row per variant and split.
  ComparisonTable median;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

double median(std::vector<double> values);

}  // namespace stylegate
