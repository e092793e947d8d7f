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
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stylegate/rng.h"
#include "stylegate/routing.h"
#include "stylegate/style_model.h"
#include "stylegate/synthbench.h"

namespace stylegate {

enum class OptimizerKind { kSgd, kMomentum, kAdam };

std::string to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& name);

struct TrainConfig {
  std::size_t steps = 5000;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double balance_loss_coefficient = 0.0;
  std::size_t eval_every = 250;  // 0 disables periodic evaluation
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
  void validate() const;
};

// First-order optimizers with named, serializable state.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}

  // Applies one update from the accumulated gradients, then clears them.
  void step(const NamedTensors& params);

  long updates() const { return updates_; }
  // Slot name -> per-parameter state vector, e.g. "m/level0.expert0.conv0.kernel".
  const std::map<std::string, std::vector<double>>& state() const { return state_; }
  void restore(long updates, std::map<std::string, std::vector<double>> state);

 private:
  TrainConfig cfg_;
  long updates_ = 0;
  std::map<std::string, std::vector<double>> state_;
};

struct TrainLogRow {
  std::size_t step = 0;
  double loss = 0.0;
  double balance_loss = 0.0;
  std::vector<double> utilization;  // per expert, averaged over levels
};

struct EvalLogRow {
  std::size_t step = 0;
  std::string split;
  double mse = 0.0;
};

struct Checkpoint {
  StyleModel model;
  TrainConfig train;
  Optimizer optimizer{TrainConfig{}};
  std::size_t step = 0;
  std::string sampler_state;
  std::string noise_state;
  nlohmann::json data_spec;  // spec of the dataset the model was trained on

  // Manifest (checkpoint.json) plus float64 blob (params.bin) in `dir`.
  void save(const std::filesystem::path& dir) const;
  static Checkpoint load(const std::filesystem::path& dir);
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRow> log;
  std::vector<EvalLogRow> evals;
};

// Joint optimization of styles, routers and decoder on the train split with
// gate noise active. Throws DivergenceError naming the step on a non-finite loss.
TrainResult train(const ModelConfig& model_cfg, const Dataset& data, const TrainConfig& cfg);
// Continues from a checkpoint for cfg.steps further steps.
TrainResult resume(Checkpoint start, const Dataset& data, std::size_t steps);

// Writes `step,loss,balance_loss,util_0..util_{n-1}`.
void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log);
std::string train_log_csv(const std::vector<TrainLogRow>& log);

struct MetricsBundle {
  double cosine_similarity = 0.0;
  double distortion = 0.0;
  double frame_error = 0.0;
  double mse = 0.0;
  std::size_t samples = 0;

  nlohmann::json to_json() const;
};

// Relative deviation on channel 0 above which a frame counts as an error.
inline constexpr double kFrameErrorThreshold = 0.2;

// Per-sample metrics of a predicted [T x F] sequence against its target.
MetricsBundle score_sequence(std::span<const double> predicted, std::span<const double> target, std::size_t frames,
                             std::size_t channels);
// Mean of per-sample metrics.
MetricsBundle average_metrics(std::span<const MetricsBundle> per_sample);

// Eval-mode gating (noise off), k_infer unless k_override > 0.
MetricsBundle evaluate(const StyleModel& model, const Dataset& data, Split split, std::size_t k_override = 0,
                       std::size_t threads = 1);

// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace stylegate
