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

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "stylegate/expert.h"
#include "stylegate/layers.h"
#include "stylegate/rng.h"
#include "stylegate/tensor.h"

namespace stylegate {

struct GatingConfig {
  std::size_t n_experts = 2;
  std::size_t k_train = 1;
  std::size_t k_infer = 1;
  bool noisy = true;
  // When false the noise term is detached, so W_noise receives no gradient.
  bool noise_grad = true;
  ConvStackSpec router_hidden;
  std::uint64_t seed = 0;

  bool operator==(const GatingConfig&) const = default;
  // Throws ConfigError unless 1 <= k_train, k_infer <= n_experts.
  void validate() const;
};

// Gating network: conv stack -> mean pool -> linear to n logits, plus the
// noise projection W_noise applied to the same pooled vector.
struct RouterParams {
  ConvStack conv_stack;
  Dense final_linear;  // [hidden x n]
  Tensor w_noise;      // [hidden x n]

  static RouterParams init(std::size_t in_channels, const GatingConfig& cfg, Rng& rng);
  std::size_t n_experts() const { return final_linear.bias.numel(); }
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct RouterOutput {
  Tensor clean_logits;  // [n]
  Tensor pooled;        // [hidden]
};

RouterOutput router_forward(const ReferenceFeatures& x, const RouterParams& p);

// Standard-normal draws for the gate noise. Eval mode emits zeros; replay
// mode hands out a fixed list of draws in order.
class NoiseSource {
 public:
  enum class Mode { kTrain, kEval, kReplay };

  static NoiseSource train(std::uint64_t seed) { return NoiseSource(Mode::kTrain, seed, {}); }
  static NoiseSource eval() { return NoiseSource(Mode::kEval, 0, {}); }
  static NoiseSource replay(std::vector<double> draws) { return NoiseSource(Mode::kReplay, 0, std::move(draws)); }

  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }
  std::vector<double> draw(std::size_t n);

  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }

 private:
  NoiseSource(Mode mode, std::uint64_t seed, std::vector<double> draws)
      : mode_(mode), rng_(seed), replay_(std::move(draws)) {}

  Mode mode_;
  Rng rng_;
  std::vector<double> replay_;
  std::size_t cursor_ = 0;
};

struct GateDecision {
  Tensor clean_logits;
  Tensor noise_scale;
  Tensor noisy_logits;
  Tensor weights;                      // [n], exactly zero outside `selected`
  std::vector<std::size_t> selected;   // descending by noisy logit

  std::size_t n_experts() const { return weights.numel(); }
  // Decision with fixed weights; selected = indices of nonzero weights.
  static GateDecision from_weights(std::vector<double> weights);
};

// Indices of the k largest entries, largest first, lower index on ties.
std::vector<std::size_t> top_k_indices(std::span<const double> v, std::size_t k);

// Keeps the k largest entries and sets the rest to -inf. Gradients pass
// through kept entries only.
Tensor keep_top_k(const Tensor& v, std::size_t k);

GateDecision noisy_gate(const RouterOutput& routed, const RouterParams& p, const GatingConfig& cfg,
                        NoiseSource& noise, std::size_t k);
GateDecision noisy_gate(const ReferenceFeatures& x, const RouterParams& p, const GatingConfig& cfg,
                        NoiseSource& noise, std::size_t k);

class ExpertEvalCounter {
 public:
  void add(std::size_t n = 1) { count_.fetch_add(n, std::memory_order_relaxed); }
  std::size_t value() const { return count_.load(std::memory_order_relaxed); }
  void reset() { count_.store(0, std::memory_order_relaxed); }

 private:
  std::atomic<std::size_t> count_{0};
};

// y = sum_i G(x)_i E_i(x), evaluating only experts with nonzero weight.
Tensor moe_forward(const ReferenceFeatures& x, std::span<const StyleExpert> experts, const GateDecision& gate,
                   ExpertEvalCounter* counter = nullptr);

// y = (1/n) sum_i E_i(x) over every expert.
Tensor ensemble_forward(const ReferenceFeatures& x, std::span<const StyleExpert> experts,
                        ExpertEvalCounter* counter = nullptr);

// Squared coefficient of variation of the per-expert summed gate weights.
Tensor importance_loss(std::span<const GateDecision> decisions);

}  // namespace stylegate
