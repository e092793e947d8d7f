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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stylegate/expert.h"
#include "stylegate/layers.h"
#include "stylegate/routing.h"
#include "stylegate/tensor.h"

namespace stylegate {

enum class Variant { kSingle, kEnsemble, kMoe };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

enum class ForwardMode { kTrain, kInfer };

struct ModelConfig {
  Variant variant = Variant::kMoe;
  std::vector<Resolution> levels{Resolution::kSequence, Resolution::kSegment, Resolution::kFrame};
  std::size_t in_channels = 8;   // reference feature channels
  std::size_t content_dim = 8;
  std::size_t out_channels = 8;  // target feature channels
  ConvStackSpec expert_conv;
  std::size_t embed_dim = 16;
  GatingConfig gating;
  std::size_t decoder_hidden = 64;
  std::size_t positional_features = 8;
  std::uint64_t seed = 0;

  bool operator==(const ModelConfig&) const = default;
  void validate() const;
  // Experts per level for the configured variant.
  std::size_t experts_per_level() const;
};

// One style-encoding level: a single encoder, an ensemble, or a sparse MoE.
class StyleLayer {
 public:
  static StyleLayer init(const ModelConfig& cfg, std::size_t level_index);

  Resolution resolution() const { return resolution_; }
  Variant variant() const { return variant_; }
  const GatingConfig& gating() const { return gating_; }
  const std::vector<StyleExpert>& experts() const { return experts_; }
  std::vector<StyleExpert>& experts() { return experts_; }
  const std::optional<RouterParams>& router() const { return router_; }
  std::optional<RouterParams>& router() { return router_; }
  ExpertEvalCounter& counter() const { return *counter_; }

  // Embedding for this level and, for the MoE variant, its gate decision.
  // k_override = 0 means "use k_train (train) / k_infer (infer)".
  Tensor forward(const ReferenceFeatures& x, ForwardMode mode, NoiseSource& noise, std::size_t k_override,
                 std::optional<GateDecision>* decision) const;

  void collect(const std::string& prefix, NamedTensors& out) const;

 private:
  Resolution resolution_ = Resolution::kSequence;
  Variant variant_ = Variant::kMoe;
  GatingConfig gating_;
  std::optional<RouterParams> router_;
  std::vector<StyleExpert> experts_;
  std::shared_ptr<ExpertEvalCounter> counter_ = std::make_shared<ExpertEvalCounter>();
};

class HierarchicalStyleMoE {
 public:
  static HierarchicalStyleMoE init(const ModelConfig& cfg);

  std::vector<StyleLayer>& levels() { return levels_; }
  const std::vector<StyleLayer>& levels() const { return levels_; }
  void collect(NamedTensors& out) const;

 private:
  std::vector<StyleLayer> levels_;
};

struct LevelEmbedding {
  Resolution resolution;
  Tensor values;  // [1 x D], [segments x D] or [T x D]
};

struct HierarchicalOutput {
  std::vector<LevelEmbedding> embeddings;
  // One entry per level; empty for levels without gating.
  std::vector<std::optional<GateDecision>> decisions;
};

HierarchicalOutput hierarchical_forward(const ReferenceFeatures& x, const HierarchicalStyleMoE& h, ForwardMode mode,
                                        NoiseSource& noise, std::size_t k_override = 0);

// Per-frame two-layer network over [content | broadcast level styles |
// positional features] producing a [T x out_channels] target sequence.
struct Decoder {
  Dense hidden;
  Dense output;
  std::size_t positional_features = 8;

  static Decoder init(const ModelConfig& cfg);
  void collect(NamedTensors& out) const;
};

Tensor positional_features(std::size_t frames, std::size_t count);

// Broadcasts every level embedding to frame rate and decodes. Throws
// ConfigError when dimensions do not line up with the decoder.
Tensor condition_decoder(const Decoder& decoder, std::span<const LevelEmbedding> level_outputs,
                         const Tensor& content, const ReferenceFeatures& x);

class StyleModel {
 public:
  static StyleModel init(const ModelConfig& cfg);

  const ModelConfig& config() const { return config_; }
  HierarchicalStyleMoE& encoder() { return encoder_; }
  const HierarchicalStyleMoE& encoder() const { return encoder_; }
  Decoder& decoder() { return decoder_; }
  const Decoder& decoder() const { return decoder_; }

  // Parameters in a fixed, documented order (level by level, then decoder).
  NamedTensors parameters() const;
  std::size_t parameter_count() const { return count_parameters(parameters()); }
  // Parameters of the style experts only (no router, no decoder).
  std::size_t expert_parameter_count() const;

  // Reference -> styles -> decoded target sequence.
  Tensor forward(const ReferenceFeatures& x, const Tensor& content, ForwardMode mode, NoiseSource& noise,
                 std::size_t k_override = 0, HierarchicalOutput* styles = nullptr) const;

  std::size_t expert_evaluations() const;
  void reset_counters() const;

 private:
  ModelConfig config_;
  HierarchicalStyleMoE encoder_;
  Decoder decoder_;
};

}  // namespace stylegate
