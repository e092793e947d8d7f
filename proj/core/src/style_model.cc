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

#include "stylegate/style_model.h"

#include <cmath>
#include <numbers>

#include "stylegate/errors.h"
#include "stylegate/ops.h"

namespace stylegate {

namespace {

constexpr std::uint64_t kRouterStream = 0x5201;
constexpr std::uint64_t kDecoderStream = 0xdec0;

std::uint64_t level_seed(std::uint64_t seed, std::size_t level) { return mix_seed(seed, level + 1); }

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kSingle:
      return "single";
    case Variant::kEnsemble:
      return "ensemble";
    case Variant::kMoe:
      return "moe";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& name) {
  if (name == "single") return Variant::kSingle;
  if (name == "ensemble") return Variant::kEnsemble;
  if (name == "moe") return Variant::kMoe;
  throw ConfigError("unknown variant '" + name + "' (expected single, ensemble or moe)");
}

void ModelConfig::validate() const {
  if (levels.empty()) throw ConfigError("model needs at least one level");
  if (in_channels == 0 || content_dim == 0 || out_channels == 0 || embed_dim == 0 || decoder_hidden == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (positional_features % 2 != 0) throw ConfigError("positional_features must be even");
  if (expert_conv.kernel_width == 0) throw ConfigError("expert kernel_width must be positive");
  if (gating.router_hidden.kernel_width == 0) throw ConfigError("router kernel_width must be positive");
  gating.validate();
}

std::size_t ModelConfig::experts_per_level() const { return variant == Variant::kSingle ? 1 : gating.n_experts; }

StyleLayer StyleLayer::init(const ModelConfig& cfg, std::size_t level_index) {
  StyleLayer layer;
  layer.resolution_ = cfg.levels.at(level_index);
  layer.variant_ = cfg.variant;
  layer.gating_ = cfg.gating;
  const std::uint64_t seed = level_seed(cfg.seed, level_index);
  layer.gating_.seed = mix_seed(seed, kRouterStream);

  ExpertArch arch;
  arch.in_channels = cfg.in_channels;
  arch.conv = cfg.expert_conv;
  arch.embed_dim = cfg.embed_dim;
  arch.pooling = layer.resolution_;
  const std::size_t n = cfg.experts_per_level();
  for (std::size_t i = 0; i < n; ++i) layer.experts_.push_back(StyleExpert::init(arch, seed ^ i));

  if (cfg.variant == Variant::kMoe) {
    Rng rng(layer.gating_.seed);
    layer.router_ = RouterParams::init(cfg.in_channels, layer.gating_, rng);
  }
  return layer;
}

Tensor StyleLayer::forward(const ReferenceFeatures& x, ForwardMode mode, NoiseSource& noise,
                           std::size_t k_override, std::optional<GateDecision>* decision) const {
  switch (variant_) {
    case Variant::kSingle:
      counter_->add();
      return expert_forward(x, experts_.front());
    case Variant::kEnsemble:
      return ensemble_forward(x, experts_, counter_.get());
    case Variant::kMoe:
      break;
  }
  std::size_t k = mode == ForwardMode::kTrain ? gating_.k_train : gating_.k_infer;
  if (k_override != 0) k = k_override;
  GateDecision gate;
  if (mode == ForwardMode::kInfer) {
    NoiseSource off = NoiseSource::eval();
    gate = noisy_gate(x, *router_, gating_, off, k);
  } else {
    gate = noisy_gate(x, *router_, gating_, noise, k);
  }
  Tensor y = moe_forward(x, experts_, gate, counter_.get());
  if (decision) *decision = std::move(gate);
  return y;
}

void StyleLayer::collect(const std::string& prefix, NamedTensors& out) const {
  if (router_) router_->collect(prefix + "router.", out);
  for (std::size_t i = 0; i < experts_.size(); ++i) {
    experts_[i].collect(prefix + "expert" + std::to_string(i) + ".", out);
  }
}

HierarchicalStyleMoE HierarchicalStyleMoE::init(const ModelConfig& cfg) {
  HierarchicalStyleMoE h;
  for (std::size_t l = 0; l < cfg.levels.size(); ++l) h.levels_.push_back(StyleLayer::init(cfg, l));
  return h;
}

void HierarchicalStyleMoE::collect(NamedTensors& out) const {
  for (std::size_t l = 0; l < levels_.size(); ++l) levels_[l].collect("level" + std::to_string(l) + ".", out);
}

HierarchicalOutput hierarchical_forward(const ReferenceFeatures& x, const HierarchicalStyleMoE& h, ForwardMode mode,
                                        NoiseSource& noise, std::size_t k_override) {
  HierarchicalOutput out;
  for (const StyleLayer& level : h.levels()) {
    std::optional<GateDecision> decision;
    Tensor y = level.forward(x, mode, noise, k_override, &decision);
    out.embeddings.push_back(LevelEmbedding{level.resolution(), y});
    out.decisions.push_back(std::move(decision));
  }
  return out;
}

Decoder Decoder::init(const ModelConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, kDecoderStream));
  const std::size_t in = cfg.content_dim + cfg.levels.size() * cfg.embed_dim + cfg.positional_features;
  Decoder d;
  d.hidden = Dense::init(in, cfg.decoder_hidden, rng);
  d.output = Dense::init(cfg.decoder_hidden, cfg.out_channels, rng);
  d.positional_features = cfg.positional_features;
  return d;
}

void Decoder::collect(NamedTensors& out) const {
  hidden.collect("decoder.hidden.", out);
  output.collect("decoder.output.", out);
}

Tensor positional_features(std::size_t frames, std::size_t count) {
  std::vector<double> values(frames * count);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t m = 0; m < count / 2; ++m) {
      const double phase = 2.0 * std::numbers::pi * static_cast<double>((m + 1) * t) / static_cast<double>(frames);
      values[t * count + 2 * m] = std::sin(phase);
      values[t * count + 2 * m + 1] = std::cos(phase);
    }
  }
  return Tensor::from({frames, count}, std::move(values));
}

Tensor condition_decoder(const Decoder& decoder, std::span<const LevelEmbedding> level_outputs,
                         const Tensor& content, const ReferenceFeatures& x) {
  const std::size_t frames = x.length();
  std::vector<Tensor> blocks;
  blocks.push_back(repeat_rows(content, frames));
  std::vector<long> segment_of;
  for (const LevelEmbedding& level : level_outputs) {
    switch (level.resolution) {
      case Resolution::kSequence:
        blocks.push_back(repeat_rows(level.values, frames));
        break;
      case Resolution::kSegment:
        if (segment_of.empty()) segment_of = x.frame_segments();
        blocks.push_back(gather_rows(level.values, segment_of));
        break;
      case Resolution::kFrame:
        if (level.values.dim(0) != frames) {
          throw ConfigError("frame-level style has " + std::to_string(level.values.dim(0)) + " rows for " +
                            std::to_string(frames) + " frames");
        }
        blocks.push_back(level.values);
        break;
    }
  }
  if (decoder.positional_features > 0) blocks.push_back(positional_features(frames, decoder.positional_features));
  std::size_t width = 0;
  for (const Tensor& b : blocks) width += b.dim(1);
  if (width != decoder.hidden.weight.dim(0)) {
    throw ConfigError("decoder expects " + std::to_string(decoder.hidden.weight.dim(0)) + " input features, got " +
                      std::to_string(width));
  }
  Tensor h = relu(decoder.hidden.forward(concat_cols(blocks)));
  return decoder.output.forward(h);
}

StyleModel StyleModel::init(const ModelConfig& cfg) {
  cfg.validate();
  StyleModel m;
  m.config_ = cfg;
  m.encoder_ = HierarchicalStyleMoE::init(cfg);
  m.decoder_ = Decoder::init(cfg);
  return m;
}

NamedTensors StyleModel::parameters() const {
  NamedTensors out;
  encoder_.collect(out);
  decoder_.collect(out);
  return out;
}

std::size_t StyleModel::expert_parameter_count() const {
  std::size_t n = 0;
  for (const StyleLayer& level : encoder_.levels()) {
    for (const StyleExpert& e : level.experts()) n += count_parameters(e.parameters());
  }
  return n;
}

Tensor StyleModel::forward(const ReferenceFeatures& x, const Tensor& content, ForwardMode mode, NoiseSource& noise,
                           std::size_t k_override, HierarchicalOutput* styles) const {
  HierarchicalOutput h = hierarchical_forward(x, encoder_, mode, noise, k_override);
  Tensor y = condition_decoder(decoder_, h.embeddings, content, x);
  if (styles) *styles = std::move(h);
  return y;
}

std::size_t StyleModel::expert_evaluations() const {
  std::size_t n = 0;
  for (const StyleLayer& level : encoder_.levels()) n += level.counter().value();
  return n;
}

void StyleModel::reset_counters() const {
  for (const StyleLayer& level : encoder_.levels()) level.counter().reset();
}

}  // namespace stylegate
