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

#include <algorithm>
#include <iostream>

#include <gtest/gtest.h>

#include "stylegate/errors.h"
#include "stylegate/style_model.h"
#include "testing.h"

namespace stylegate {
namespace {

using testing::check_gradients;
using testing::random_reference;
using testing::random_tensor;

ExpertArch arch_for(Resolution pooling) {
  ExpertArch arch;
  arch.in_channels = 3;
  arch.conv.channels = {4, 5};
  arch.embed_dim = 3;
  arch.pooling = pooling;
  return arch;
}

ModelConfig tiny_config(Variant variant) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.in_channels = 3;
  cfg.content_dim = 2;
  cfg.out_channels = 2;
  cfg.expert_conv.channels = {4};
  cfg.embed_dim = 3;
  cfg.gating.n_experts = 3;
  cfg.gating.k_train = 2;
  cfg.gating.k_infer = 2;
  cfg.gating.router_hidden.channels = {4};
  cfg.decoder_hidden = 6;
  cfg.positional_features = 2;
  cfg.seed = 21;
  return cfg;
}

void zero_all(NamedTensors params) {
  for (auto& [name, t] : params) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
}

TEST(ExpertForward, ZeroParametersGiveZeroEmbedding) {
  Rng rng(1);
  StyleExpert e = StyleExpert::init(arch_for(Resolution::kSequence), 3);
  zero_all(e.parameters());
  const Tensor y = expert_forward(random_reference(7, 3, 0, rng), e);
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(ExpertForward, SingleFrameSequenceAndFrameModesCoincide) {
  Rng rng(2);
  const StyleExpert seq = StyleExpert::init(arch_for(Resolution::kSequence), 4);
  const StyleExpert frame = StyleExpert::init(arch_for(Resolution::kFrame), 4);
  const ReferenceFeatures x = random_reference(1, 3, 1, rng);
  EXPECT_EQ(expert_forward(x, seq).to_vector(), expert_forward(x, frame).to_vector());
}

TEST(ExpertForward, ResolutionContract) {
  Rng rng(3);
  const ReferenceFeatures x = random_reference(9, 3, 4, rng);
  EXPECT_EQ(expert_forward(x, StyleExpert::init(arch_for(Resolution::kSequence), 1)).shape(), (Shape{1, 3}));
  EXPECT_EQ(expert_forward(x, StyleExpert::init(arch_for(Resolution::kSegment), 1)).shape(), (Shape{4, 3}));
  EXPECT_EQ(expert_forward(x, StyleExpert::init(arch_for(Resolution::kFrame), 1)).shape(), (Shape{9, 3}));
}

TEST(ExpertForward, SegmentModeNeedsSegments) {
  Rng rng(4);
  const ReferenceFeatures x = random_reference(6, 3, 0, rng);
  EXPECT_THROW(expert_forward(x, StyleExpert::init(arch_for(Resolution::kSegment), 1)), InputError);
}

TEST(ExpertForward, RejectsBadSegmentsAndChannels) {
  Rng rng(5);
  ReferenceFeatures x = random_reference(6, 3, 0, rng);
  x.segments = {{0, 4}, {3, 6}};
  EXPECT_THROW(expert_forward(x, StyleExpert::init(arch_for(Resolution::kSegment), 1)), InputError);
  const ReferenceFeatures wrong = random_reference(6, 2, 0, rng);
  EXPECT_THROW(expert_forward(wrong, StyleExpert::init(arch_for(Resolution::kSequence), 1)), DimensionError);
}

TEST(ExpertForward, GradientMatchesFiniteDifferences) {
  for (Resolution r : {Resolution::kSequence, Resolution::kSegment, Resolution::kFrame}) {
    for (int c = 0; c < 20; ++c) {
      Rng rng(1300 + c);
      const StyleExpert e = StyleExpert::init(arch_for(r), 100 + c);
      const ReferenceFeatures x = random_reference(6, 3, 3, rng);
      NamedTensors named = e.parameters();
      std::vector<Tensor> leaves;
      for (const auto& [name, t] : named) leaves.push_back(t.clone());
      leaves.push_back(x.frames.clone());
      const auto res = check_gradients(
          [&](const std::vector<Tensor>& in) {
            StyleExpert q = e;
            q.conv().layers()[0] = {in[0], in[1]};
            q.conv().layers()[1] = {in[2], in[3]};
            q.projection() = {in[4], in[5]};
            ReferenceFeatures xi = x;
            xi.frames = in[6];
            return expert_forward(xi, q);
          },
          leaves, c);
      EXPECT_LT(res.worst, 1e-4) << to_string(r) << " case " << c << ": " << res.where;
    }
  }
}

TEST(StyleLayer, ArchitectureParityAndDistinctParameters) {
  const ModelConfig cfg = tiny_config(Variant::kMoe);
  for (std::size_t level = 0; level < cfg.levels.size(); ++level) {
    const StyleLayer layer = StyleLayer::init(cfg, level);
    ASSERT_EQ(layer.experts().size(), 3u);
    for (const StyleExpert& e : layer.experts()) {
      EXPECT_EQ(e.arch().serialize(), layer.experts()[0].arch().serialize());
    }
    EXPECT_NE(layer.experts()[0].projection().weight.to_vector(), layer.experts()[1].projection().weight.to_vector());
  }
}

TEST(StyleLayer, ParameterCountIsDeterministic) {
  const ModelConfig cfg = tiny_config(Variant::kMoe);
  const StyleModel a = StyleModel::init(cfg);
  const StyleModel b = StyleModel::init(cfg);
  EXPECT_EQ(a.parameter_count(), b.parameter_count());
  const ExpertArch& arch = a.encoder().levels()[0].experts()[0].arch();
  EXPECT_EQ(count_parameters(a.encoder().levels()[0].experts()[0].parameters()), arch.parameter_count());

  ModelConfig full;  // default toy scale
  const StyleModel m = StyleModel::init(full);
  const std::size_t per_expert = m.encoder().levels()[0].experts()[0].arch().parameter_count();
  std::cout << "default expert parameters: " << per_expert << ", model total: " << m.parameter_count() << "\n";
  EXPECT_GE(per_expert, 3000u);
  EXPECT_LE(per_expert, 100000u);
}

TEST(Hierarchy, SingleLevelReducesToMoeForward) {
  ModelConfig cfg = tiny_config(Variant::kMoe);
  cfg.levels = {Resolution::kSequence};
  const HierarchicalStyleMoE h = HierarchicalStyleMoE::init(cfg);
  Rng rng(6);
  const ReferenceFeatures x = random_reference(8, 3, 2, rng);
  NoiseSource e1 = NoiseSource::eval(), e2 = NoiseSource::eval();
  const HierarchicalOutput out = hierarchical_forward(x, h, ForwardMode::kInfer, e1);
  const StyleLayer& layer = h.levels()[0];
  const GateDecision d = noisy_gate(x, *layer.router(), layer.gating(), e2, 2);
  const Tensor direct = moe_forward(x, layer.experts(), d);
  ASSERT_EQ(out.embeddings.size(), 1u);
  EXPECT_EQ(out.embeddings[0].values.to_vector(), direct.to_vector());
  EXPECT_EQ(out.decisions[0]->selected, d.selected);
}

TEST(Hierarchy, OneEvaluationPerLevelWithTopOne) {
  ModelConfig cfg = tiny_config(Variant::kMoe);
  cfg.gating.n_experts = 2;
  cfg.gating.k_train = 1;
  cfg.gating.k_infer = 1;
  const StyleModel model = StyleModel::init(cfg);
  Rng rng(7);
  NoiseSource noise = NoiseSource::train(3);
  for (int i = 0; i < 20; ++i) {
    model.reset_counters();
    model.forward(random_reference(7, 3, 3, rng), random_tensor({2}, rng), ForwardMode::kTrain, noise);
    EXPECT_EQ(model.expert_evaluations(), cfg.levels.size());
  }
}

TEST(Hierarchy, LevelsRouteIndependently) {
  ModelConfig cfg = tiny_config(Variant::kMoe);
  cfg.gating.n_experts = 2;
  cfg.gating.k_train = 1;
  cfg.gating.k_infer = 1;
  const HierarchicalStyleMoE h = HierarchicalStyleMoE::init(cfg);
  Rng rng(8);
  // Global offset and local oscillation pull in opposite directions.
  std::vector<std::vector<std::vector<std::size_t>>> picks(cfg.levels.size());
  for (int i = 0; i < 100; ++i) {
    ReferenceFeatures x = random_reference(12, 3, 3, rng);
    const double global = rng.uniform(-2, 2);
    for (std::size_t t = 0; t < 12; ++t) {
      for (std::size_t f = 0; f < 3; ++f) {
        x.frames.mutable_data()[t * 3 + f] = global - (t % 2 == 0 ? 1.0 : -1.0) * global * rng.uniform(0.5, 2.0);
      }
    }
    NoiseSource eval = NoiseSource::eval();
    const HierarchicalOutput out = hierarchical_forward(x, h, ForwardMode::kInfer, eval);
    for (std::size_t l = 0; l < cfg.levels.size(); ++l) picks[l].push_back(out.decisions[l]->selected);
  }
  bool differ = false;
  for (std::size_t l = 1; l < picks.size(); ++l) differ = differ || picks[l] != picks[0];
  EXPECT_TRUE(differ);
}

TEST(Decoder, ZeroStyleLeavesOnlyContent) {
  const ModelConfig cfg = tiny_config(Variant::kMoe);
  const StyleModel model = StyleModel::init(cfg);
  Rng rng(9);
  const Tensor content = random_tensor({2}, rng);
  std::vector<Tensor> outputs;
  for (int trial = 0; trial < 2; ++trial) {
    const ReferenceFeatures x = random_reference(8, 3, 3, rng);
    std::vector<LevelEmbedding> levels{{Resolution::kSequence, Tensor::zeros({1, 3})},
                                       {Resolution::kSegment, Tensor::zeros({3, 3})},
                                       {Resolution::kFrame, Tensor::zeros({8, 3})}};
    outputs.push_back(condition_decoder(model.decoder(), levels, content, x));
  }
  EXPECT_EQ(outputs[0].to_vector(), outputs[1].to_vector());
}

TEST(Decoder, OutputShapeAndMismatch) {
  const ModelConfig cfg = tiny_config(Variant::kMoe);
  const StyleModel model = StyleModel::init(cfg);
  Rng rng(10);
  for (std::size_t t : {1u, 5u, 32u}) {
    const ReferenceFeatures x = random_reference(t, 3, std::min<std::size_t>(t, 3), rng);
    NoiseSource eval = NoiseSource::eval();
    EXPECT_EQ(model.forward(x, random_tensor({2}, rng), ForwardMode::kInfer, eval).shape(), (Shape{t, 2}));
  }
  const ReferenceFeatures x = random_reference(5, 3, 2, rng);
  std::vector<LevelEmbedding> wrong{{Resolution::kSequence, Tensor::zeros({1, 4})}};
  EXPECT_THROW(condition_decoder(model.decoder(), wrong, random_tensor({2}, rng), x), ConfigError);
}

TEST(Variants, ExpertCountsAndParity) {
  const StyleModel single = StyleModel::init(tiny_config(Variant::kSingle));
  const StyleModel ensemble = StyleModel::init(tiny_config(Variant::kEnsemble));
  const StyleModel moe = StyleModel::init(tiny_config(Variant::kMoe));
  EXPECT_EQ(single.encoder().levels()[0].experts().size(), 1u);
  EXPECT_EQ(ensemble.encoder().levels()[0].experts().size(), 3u);
  EXPECT_FALSE(ensemble.encoder().levels()[0].router().has_value());
  EXPECT_EQ(ensemble.expert_parameter_count(), moe.expert_parameter_count());
  EXPECT_EQ(single.expert_parameter_count() * 3, moe.expert_parameter_count());
}

// Whole model under replayed noise: every parameter, including the routers'
// noise weights, against central differences.
TEST(EndToEnd, GradientMatchesFiniteDifferences) {
  for (int c = 0; c < 20; ++c) {
    ModelConfig cfg = tiny_config(Variant::kMoe);
    cfg.seed = 50 + c;
    const StyleModel model = StyleModel::init(cfg);
    Rng rng(1500 + c);
    const ReferenceFeatures x = random_reference(6, 3, 2, rng);
    const Tensor content = random_tensor({2}, rng);
    const Tensor target = random_tensor({6, 2}, rng);
    std::vector<double> eps(3 * cfg.levels.size());
    for (double& e : eps) e = rng.normal();

    const NamedTensors named = model.parameters();
    std::vector<Tensor> leaves;
    for (const auto& [name, t] : named) leaves.push_back(t);
    const auto res = check_gradients(
        [&](const std::vector<Tensor>& in) {
          NamedTensors live = model.parameters();
          for (std::size_t i = 0; i < live.size(); ++i) {
            if (live[i].second.impl() != in[i].impl()) std::copy(in[i].data().begin(), in[i].data().end(),
                                                                 live[i].second.mutable_data().begin());
          }
          NoiseSource replay = NoiseSource::replay(eps);
          return mse(model.forward(x, content, ForwardMode::kTrain, replay), target);
        },
        leaves, c);
    EXPECT_LT(res.worst, 1e-4) << "case " << c << ": " << res.where;
  }
}

}  // namespace
}  // namespace stylegate
