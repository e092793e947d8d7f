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

#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "stylegate/errors.h"
#include "stylegate/training.h"

namespace stylegate {
namespace {

namespace fs = std::filesystem;

BenchmarkSpec tiny_spec(std::uint64_t seed = 3) {
  BenchmarkSpec spec;
  spec.train_count = 96;
  spec.eval_count = 32;
  spec.frames = 8;
  spec.channels = 3;
  spec.content_dim = 3;
  spec.n_contents = 4;
  spec.n_segments = 2;
  spec.seed = seed;
  return spec;
}

ModelConfig tiny_model(Variant v, std::uint64_t seed = 5) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.in_channels = 3;
  cfg.content_dim = 3;
  cfg.out_channels = 3;
  cfg.expert_conv.channels = {6};
  cfg.embed_dim = 4;
  cfg.gating.n_experts = 3;
  cfg.gating.k_train = 2;
  cfg.gating.k_infer = 2;
  cfg.gating.router_hidden.channels = {4};
  cfg.decoder_hidden = 16;
  cfg.positional_features = 4;
  cfg.seed = seed;
  return cfg;
}

TrainConfig tiny_train(std::size_t steps) {
  TrainConfig cfg;
  cfg.steps = steps;
  cfg.batch_size = 8;
  cfg.learning_rate = 3e-3;
  cfg.eval_every = 0;
  cfg.seed = 11;
  return cfg;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("stylegate_training_" + name);
  fs::remove_all(dir);
  return dir;
}

std::vector<double> probe_outputs(const StyleModel& model, const Dataset& data, std::size_t n) {
  std::vector<double> out;
  NoiseSource noise = NoiseSource::eval();
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor y =
        model.forward(data.reference(Split::kEvalSeen, i), data.content(Split::kEvalSeen, i), ForwardMode::kInfer, noise);
    out.insert(out.end(), y.data().begin(), y.data().end());
  }
  return out;
}

TEST(Optimizer, SgdMatchesHandUpdate) {
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.learning_rate = 0.5;
  Tensor w = Tensor::from({2}, {1.0, -2.0});
  w.set_requires_grad(true);
  w.mutable_grad()[0] = 0.2;
  w.mutable_grad()[1] = -4.0;
  Optimizer opt(cfg);
  opt.step({{"w", w}});
  EXPECT_DOUBLE_EQ(w.data()[0], 0.9);
  EXPECT_DOUBLE_EQ(w.data()[1], 0.0);
  EXPECT_EQ(w.grad()[0], 0.0);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  Tensor w = Tensor::from({3}, {0.0, 1.0, 2.0});
  w.set_requires_grad(true);
  w.mutable_grad()[0] = 3.0;
  w.mutable_grad()[1] = -1e-3;
  w.mutable_grad()[2] = 0.0;
  Optimizer opt(cfg);
  opt.step({{"w", w}});
  EXPECT_NEAR(w.data()[0], -0.01, 1e-8);
  EXPECT_NEAR(w.data()[1], 1.01, 1e-7);
  EXPECT_EQ(w.data()[2], 2.0);
  EXPECT_EQ(opt.updates(), 1);
  EXPECT_TRUE(opt.state().count("m/w"));
  EXPECT_TRUE(opt.state().count("v/w"));
}

TEST(Optimizer, MomentumAccumulatesVelocity) {
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::kMomentum;
  cfg.learning_rate = 1.0;
  cfg.momentum = 0.5;
  Tensor w = Tensor::from({1}, {0.0});
  w.set_requires_grad(true);
  Optimizer opt(cfg);
  for (int i = 0; i < 3; ++i) {
    w.mutable_grad()[0] = 1.0;
    opt.step({{"w", w}});
  }
  EXPECT_DOUBLE_EQ(w.data()[0], -(1.0 + 1.5 + 1.75));
}

TEST(Optimizer, StateRestoreContinuesIdentically) {
  TrainConfig cfg;
  auto run = [&](Optimizer& opt, Tensor& w, int steps) {
    for (int i = 0; i < steps; ++i) {
      w.mutable_grad()[0] = std::sin(w.data()[0] + i);
      opt.step({{"w", w}});
    }
  };
  Tensor a = Tensor::from({1}, {0.3});
  a.set_requires_grad(true);
  Optimizer oa(cfg);
  run(oa, a, 5);
  Tensor b = a.clone();
  b.set_requires_grad(true);
  Optimizer ob(cfg);
  ob.restore(oa.updates(), oa.state());
  run(oa, a, 4);
  run(ob, b, 4);
  EXPECT_EQ(a.data()[0], b.data()[0]);
}

TEST(Train, ZeroStepsLeaveInitialization) {
  const Dataset data = generate_dataset(tiny_spec());
  const ModelConfig mc = tiny_model(Variant::kMoe);
  const TrainResult r = train(mc, data, tiny_train(0));
  const StyleModel init = StyleModel::init(mc);
  const NamedTensors a = r.checkpoint.model.parameters(), b = init.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_TRUE(std::equal(a[i].second.data().begin(), a[i].second.data().end(), b[i].second.data().begin()));
  }
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(r.checkpoint.step, 0u);
}

TEST(Train, MoeLossDecreases) {
  const Dataset data = generate_dataset(tiny_spec());
  const TrainResult r = train(tiny_model(Variant::kMoe), data, tiny_train(300));
  ASSERT_EQ(r.log.size(), 300u);
  double head = 0.0, tail = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    head += r.log[i].loss;
    tail += r.log[r.log.size() - 1 - i].loss;
  }
  EXPECT_LT(tail, 0.5 * head);
  for (const auto& row : r.log) {
    double total = 0.0;
    for (double u : row.utilization) total += u;
    ASSERT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(Train, TightClustersReachNoiseLevel) {
  BenchmarkSpec spec = tiny_spec();
  spec.clusters.resize(3);
  const std::vector<double> means[3] = {{0, 0, 0, 0}, {2, 0, 0, 0}, {0, 2, 0, 0}};
  for (int c = 0; c < 3; ++c) {
    spec.clusters[c].mean = means[c];
    spec.clusters[c].spread.assign(4, 1e-9);
    spec.clusters[c].gain = 0.8;
    spec.clusters[c].offset = 0.3;
    spec.clusters[c].frequency = 1.0;
    spec.clusters[c].unseen = c == 2;
  }
  spec.train_count = 200;
  const Dataset two = generate_dataset(spec);
  TrainConfig tc = tiny_train(1500);
  tc.batch_size = 16;
  const TrainResult r = train(tiny_model(Variant::kSingle), two, tc);
  const double noise = spec.target_noise * spec.target_noise;
  const double mse = evaluate(r.checkpoint.model, two, Split::kEvalSeen).mse;
  EXPECT_LE(mse, 1.1 * noise + 2e-3) << "mse " << mse;
}

TEST(Train, SameSeedGivesIdenticalLog) {
  const Dataset data = generate_dataset(tiny_spec());
  const TrainResult a = train(tiny_model(Variant::kMoe), data, tiny_train(40));
  const TrainResult b = train(tiny_model(Variant::kMoe), data, tiny_train(40));
  EXPECT_EQ(train_log_csv(a.log), train_log_csv(b.log));
  TrainConfig other = tiny_train(40);
  other.seed = 12;
  EXPECT_NE(train_log_csv(a.log), train_log_csv(train(tiny_model(Variant::kMoe), data, other).log));
}

TEST(Train, LogCsvHeader) {
  const Dataset data = generate_dataset(tiny_spec());
  const std::string csv = train_log_csv(train(tiny_model(Variant::kMoe), data, tiny_train(2)).log);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,loss,balance_loss,util_0,util_1,util_2");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Train, PeriodicEvaluation) {
  const Dataset data = generate_dataset(tiny_spec());
  TrainConfig tc = tiny_train(10);
  tc.eval_every = 5;
  const TrainResult r = train(tiny_model(Variant::kMoe), data, tc);
  ASSERT_EQ(r.evals.size(), 4u);
  EXPECT_EQ(r.evals[0].step, 5u);
  EXPECT_EQ(r.evals[0].split, "eval_seen");
  EXPECT_EQ(r.evals[3].split, "eval_unseen");
  EXPECT_EQ(r.evals[3].mse, evaluate(r.checkpoint.model, data, Split::kEvalUnseen).mse);
}

TEST(Train, HugeLearningRateDivergesWithStep) {
  const Dataset data = generate_dataset(tiny_spec());
  TrainConfig tc = tiny_train(200);
  tc.optimizer = OptimizerKind::kSgd;
  tc.learning_rate = 1e6;
  try {
    train(tiny_model(Variant::kMoe), data, tc);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GT(e.step(), 0);
    EXPECT_NE(std::string(e.what()).find("step " + std::to_string(e.step())), std::string::npos);
  }
}

TEST(Train, MismatchedDatasetIsConfigError) {
  const Dataset data = generate_dataset(tiny_spec());
  ModelConfig mc = tiny_model(Variant::kMoe);
  mc.in_channels = 5;
  EXPECT_THROW(train(mc, data, tiny_train(1)), ConfigError);
  TrainConfig bad = tiny_train(1);
  bad.batch_size = 0;
  EXPECT_THROW(train(tiny_model(Variant::kMoe), data, bad), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const Dataset data = generate_dataset(tiny_spec());
  const TrainResult r = train(tiny_model(Variant::kMoe), data, tiny_train(30));
  const fs::path dir = scratch("roundtrip");
  r.checkpoint.save(dir);
  const Checkpoint back = Checkpoint::load(dir);
  EXPECT_EQ(back.model.config(), r.checkpoint.model.config());
  EXPECT_EQ(back.train, r.checkpoint.train);
  EXPECT_EQ(back.step, 30u);
  EXPECT_EQ(back.optimizer.state(), r.checkpoint.optimizer.state());
  EXPECT_EQ(back.data_spec, r.checkpoint.data_spec);
  EXPECT_EQ(probe_outputs(back.model, data, 16), probe_outputs(r.checkpoint.model, data, 16));
  const nlohmann::json manifest = nlohmann::json::parse(std::ifstream(dir / "checkpoint.json"));
  EXPECT_EQ(manifest.at("gating").size(), 3u);
  EXPECT_EQ(manifest.at("gating")[0].at("resolution"), "sequence");
  fs::remove_all(dir);
}

TEST(Checkpoint, ResumeMatchesUninterruptedRun) {
  const Dataset data = generate_dataset(tiny_spec());
  const TrainResult full = train(tiny_model(Variant::kMoe), data, tiny_train(40));
  const TrainResult half = train(tiny_model(Variant::kMoe), data, tiny_train(20));
  const fs::path dir = scratch("resume");
  half.checkpoint.save(dir);
  const TrainResult rest = resume(Checkpoint::load(dir), data, 20);
  std::vector<TrainLogRow> joined = half.log;
  joined.insert(joined.end(), rest.log.begin(), rest.log.end());
  EXPECT_EQ(train_log_csv(joined), train_log_csv(full.log));
  EXPECT_EQ(probe_outputs(rest.checkpoint.model, data, 8), probe_outputs(full.checkpoint.model, data, 8));
  fs::remove_all(dir);
}

TEST(Checkpoint, MissingAndCorrupt) {
  EXPECT_THROW(Checkpoint::load(scratch("absent")), MissingFileError);
  const Dataset data = generate_dataset(tiny_spec());
  const fs::path dir = scratch("corrupt");
  train(tiny_model(Variant::kSingle), data, tiny_train(2)).checkpoint.save(dir);
  fs::resize_file(dir / "params.bin", 24);
  EXPECT_THROW(Checkpoint::load(dir), FormatError);
  std::ofstream(dir / "checkpoint.json") << "{\"format\": \"something-else\"}";
  EXPECT_THROW(Checkpoint::load(dir), FormatError);
  fs::remove_all(dir);
}

TEST(Metrics, TargetAgainstItself) {
  Rng rng(2);
  std::vector<double> y(10 * 4);
  for (double& v : y) v = rng.uniform(-1.0, 1.0);
  const MetricsBundle m = score_sequence(y, y, 10, 4);
  EXPECT_NEAR(m.cosine_similarity, 1.0, 1e-12);
  EXPECT_EQ(m.distortion, 0.0);
  EXPECT_EQ(m.frame_error, 0.0);
  EXPECT_EQ(m.mse, 0.0);
}

TEST(Metrics, ZeroPredictionDistortionIsTargetRms) {
  Rng rng(3);
  const std::size_t t = 6, f = 5;
  std::vector<double> y(t * f), zero(t * f, 0.0);
  for (double& v : y) v = rng.uniform(-2.0, 2.0);
  double rms = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < f; ++c) s += y[i * f + c] * y[i * f + c];
    rms += std::sqrt(s / f);
  }
  const MetricsBundle m = score_sequence(zero, y, t, f);
  EXPECT_NEAR(m.distortion, rms / t, 1e-12);
  EXPECT_EQ(m.frame_error, 1.0);
  EXPECT_EQ(m.cosine_similarity, 0.0);
}

TEST(Metrics, FrameErrorThreshold) {
  const std::vector<double> y{1.0, 0.0, 1.0, 0.0};
  const std::vector<double> p{1.19, 5.0, 1.21, 0.0};
  EXPECT_DOUBLE_EQ(score_sequence(p, y, 2, 2).frame_error, 0.5);
}

TEST(Metrics, AverageIsMean) {
  MetricsBundle a, b;
  a.samples = b.samples = 1;
  a.mse = 1.0;
  a.cosine_similarity = 0.5;
  b.mse = 3.0;
  b.cosine_similarity = 0.0;
  const std::vector<MetricsBundle> v{a, b};
  const MetricsBundle m = average_metrics(v);
  EXPECT_DOUBLE_EQ(m.mse, 2.0);
  EXPECT_DOUBLE_EQ(m.cosine_similarity, 0.25);
  EXPECT_EQ(m.samples, 2u);
}

TEST(Evaluate, ThreadCountDoesNotChangeResult) {
  const Dataset data = generate_dataset(tiny_spec());
  const StyleModel model = StyleModel::init(tiny_model(Variant::kMoe));
  const MetricsBundle a = evaluate(model, data, Split::kEvalUnseen, 0, 1);
  const MetricsBundle b = evaluate(model, data, Split::kEvalUnseen, 0, 4);
  EXPECT_EQ(a.mse, b.mse);
  EXPECT_EQ(a.cosine_similarity, b.cosine_similarity);
  EXPECT_THROW(evaluate(model, data, Split::kEvalUnseen, 4), ConfigError);
}

TEST(Evaluate, OracleBeatsSingleEncoderBaseline) {
  const Dataset data = generate_dataset(tiny_spec(8));
  TrainConfig tc = tiny_train(400);
  const TrainResult r = train(tiny_model(Variant::kSingle), data, tc);
  EXPECT_LT(oracle_mse(data, Split::kEvalSeen), evaluate(r.checkpoint.model, data, Split::kEvalSeen).mse);
}

TEST(ConfigJson, RoundTrips) {
  ModelConfig mc = tiny_model(Variant::kEnsemble);
  mc.gating.noisy = false;
  EXPECT_EQ(model_config_from_json(to_json(mc)), mc);
  TrainConfig tc = tiny_train(7);
  tc.optimizer = OptimizerKind::kMomentum;
  tc.balance_loss_coefficient = 0.01;
  EXPECT_EQ(train_config_from_json(to_json(tc)), tc);
  nlohmann::json j = to_json(tc);
  j["warmup"] = 3;
  EXPECT_THROW(train_config_from_json(j), ConfigError);
}

}  // namespace
}  // namespace stylegate
