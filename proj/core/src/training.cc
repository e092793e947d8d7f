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

#include "stylegate/training.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "stylegate/binary_io.h"
#include "stylegate/errors.h"
#include "stylegate/ops.h"

namespace stylegate {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr std::uint64_t kSamplerStream = 0x5a3b;
constexpr std::uint64_t kNoiseStream = 0x9015e;

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!keys.count(key)) throw ConfigError(where + "." + key + ": unknown key");
  }
}

}  // namespace

std::string to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::kSgd:
      return "sgd";
    case OptimizerKind::kMomentum:
      return "momentum";
    case OptimizerKind::kAdam:
      return "adam";
  }
  return "unknown";
}

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "momentum") return OptimizerKind::kMomentum;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "' (expected sgd, momentum or adam)");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (balance_loss_coefficient < 0.0) throw ConfigError("train.balance_loss_coefficient must be >= 0");
}

void Optimizer::step(const NamedTensors& params) {
  ++updates_;
  const double lr = cfg_.learning_rate;
  const double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(updates_));
  const double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(updates_));
  for (const auto& [name, tensor] : params) {
    Tensor t = tensor;
    if (!t.has_grad()) continue;
    auto w = t.mutable_data();
    auto g = t.mutable_grad();
    switch (cfg_.optimizer) {
      case OptimizerKind::kSgd:
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
        break;
      case OptimizerKind::kMomentum: {
        auto& vel = state_["velocity/" + name];
        vel.resize(w.size(), 0.0);
        for (std::size_t i = 0; i < w.size(); ++i) {
          vel[i] = cfg_.momentum * vel[i] + g[i];
          w[i] -= lr * vel[i];
        }
        break;
      }
      case OptimizerKind::kAdam: {
        auto& m = state_["m/" + name];
        auto& v = state_["v/" + name];
        m.resize(w.size(), 0.0);
        v.resize(w.size(), 0.0);
        for (std::size_t i = 0; i < w.size(); ++i) {
          m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
          v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
          w[i] -= lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + cfg_.epsilon);
        }
        break;
      }
    }
    t.zero_grad();
  }
}

void Optimizer::restore(long updates, std::map<std::string, std::vector<double>> state) {
  updates_ = updates;
  state_ = std::move(state);
}

namespace {

struct StepOutcome {
  double loss = 0.0;
  double balance = 0.0;
  std::vector<double> utilization;
};

StepOutcome train_step(const StyleModel& model, const Dataset& data, const TrainConfig& cfg, Optimizer& optimizer,
                       Rng& sampler, NoiseSource& noise, const NamedTensors& params) {
  const SplitData& split = data.split(Split::kTrain);
  const std::size_t levels = model.encoder().levels().size();
  const std::size_t n_experts = model.config().experts_per_level();

  Tape tape;
  TapeScope scope(tape);
  std::vector<Tensor> losses;
  std::vector<std::vector<GateDecision>> decisions(levels);
  losses.reserve(cfg.batch_size);
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    const std::size_t i = sampler.index(split.count);
    HierarchicalOutput styles;
    Tensor y = model.forward(data.reference(Split::kTrain, i), data.content(Split::kTrain, i), ForwardMode::kTrain,
                             noise, 0, &styles);
    losses.push_back(mse(y, data.target(Split::kTrain, i)));
    for (std::size_t l = 0; l < levels; ++l) {
      if (styles.decisions[l]) decisions[l].push_back(std::move(*styles.decisions[l]));
    }
  }
  Tensor loss = scale(add_n(losses), 1.0 / static_cast<double>(cfg.batch_size));

  StepOutcome out;
  out.utilization.assign(n_experts, 0.0);
  std::vector<Tensor> balance_terms;
  std::size_t gated_levels = 0;
  for (std::size_t l = 0; l < levels; ++l) {
    if (decisions[l].empty()) continue;
    ++gated_levels;
    balance_terms.push_back(importance_loss(decisions[l]));
    for (const GateDecision& d : decisions[l]) {
      for (std::size_t e = 0; e < n_experts; ++e) out.utilization[e] += d.weights[e];
    }
  }
  if (gated_levels == 0) {
    for (double& u : out.utilization) u = 1.0 / static_cast<double>(n_experts);
  } else {
    for (double& u : out.utilization) u /= static_cast<double>(gated_levels * cfg.batch_size);
    Tensor balance = scale(add_n(balance_terms), 1.0 / static_cast<double>(gated_levels));
    out.balance = balance.item();
    if (cfg.balance_loss_coefficient > 0.0) loss = add(loss, scale(balance, cfg.balance_loss_coefficient));
  }
  out.loss = loss.item();
  if (!std::isfinite(out.loss)) return out;
  tape.backward(loss);
  optimizer.step(params);
  return out;
}

double split_mse(const StyleModel& model, const Dataset& data, Split split) {
  return evaluate(model, data, split).mse;
}

}  // namespace

TrainResult resume(Checkpoint start, const Dataset& data, std::size_t steps) {
  const TrainConfig& cfg = start.train;
  cfg.validate();
  const ModelConfig& mc = start.model.config();
  const BenchmarkSpec& spec = data.spec();
  if (mc.in_channels != spec.channels || mc.out_channels != spec.channels || mc.content_dim != spec.content_dim) {
    throw ConfigError("model dimensions do not match the dataset (channels " + std::to_string(spec.channels) +
                      ", content_dim " + std::to_string(spec.content_dim) + ")");
  }
  if (data.split(Split::kTrain).count == 0) throw InputError("train split is empty");

  Rng sampler;
  sampler.set_state(start.sampler_state);
  NoiseSource noise = NoiseSource::train(0);
  noise.rng().set_state(start.noise_state);
  const NamedTensors params = start.model.parameters();

  TrainResult result;
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t step = start.step;
    StepOutcome o = train_step(start.model, data, cfg, start.optimizer, sampler, noise, params);
    if (!std::isfinite(o.loss)) {
      throw DivergenceError("training diverged at step " + std::to_string(step) + ": loss is " +
                                std::to_string(o.loss),
                            static_cast<long>(step));
    }
    result.log.push_back(TrainLogRow{step, o.loss, o.balance, std::move(o.utilization)});
    ++start.step;
    if (cfg.eval_every > 0 && start.step % cfg.eval_every == 0) {
      for (Split sp : {Split::kEvalSeen, Split::kEvalUnseen}) {
        if (data.has_split(sp)) result.evals.push_back(EvalLogRow{start.step, to_string(sp), split_mse(start.model, data, sp)});
      }
    }
  }
  start.sampler_state = sampler.state();
  start.noise_state = noise.rng().state();
  result.checkpoint = std::move(start);
  return result;
}

TrainResult train(const ModelConfig& model_cfg, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  Checkpoint start;
  start.model = StyleModel::init(model_cfg);
  start.train = cfg;
  start.optimizer = Optimizer(cfg);
  start.sampler_state = Rng(mix_seed(cfg.seed, kSamplerStream)).state();
  start.noise_state = Rng(mix_seed(cfg.seed, kNoiseStream)).state();
  start.data_spec = to_json(data.spec());
  return resume(std::move(start), data, cfg.steps);
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::ostringstream out;
  out.precision(17);
  const std::size_t n = log.empty() ? 0 : log.front().utilization.size();
  out << "step,loss,balance_loss";
  for (std::size_t i = 0; i < n; ++i) out << ",util_" << i;
  out << '\n';
  for (const TrainLogRow& row : log) {
    out << row.step << ',' << row.loss << ',' << row.balance_loss;
    for (double u : row.utilization) out << ',' << u;
    out << '\n';
  }
  return out.str();
}

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << train_log_csv(log);
}

nlohmann::json MetricsBundle::to_json() const {
  return nlohmann::json{{"cosine_similarity", cosine_similarity},
                        {"distortion", distortion},
                        {"frame_error", frame_error},
                        {"mse", mse},
                        {"samples", samples}};
}

MetricsBundle score_sequence(std::span<const double> predicted, std::span<const double> target, std::size_t frames,
                             std::size_t channels) {
  if (predicted.size() != target.size() || predicted.size() != frames * channels) {
    throw DimensionError("score_sequence: prediction and target sizes differ");
  }
  MetricsBundle m;
  m.samples = 1;
  // Cosine on per-channel mean-removed contours.
  double dot = 0.0, pp = 0.0, tt = 0.0;
  for (std::size_t f = 0; f < channels; ++f) {
    double pm = 0.0, tm = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      pm += predicted[t * channels + f];
      tm += target[t * channels + f];
    }
    pm /= static_cast<double>(frames);
    tm /= static_cast<double>(frames);
    for (std::size_t t = 0; t < frames; ++t) {
      const double p = predicted[t * channels + f] - pm;
      const double q = target[t * channels + f] - tm;
      dot += p * q;
      pp += p * p;
      tt += q * q;
    }
  }
  if (pp == 0.0 && tt == 0.0) {
    m.cosine_similarity = 1.0;
  } else if (pp == 0.0 || tt == 0.0) {
    m.cosine_similarity = 0.0;
  } else {
    m.cosine_similarity = dot / std::sqrt(pp * tt);
  }
  double sq_total = 0.0, rms_total = 0.0;
  std::size_t errors = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    double frame_sq = 0.0;
    for (std::size_t f = 0; f < channels; ++f) {
      const double d = predicted[t * channels + f] - target[t * channels + f];
      frame_sq += d * d;
    }
    sq_total += frame_sq;
    rms_total += std::sqrt(frame_sq / static_cast<double>(channels));
    const double ref = target[t * channels];
    if (std::abs(predicted[t * channels] - ref) > kFrameErrorThreshold * std::abs(ref)) ++errors;
  }
  m.distortion = rms_total / static_cast<double>(frames);
  m.frame_error = static_cast<double>(errors) / static_cast<double>(frames);
  m.mse = sq_total / static_cast<double>(frames * channels);
  return m;
}

MetricsBundle average_metrics(std::span<const MetricsBundle> per_sample) {
  MetricsBundle avg;
  for (const MetricsBundle& m : per_sample) {
    avg.cosine_similarity += m.cosine_similarity;
    avg.distortion += m.distortion;
    avg.frame_error += m.frame_error;
    avg.mse += m.mse;
    avg.samples += m.samples;
  }
  if (!per_sample.empty()) {
    const double n = static_cast<double>(per_sample.size());
    avg.cosine_similarity /= n;
    avg.distortion /= n;
    avg.frame_error /= n;
    avg.mse /= n;
  }
  return avg;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

MetricsBundle evaluate(const StyleModel& model, const Dataset& data, Split split, std::size_t k_override,
                       std::size_t threads) {
  const SplitData& d = data.split(split);
  const BenchmarkSpec& spec = data.spec();
  if (k_override > 0 && model.config().variant == Variant::kMoe && k_override > model.config().gating.n_experts) {
    throw ConfigError("k override " + std::to_string(k_override) + " exceeds n_experts");
  }
  std::vector<MetricsBundle> per_sample(d.count);
  parallel_for(d.count, threads, [&](std::size_t i) {
    NoiseSource off = NoiseSource::eval();
    Tensor y = model.forward(data.reference(split, i), data.content(split, i), ForwardMode::kInfer, off,
                             model.config().variant == Variant::kMoe ? k_override : 0);
    const std::size_t block = spec.frames * spec.channels;
    per_sample[i] = score_sequence(y.data(), std::span<const double>(d.target.data() + i * block, block),
                                   spec.frames, spec.channels);
  });
  return average_metrics(per_sample);
}

nlohmann::json to_json(const ModelConfig& cfg) {
  std::vector<std::string> levels;
  for (Resolution r : cfg.levels) levels.push_back(to_string(r));
  return nlohmann::json{{"variant", to_string(cfg.variant)},
                        {"levels", levels},
                        {"in_channels", cfg.in_channels},
                        {"content_dim", cfg.content_dim},
                        {"out_channels", cfg.out_channels},
                        {"expert_channels", cfg.expert_conv.channels},
                        {"kernel_width", cfg.expert_conv.kernel_width},
                        {"stride", cfg.expert_conv.stride},
                        {"embed_dim", cfg.embed_dim},
                        {"n_experts", cfg.gating.n_experts},
                        {"k_train", cfg.gating.k_train},
                        {"k_infer", cfg.gating.k_infer},
                        {"noisy", cfg.gating.noisy},
                        {"noise_grad", cfg.gating.noise_grad},
                        {"router_channels", cfg.gating.router_hidden.channels},
                        {"router_kernel_width", cfg.gating.router_hidden.kernel_width},
                        {"router_stride", cfg.gating.router_hidden.stride},
                        {"decoder_hidden", cfg.decoder_hidden},
                        {"positional_features", cfg.positional_features},
                        {"seed", cfg.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"variant", "levels", "in_channels", "content_dim", "out_channels", "expert_channels", "kernel_width",
                  "stride", "embed_dim", "n_experts", "k_train", "k_infer", "noisy", "noise_grad", "router_channels",
                  "router_kernel_width", "router_stride", "decoder_hidden", "positional_features", "seed"},
                 "model");
  ModelConfig cfg;
  try {
    if (j.contains("variant")) cfg.variant = variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("levels")) {
      cfg.levels.clear();
      for (const auto& name : j.at("levels")) cfg.levels.push_back(resolution_from_string(name.get<std::string>()));
    }
    read_key(j, "in_channels", cfg.in_channels);
    read_key(j, "content_dim", cfg.content_dim);
    read_key(j, "out_channels", cfg.out_channels);
    read_key(j, "expert_channels", cfg.expert_conv.channels);
    read_key(j, "kernel_width", cfg.expert_conv.kernel_width);
    read_key(j, "stride", cfg.expert_conv.stride);
    read_key(j, "embed_dim", cfg.embed_dim);
    read_key(j, "n_experts", cfg.gating.n_experts);
    read_key(j, "k_train", cfg.gating.k_train);
    read_key(j, "k_infer", cfg.gating.k_infer);
    read_key(j, "noisy", cfg.gating.noisy);
    read_key(j, "noise_grad", cfg.gating.noise_grad);
    read_key(j, "router_channels", cfg.gating.router_hidden.channels);
    read_key(j, "router_kernel_width", cfg.gating.router_hidden.kernel_width);
    read_key(j, "router_stride", cfg.gating.router_hidden.stride);
    read_key(j, "decoder_hidden", cfg.decoder_hidden);
    read_key(j, "positional_features", cfg.positional_features);
    read_key(j, "seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return cfg;
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return nlohmann::json{{"steps", cfg.steps},
                        {"batch_size", cfg.batch_size},
                        {"learning_rate", cfg.learning_rate},
                        {"optimizer", to_string(cfg.optimizer)},
                        {"momentum", cfg.momentum},
                        {"beta1", cfg.beta1},
                        {"beta2", cfg.beta2},
                        {"epsilon", cfg.epsilon},
                        {"balance_loss_coefficient", cfg.balance_loss_coefficient},
                        {"eval_every", cfg.eval_every},
                        {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  reject_unknown(j,
                 {"steps", "batch_size", "learning_rate", "optimizer", "momentum", "beta1", "beta2", "epsilon",
                  "balance_loss_coefficient", "eval_every", "seed"},
                 "train");
  TrainConfig cfg;
  try {
    read_key(j, "steps", cfg.steps);
    read_key(j, "batch_size", cfg.batch_size);
    read_key(j, "learning_rate", cfg.learning_rate);
    if (j.contains("optimizer")) cfg.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
    read_key(j, "momentum", cfg.momentum);
    read_key(j, "beta1", cfg.beta1);
    read_key(j, "beta2", cfg.beta2);
    read_key(j, "epsilon", cfg.epsilon);
    read_key(j, "balance_loss_coefficient", cfg.balance_loss_coefficient);
    read_key(j, "eval_every", cfg.eval_every);
    read_key(j, "seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  return cfg;
}

nlohmann::json gating_json(const GatingConfig& g) {
  return nlohmann::json{{"n_experts", g.n_experts}, {"k_train", g.k_train},   {"k_infer", g.k_infer},
                        {"noisy", g.noisy},         {"noise_grad", g.noise_grad}, {"seed", g.seed}};
}

void Checkpoint::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  nlohmann::json tensors = nlohmann::json::array();
  std::ofstream blob(dir / "params.bin", std::ios::binary | std::ios::trunc);
  if (!blob) throw Error("cannot write " + (dir / "params.bin").string());
  std::size_t offset = 0;
  for (const auto& [name, t] : model.parameters()) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    append_f64(blob, t.data());
    offset += t.numel();
  }
  nlohmann::json opt_slots = nlohmann::json::array();
  for (const auto& [name, values] : optimizer.state()) {
    opt_slots.push_back({{"name", name}, {"size", values.size()}, {"offset", offset}});
    append_f64(blob, values);
    offset += values.size();
  }
  if (!blob) throw Error("write failed for params.bin");
  nlohmann::json gating = nlohmann::json::array();
  for (const StyleLayer& level : model.encoder().levels()) {
    nlohmann::json g = gating_json(level.gating());
    g["resolution"] = to_string(level.resolution());
    g["expert_arch"] = level.experts().front().arch().serialize();
    gating.push_back(g);
  }
  const nlohmann::json manifest{{"format", "stylegate-checkpoint"},
                                {"version", kCheckpointVersion},
                                {"step", step},
                                {"model", to_json(model.config())},
                                {"gating", gating},
                                {"train", to_json(train)},
                                {"data_spec", data_spec},
                                {"tensors", tensors},
                                {"optimizer", {{"kind", to_string(train.optimizer)},
                                               {"updates", optimizer.updates()},
                                               {"slots", opt_slots}}},
                                {"rng", {{"sampler", sampler_state}, {"noise", noise_state}}},
                                {"blob", {{"path", "params.bin"}, {"dtype", "float64-le"}, {"count", offset}}}};
  write_json(dir / "checkpoint.json", manifest);
}

Checkpoint Checkpoint::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw MissingFileError("missing checkpoint directory " + dir.string());
  const nlohmann::json m = read_json(dir / "checkpoint.json");
  if (m.value("format", "") != "stylegate-checkpoint") throw FormatError(dir.string() + " is not a checkpoint");
  if (m.at("version").get<int>() != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + m.at("version").dump());
  }
  Checkpoint ckpt;
  try {
    ckpt.model = StyleModel::init(model_config_from_json(m.at("model")));
    ckpt.train = train_config_from_json(m.at("train"));
    ckpt.optimizer = Optimizer(ckpt.train);
    ckpt.step = m.at("step").get<std::size_t>();
    ckpt.sampler_state = m.at("rng").at("sampler").get<std::string>();
    ckpt.noise_state = m.at("rng").at("noise").get<std::string>();
    ckpt.data_spec = m.at("data_spec");
    const std::size_t count = m.at("blob").at("count").get<std::size_t>();
    const std::vector<double> blob = read_f64(dir / "params.bin", count);
    NamedTensors params = ckpt.model.parameters();
    const auto& tensors = m.at("tensors");
    if (tensors.size() != params.size()) {
      throw FormatError("checkpoint holds " + std::to_string(tensors.size()) + " tensors, model has " +
                        std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& [name, t] = params[i];
      if (tensors[i].at("name").get<std::string>() != name || tensors[i].at("shape").get<Shape>() != t.shape()) {
        throw FormatError("checkpoint tensor " + tensors[i].at("name").get<std::string>() + " does not match " +
                          name + " " + shape_string(t.shape()));
      }
      const std::size_t offset = tensors[i].at("offset").get<std::size_t>();
      if (offset + t.numel() > count) throw FormatError("tensor " + name + " runs past the blob");
      std::copy_n(blob.begin() + static_cast<long>(offset), t.numel(), t.mutable_data().begin());
    }
    std::map<std::string, std::vector<double>> state;
    for (const auto& slot : m.at("optimizer").at("slots")) {
      const std::size_t offset = slot.at("offset").get<std::size_t>();
      const std::size_t size = slot.at("size").get<std::size_t>();
      if (offset + size > count) throw FormatError("optimizer slot runs past the blob");
      state[slot.at("name").get<std::string>()] =
          std::vector<double>(blob.begin() + static_cast<long>(offset), blob.begin() + static_cast<long>(offset + size));
    }
    ckpt.optimizer.restore(m.at("optimizer").at("updates").get<long>(), std::move(state));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint manifest: ") + e.what());
  }
  return ckpt;
}

}  // namespace stylegate
