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

#include "stylegate/routing.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "stylegate/errors.h"
#include "stylegate/ops.h"

namespace stylegate {

void GatingConfig::validate() const {
  if (n_experts == 0) throw ConfigError("n_experts must be at least 1");
  if (k_train < 1 || k_train > n_experts) {
    throw ConfigError("k_train=" + std::to_string(k_train) + " outside [1, " + std::to_string(n_experts) + "]");
  }
  if (k_infer < 1 || k_infer > n_experts) {
    throw ConfigError("k_infer=" + std::to_string(k_infer) + " outside [1, " + std::to_string(n_experts) + "]");
  }
}

RouterParams RouterParams::init(std::size_t in_channels, const GatingConfig& cfg, Rng& rng) {
  RouterParams p;
  p.conv_stack = ConvStack::init(in_channels, cfg.router_hidden, rng);
  const std::size_t hidden = cfg.router_hidden.output_channels(in_channels);
  p.final_linear = Dense::init(hidden, cfg.n_experts, rng);
  p.w_noise = init_uniform({hidden, cfg.n_experts}, hidden, rng);
  return p;
}

void RouterParams::collect(const std::string& prefix, NamedTensors& out) const {
  conv_stack.collect(prefix, out);
  final_linear.collect(prefix + "linear.", out);
  out.emplace_back(prefix + "w_noise", w_noise);
}

RouterOutput router_forward(const ReferenceFeatures& x, const RouterParams& p) {
  x.validate();
  Tensor pooled = mean_pool(p.conv_stack.forward(x.frames));
  return RouterOutput{p.final_linear.forward(pooled), pooled};
}

std::vector<double> NoiseSource::draw(std::size_t n) {
  std::vector<double> out(n, 0.0);
  switch (mode_) {
    case Mode::kEval:
      break;
    case Mode::kTrain:
      for (double& v : out) v = rng_.normal();
      break;
    case Mode::kReplay:
      if (cursor_ + n > replay_.size()) throw InputError("replay noise source exhausted");
      std::copy_n(replay_.begin() + static_cast<long>(cursor_), n, out.begin());
      cursor_ += n;
      break;
  }
  return out;
}

GateDecision GateDecision::from_weights(std::vector<double> weights) {
  GateDecision d;
  const std::size_t n = weights.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] != 0.0) d.selected.push_back(i);
  }
  d.weights = Tensor::from({n}, std::move(weights));
  d.clean_logits = Tensor::zeros({n});
  d.noise_scale = Tensor::zeros({n});
  d.noisy_logits = Tensor::zeros({n});
  return d;
}

std::vector<std::size_t> top_k_indices(std::span<const double> v, std::size_t k) {
  if (k < 1 || k > v.size()) {
    throw ConfigError("k=" + std::to_string(k) + " outside [1, " + std::to_string(v.size()) + "]");
  }
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  order.resize(k);
  return order;
}

Tensor keep_top_k(const Tensor& v, std::size_t k) {
  const std::vector<std::size_t> keep = top_k_indices(v.data(), k);
  std::vector<double> out(v.numel(), -std::numeric_limits<double>::infinity());
  for (std::size_t i : keep) out[i] = v[i];
  Tensor y = make_result(v.shape(), std::move(out), any_requires_grad({&v}));
  if (y.requires_grad()) {
    Tape::current()->record(y, [pv = v.shared_impl(), keep](const detail::TensorImpl& o) {
      auto g = pv->ensure_grad();
      for (std::size_t i : keep) g[i] += o.grad[i];
    });
  }
  return y;
}

GateDecision noisy_gate(const RouterOutput& routed, const RouterParams& p, const GatingConfig& cfg,
                        NoiseSource& noise, std::size_t k) {
  const std::size_t n = routed.clean_logits.numel();
  if (n != cfg.n_experts || p.n_experts() != n) {
    throw DimensionError("router emits " + std::to_string(n) + " logits for " + std::to_string(cfg.n_experts) +
                         " experts");
  }
  GateDecision d;
  d.clean_logits = routed.clean_logits;
  d.noise_scale = softplus(linear(routed.pooled, p.w_noise, Tensor::zeros({n})));
  d.noisy_logits = d.clean_logits;
  if (cfg.noisy && noise.mode() != NoiseSource::Mode::kEval) {
    Tensor eps = Tensor::from({n}, noise.draw(n));
    Tensor term = mul(eps, d.noise_scale);
    if (!cfg.noise_grad) term = term.detach();
    d.noisy_logits = add(d.clean_logits, term);
  }
  Tensor masked = keep_top_k(d.noisy_logits, k);
  d.selected = top_k_indices(d.noisy_logits.data(), k);
  d.weights = softmax(masked);
  return d;
}

GateDecision noisy_gate(const ReferenceFeatures& x, const RouterParams& p, const GatingConfig& cfg,
                        NoiseSource& noise, std::size_t k) {
  return noisy_gate(router_forward(x, p), p, cfg, noise, k);
}

Tensor moe_forward(const ReferenceFeatures& x, std::span<const StyleExpert> experts, const GateDecision& gate,
                   ExpertEvalCounter* counter) {
  if (gate.weights.numel() != experts.size()) {
    throw DimensionError("gate has " + std::to_string(gate.weights.numel()) + " weights for " +
                         std::to_string(experts.size()) + " experts");
  }
  std::vector<Tensor> terms;
  for (std::size_t i : gate.selected) {
    if (gate.weights[i] == 0.0) continue;
    Tensor e = expert_forward(x, experts[i]);
    if (counter) counter->add();
    terms.push_back(scale_by(e, select(gate.weights, i)));
  }
  if (terms.empty()) throw InputError("no selectable expert");
  return terms.size() == 1 ? terms[0] : add_n(terms);
}

Tensor ensemble_forward(const ReferenceFeatures& x, std::span<const StyleExpert> experts,
                        ExpertEvalCounter* counter) {
  if (experts.empty()) throw ConfigError("ensemble needs at least one expert");
  std::vector<Tensor> outputs;
  outputs.reserve(experts.size());
  for (const StyleExpert& e : experts) {
    outputs.push_back(expert_forward(x, e));
    if (counter) counter->add();
  }
  Tensor total = outputs.size() == 1 ? outputs[0] : add_n(outputs);
  return scale(total, 1.0 / static_cast<double>(experts.size()));
}

Tensor importance_loss(std::span<const GateDecision> decisions) {
  if (decisions.empty()) throw InputError("importance_loss: empty batch");
  std::vector<Tensor> weights;
  weights.reserve(decisions.size());
  for (const GateDecision& d : decisions) weights.push_back(d.weights);
  Tensor importance = weights.size() == 1 ? weights[0] : add_n(weights);

  const std::size_t n = importance.numel();
  const double mu = std::accumulate(importance.data().begin(), importance.data().end(), 0.0) / n;
  double var = 0.0;
  for (double v : importance.data()) var += (v - mu) * (v - mu);
  var /= static_cast<double>(n);
  const double eps = 1e-10;
  const double value = var / (mu * mu + eps);
  Tensor y = make_result({1}, {value}, any_requires_grad({&importance}));
  if (y.requires_grad()) {
    Tape::current()->record(y, [pi = importance.shared_impl(), mu, var, n, eps](const detail::TensorImpl& o) {
      auto g = pi->ensure_grad();
      const double denom = mu * mu + eps;
      for (std::size_t i = 0; i < n; ++i) {
        const double dvar = 2.0 * (pi->data[i] - mu) / static_cast<double>(n);
        const double dmu = 1.0 / static_cast<double>(n);
        g[i] += o.grad[0] * (dvar / denom - var * 2.0 * mu * dmu / (denom * denom));
      }
    });
  }
  return y;
}

}  // namespace stylegate
