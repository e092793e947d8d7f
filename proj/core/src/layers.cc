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

#include "stylegate/layers.h"

namespace stylegate {

ConvStack ConvStack::init(std::size_t in_channels, const ConvStackSpec& spec, Rng& rng) {
  ConvStack stack;
  stack.stride_ = spec.stride;
  std::size_t fan = in_channels;
  for (std::size_t out : spec.channels) {
    const std::size_t fan_in = fan * spec.kernel_width;
    ConvLayer layer;
    layer.kernel = init_uniform({out, spec.kernel_width, fan}, fan_in, rng);
    layer.bias = init_uniform({out}, fan_in, rng);
    stack.layers_.push_back(std::move(layer));
    fan = out;
  }
  return stack;
}

Tensor ConvStack::forward(const Tensor& x) const {
  Tensor h = x;
  for (const ConvLayer& layer : layers_) h = relu(add_bias(conv1d(h, layer.kernel, stride_), layer.bias));
  return h;
}

void ConvStack::collect(const std::string& prefix, NamedTensors& out) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string base = prefix + "conv" + std::to_string(i) + ".";
    out.emplace_back(base + "kernel", layers_[i].kernel);
    out.emplace_back(base + "bias", layers_[i].bias);
  }
}

Dense Dense::init(std::size_t in, std::size_t out, Rng& rng) {
  return Dense{init_uniform({in, out}, in, rng), init_uniform({out}, in, rng)};
}

void Dense::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + "weight", weight);
  out.emplace_back(prefix + "bias", bias);
}

std::size_t count_parameters(const NamedTensors& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

}  // namespace stylegate
