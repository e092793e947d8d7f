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
#include <string>
#include <utility>
#include <vector>

#include "stylegate/ops.h"
#include "stylegate/rng.h"
#include "stylegate/tensor.h"

namespace stylegate {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct ConvStackSpec {
  std::vector<std::size_t> channels{32, 32};
  std::size_t kernel_width = 3;
  std::size_t stride = 1;

  bool operator==(const ConvStackSpec&) const = default;
  std::size_t output_channels(std::size_t in_channels) const {
    return channels.empty() ? in_channels : channels.back();
  }
};

struct ConvLayer {
  Tensor kernel;  // [K x W x F]
  Tensor bias;    // [K]
};

// conv -> bias -> relu, repeated for every entry of ConvStackSpec::channels.
class ConvStack {
 public:
  ConvStack() = default;
  static ConvStack init(std::size_t in_channels, const ConvStackSpec& spec, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, NamedTensors& out) const;

  const std::vector<ConvLayer>& layers() const { return layers_; }
  std::vector<ConvLayer>& layers() { return layers_; }

 private:
  std::vector<ConvLayer> layers_;
  std::size_t stride_ = 1;
};

struct Dense {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  static Dense init(std::size_t in, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(const std::string& prefix, NamedTensors& out) const;
};

std::size_t count_parameters(const NamedTensors& params);

}  // namespace stylegate
