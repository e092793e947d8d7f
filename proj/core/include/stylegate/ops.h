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
#include <span>
#include <vector>

#include "stylegate/rng.h"
#include "stylegate/tensor.h"

namespace stylegate {

// Half-open frame range [begin, end).
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Segment&) const = default;
};

// [m x p] * [p x q] -> [m x q].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
// Multiplies every element of `a` by the single element of `s`.
Tensor scale_by(const Tensor& a, const Tensor& s);
Tensor add_n(std::span<const Tensor> terms);

// Adds a length-n bias to every row of an [m x n] tensor (or to an [n] vector).
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor relu(const Tensor& v);
// ln(1 + e^x), evaluated as max(x, 0) + ln(1 + e^-|x|).
Tensor softplus(const Tensor& v);
// Softmax over a vector that may hold -inf entries; those map to exactly 0.
// Throws InputError("no selectable expert") when every entry is -inf.
Tensor softmax(const Tensor& v);

// "Same" zero-padded 1-D convolution over a [T x F] sequence with kernels
// [K x W x F]. Output is [ceil(T / stride) x K].
Tensor conv1d(const Tensor& x, const Tensor& kernels, std::size_t stride = 1);

// [T x F] -> [F].
Tensor mean_pool(const Tensor& x);
// [T x F] -> [S x F], one mean per segment.
Tensor segment_mean_pool(const Tensor& x, std::span<const Segment> segments);

// x: [in] or [m x in]; weight: [in x out]; bias: [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Mean squared error, averaged over all elements. Returns a [1] tensor.
Tensor mse(const Tensor& pred, const Tensor& target);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Horizontal concatenation of [m x n_i] blocks.
Tensor concat_cols(std::span<const Tensor> blocks);
// [D] (or [1 x D]) -> [rows x D].
Tensor repeat_rows(const Tensor& v, std::size_t rows);
// Row r of the result is row index[r] of `m`, or zeros when index[r] < 0.
Tensor gather_rows(const Tensor& m, std::span<const long> index);
// Element i as a [1] tensor.
Tensor select(const Tensor& v, std::size_t i);
Tensor reshape(const Tensor& x, Shape shape);

// Uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)].
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace stylegate
