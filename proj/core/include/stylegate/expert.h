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
#include <string>
#include <vector>

#include "stylegate/layers.h"
#include "stylegate/ops.h"
#include "stylegate/tensor.h"

namespace stylegate {

enum class Resolution { kSequence, kSegment, kFrame };

std::string to_string(Resolution r);
Resolution resolution_from_string(const std::string& name);

// A reference feature sequence x: [T x F] frames plus optional segment
// boundaries (the word-level analog).
struct ReferenceFeatures {
  Tensor frames;
  std::vector<Segment> segments;

  std::size_t length() const { return frames.defined() ? frames.dim(0) : 0; }
  std::size_t channels() const { return frames.dim(1); }

  // Throws InputError on an empty sequence or unsorted/overlapping segments.
  void validate() const;
  // Segment index of every frame, -1 for frames outside every segment.
  std::vector<long> frame_segments() const;
};

struct ExpertArch {
  std::size_t in_channels = 8;
  ConvStackSpec conv;
  std::size_t embed_dim = 16;
  Resolution pooling = Resolution::kSequence;

  bool operator==(const ExpertArch&) const = default;
  // Canonical text form; identical for every expert of a layer.
  std::string serialize() const;
  std::size_t parameter_count() const;
};

class StyleExpert {
 public:
  StyleExpert() = default;
  static StyleExpert init(const ExpertArch& arch, std::uint64_t seed);

  const ExpertArch& arch() const { return arch_; }
  void collect(const std::string& prefix, NamedTensors& out) const;
  NamedTensors parameters() const;

  ConvStack& conv() { return conv_; }
  Dense& projection() { return projection_; }
  const ConvStack& conv() const { return conv_; }
  const Dense& projection() const { return projection_; }

 private:
  ExpertArch arch_;
  ConvStack conv_;
  Dense projection_;
};

// conv stack -> pooling at the expert's resolution -> projection to D.
// Returns [1 x D] (sequence), [segments x D] (segment) or [T x D] (frame).
Tensor expert_forward(const ReferenceFeatures& x, const StyleExpert& e);

}  // namespace stylegate
