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

#include "stylegate/expert.h"

#include <sstream>

#include "stylegate/errors.h"

namespace stylegate {

std::string to_string(Resolution r) {
  switch (r) {
    case Resolution::kSequence:
      return "sequence";
    case Resolution::kSegment:
      return "segment";
    case Resolution::kFrame:
      return "frame";
  }
  return "unknown";
}

Resolution resolution_from_string(const std::string& name) {
  if (name == "sequence") return Resolution::kSequence;
  if (name == "segment") return Resolution::kSegment;
  if (name == "frame") return Resolution::kFrame;
  throw ConfigError("unknown resolution '" + name + "' (expected sequence, segment or frame)");
}

void ReferenceFeatures::validate() const {
  if (!frames.defined() || frames.rank() != 2 || frames.dim(0) == 0) {
    throw InputError("reference features must be a nonempty [T x F] sequence");
  }
  std::size_t cursor = 0;
  for (const Segment& s : segments) {
    if (s.begin < cursor || s.begin >= s.end || s.end > length()) {
      throw InputError("segments must be sorted, disjoint and within [0, " + std::to_string(length()) + ")");
    }
    cursor = s.end;
  }
}

std::vector<long> ReferenceFeatures::frame_segments() const {
  std::vector<long> index(length(), -1);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    for (std::size_t t = segments[s].begin; t < segments[s].end; ++t) index[t] = static_cast<long>(s);
  }
  return index;
}

std::string ExpertArch::serialize() const {
  std::ostringstream out;
  out << "{\"in_channels\":" << in_channels << ",\"channels\":[";
  for (std::size_t i = 0; i < conv.channels.size(); ++i) out << (i ? "," : "") << conv.channels[i];
  out << "],\"kernel_width\":" << conv.kernel_width << ",\"stride\":" << conv.stride
      << ",\"embed_dim\":" << embed_dim << ",\"pooling\":\"" << to_string(pooling) << "\"}";
  return out.str();
}

std::size_t ExpertArch::parameter_count() const {
  std::size_t n = 0;
  std::size_t fan = in_channels;
  for (std::size_t c : conv.channels) {
    n += c * conv.kernel_width * fan + c;
    fan = c;
  }
  return n + fan * embed_dim + embed_dim;
}

StyleExpert StyleExpert::init(const ExpertArch& arch, std::uint64_t seed) {
  if (arch.pooling != Resolution::kSequence && arch.conv.stride != 1) {
    throw ConfigError("segment and frame experts need conv stride 1");
  }
  Rng rng(seed);
  StyleExpert e;
  e.arch_ = arch;
  e.conv_ = ConvStack::init(arch.in_channels, arch.conv, rng);
  e.projection_ = Dense::init(arch.conv.output_channels(arch.in_channels), arch.embed_dim, rng);
  return e;
}

void StyleExpert::collect(const std::string& prefix, NamedTensors& out) const {
  conv_.collect(prefix, out);
  projection_.collect(prefix + "proj.", out);
}

NamedTensors StyleExpert::parameters() const {
  NamedTensors out;
  collect("", out);
  return out;
}

Tensor expert_forward(const ReferenceFeatures& x, const StyleExpert& e) {
  x.validate();
  if (x.channels() != e.arch().in_channels) {
    throw DimensionError("expert expects " + std::to_string(e.arch().in_channels) + " channels, got " +
                         shape_string(x.frames.shape()));
  }
  Tensor h = e.conv().forward(x.frames);
  Tensor pooled;
  switch (e.arch().pooling) {
    case Resolution::kSequence:
      pooled = reshape(mean_pool(h), {1, h.dim(1)});
      break;
    case Resolution::kSegment:
      if (x.segments.empty()) throw InputError("segment-resolution expert needs segment boundaries");
      pooled = segment_mean_pool(h, x.segments);
      break;
    case Resolution::kFrame:
      pooled = h;
      break;
  }
  return e.projection().forward(pooled);
}

}  // namespace stylegate
