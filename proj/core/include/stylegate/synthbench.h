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
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stylegate/expert.h"
#include "stylegate/tensor.h"

namespace stylegate {

enum class Split { kTrain, kEvalSeen, kEvalUnseen };

std::string to_string(Split s);
Split split_from_string(const std::string& name);

// A latent style distribution (the emotion analog) and how it renders into
// the target: style part = gain * (a_f . s) * sin(2 pi freq t / T + psi_f)
// + offset * b_f.
struct StyleCluster {
  int id = 0;
  std::vector<double> mean;    // [S]
  std::vector<double> spread;  // [S], per-dimension std
  double gain = 1.0;
  double offset = 0.0;
  double frequency = 1.0;
  bool unseen = false;

  bool operator==(const StyleCluster&) const = default;
};

struct BenchmarkSpec {
  std::size_t latent_dim = 4;
  std::size_t n_train_clusters = 4;
  std::size_t n_unseen_clusters = 2;
  std::size_t train_count = 2000;
  std::size_t eval_count = 400;  // split evenly between eval_seen and eval_unseen
  std::size_t frames = 32;
  std::size_t channels = 8;
  std::size_t content_dim = 8;
  std::size_t n_contents = 40;
  std::size_t n_segments = 4;
  double separation = 4.0;  // min mean distance, in units of the largest spread
  double spread = 0.25;
  double mean_range = 1.5;  // generated means lie in [-range, range]^S
  double reference_noise = 0.05;
  double target_noise = 0.05;
  // Latent dimensions that drive the reference rendering; empty means all.
  std::vector<std::size_t> observed_latent_dims;
  // When set, references also carry the cluster's modulation pattern through
  // their own basis, so gain, offset and frequency are observable.
  bool reference_rendering = true;
  // Explicit clusters replace the generated ones when nonempty.
  std::vector<StyleCluster> clusters;
  std::uint64_t seed = 0;

  bool operator==(const BenchmarkSpec&) const = default;
};

// Fixed rendering functions shared by every sample of a dataset.
struct RenderBasis {
  std::vector<double> ref_level;   // [S x F]
  std::vector<double> ref_swing;   // [S x F]
  std::vector<double> ref_phase;   // [S x F]
  std::vector<double> content_map; // [F x C]
  std::vector<double> mod_weight;  // [F x S]
  std::vector<double> mod_phase;   // [F]
  std::vector<double> offset_dir;  // [F]
  std::vector<double> ref_mod_weight;  // [F x S]
  std::vector<double> ref_mod_phase;   // [F]
  std::vector<double> ref_offset_dir;  // [F]

  bool operator==(const RenderBasis&) const = default;
};

struct SplitData {
  Split split = Split::kTrain;
  std::size_t count = 0;
  std::vector<double> content;    // [N x C]
  std::vector<double> reference;  // [N x T x F]
  std::vector<double> target;     // [N x T x F]
  std::vector<double> latent;     // [N x S]
  std::vector<int> cluster;       // [N]
  std::vector<int> content_id;    // [N]
  std::vector<Segment> segments;  // [N x n_segments]
};

class Dataset {
 public:
  const BenchmarkSpec& spec() const { return spec_; }
  const RenderBasis& basis() const { return basis_; }
  const std::vector<StyleCluster>& clusters() const { return clusters_; }
  const std::vector<std::vector<double>>& contents() const { return contents_; }
  const SplitData& split(Split s) const;
  bool has_split(Split s) const;

  ReferenceFeatures reference(Split s, std::size_t i) const;
  Tensor content(Split s, std::size_t i) const;
  Tensor target(Split s, std::size_t i) const;

  // Manifest JSON plus per-split little-endian float64 files.
  void save(const std::filesystem::path& dir) const;
  static Dataset load(const std::filesystem::path& dir);
  nlohmann::json manifest() const;

  friend Dataset generate_dataset(const BenchmarkSpec& spec);

 private:
  BenchmarkSpec spec_;
  RenderBasis basis_;
  std::vector<StyleCluster> clusters_;
  std::vector<std::vector<double>> contents_;
  std::vector<SplitData> splits_;
};

// Throws ConfigError on fewer than two train clusters, no unseen cluster, or
// violated cluster separation.
Dataset generate_dataset(const BenchmarkSpec& spec);

// Noise-free style part of the target for latent style `s` in `cluster`.
std::vector<double> render_style(const BenchmarkSpec& spec, const RenderBasis& basis, const StyleCluster& cluster,
                                 std::span<const double> s);

// Best MSE of any predictor that sees only the content, computed from the
// cluster mixture of the split: within-cluster style variance plus the spread
// of cluster means around the mixture mean, plus target noise variance.
double averaged_style_floor(const Dataset& data, Split split);

// MSE of a predictor given the true latent style: least-squares fit of the
// target on the rendered style part with per-content intercepts.
double oracle_mse(const Dataset& data, Split split);

// Converts a JSON object to a spec; unknown keys raise ConfigError.
BenchmarkSpec benchmark_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BenchmarkSpec& spec);
nlohmann::json to_json(const StyleCluster& c);

}  // namespace stylegate
