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
#include <iterator>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "stylegate/errors.h"
#include "stylegate/synthbench.h"

namespace stylegate {
namespace {

namespace fs = std::filesystem;

BenchmarkSpec small_spec(std::uint64_t seed = 1) {
  BenchmarkSpec spec;
  spec.train_count = 120;
  spec.eval_count = 40;
  spec.frames = 12;
  spec.n_contents = 6;
  spec.seed = seed;
  return spec;
}

StyleCluster make_cluster(std::vector<double> mean, double spread, double gain, double offset, double freq,
                          bool unseen) {
  StyleCluster c;
  c.spread.assign(mean.size(), spread);
  c.mean = std::move(mean);
  c.gain = gain;
  c.offset = offset;
  c.frequency = freq;
  c.unseen = unseen;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("stylegate_synthbench_" + name);
  fs::remove_all(dir);
  return dir;
}

TEST(Generate, SameSeedGivesByteIdenticalFiles) {
  const fs::path a = scratch("a"), b = scratch("b");
  generate_dataset(small_spec(7)).save(a);
  generate_dataset(small_spec(7)).save(b);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    ++files;
    EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path();
  }
  EXPECT_EQ(files, 19u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Generate, DifferentSeedsDiffer) {
  EXPECT_NE(generate_dataset(small_spec(1)).split(Split::kTrain).target,
            generate_dataset(small_spec(2)).split(Split::kTrain).target);
}

TEST(Generate, VanishingSpreadMakesClusterReferencesIdentical) {
  BenchmarkSpec spec = small_spec();
  spec.spread = 1e-12;
  spec.reference_noise = 0.0;
  const Dataset data = generate_dataset(spec);
  const SplitData& d = data.split(Split::kTrain);
  const std::size_t block = spec.frames * spec.channels;
  std::map<int, std::size_t> first;
  for (std::size_t i = 0; i < d.count; ++i) {
    auto [it, fresh] = first.try_emplace(d.cluster[i], i);
    if (fresh) continue;
    for (std::size_t k = 0; k < block; ++k) {
      ASSERT_NEAR(d.reference[i * block + k], d.reference[it->second * block + k], 1e-9);
    }
  }
}

TEST(Generate, SplitDisciplineAndCounts) {
  const Dataset data = generate_dataset(small_spec());
  std::set<int> train_ids, unseen_ids, seen_ids;
  for (int c : data.split(Split::kTrain).cluster) train_ids.insert(c);
  for (int c : data.split(Split::kEvalSeen).cluster) seen_ids.insert(c);
  for (int c : data.split(Split::kEvalUnseen).cluster) unseen_ids.insert(c);
  for (int c : unseen_ids) EXPECT_EQ(train_ids.count(c), 0u);
  EXPECT_EQ(seen_ids, train_ids);
  EXPECT_EQ(train_ids.size(), 4u);
  EXPECT_EQ(unseen_ids.size(), 2u);
  EXPECT_EQ(data.split(Split::kTrain).count, 120u);
  EXPECT_EQ(data.split(Split::kEvalSeen).count + data.split(Split::kEvalUnseen).count, 40u);
}

TEST(Generate, ClusterSeparationHolds) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Dataset data = generate_dataset(small_spec(seed));
    const auto& cl = data.clusters();
    for (std::size_t i = 0; i < cl.size(); ++i) {
      for (std::size_t j = i + 1; j < cl.size(); ++j) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < cl[i].mean.size(); ++k) d2 += std::pow(cl[i].mean[k] - cl[j].mean[k], 2);
        EXPECT_GE(std::sqrt(d2), 4.0 * 0.25 - 1e-12);
      }
    }
  }
}

TEST(Generate, ConfigErrors) {
  BenchmarkSpec spec = small_spec();
  spec.clusters = {make_cluster({0, 0, 0, 0}, 0.25, 1, 0, 1, false), make_cluster({0.5, 0, 0, 0}, 0.25, 1, 0, 1, false),
                   make_cluster({5, 5, 5, 5}, 0.25, 1, 0, 1, true)};
  EXPECT_THROW(generate_dataset(spec), ConfigError);  // separation
  spec.clusters = {make_cluster({0, 0, 0, 0}, 0.25, 1, 0, 1, false), make_cluster({5, 5, 5, 5}, 0.25, 1, 0, 1, true)};
  EXPECT_THROW(generate_dataset(spec), ConfigError);  // one train cluster
  spec.clusters = {make_cluster({0, 0, 0, 0}, 0.25, 1, 0, 1, false), make_cluster({5, 5, 5, 5}, 0.25, 1, 0, 1, false)};
  EXPECT_THROW(generate_dataset(spec), ConfigError);  // no unseen cluster
  BenchmarkSpec packed = small_spec();
  packed.n_train_clusters = 40;
  packed.separation = 40.0;
  EXPECT_THROW(generate_dataset(packed), ConfigError);
}

// Least-squares one-vs-rest probe from content (plus intercept) to cluster id.
double content_probe_accuracy(const Dataset& data, Split split) {
  const SplitData& d = data.split(split);
  const std::size_t c_dim = data.spec().content_dim + 1;
  std::vector<int> ids;
  for (int c : d.cluster) {
    if (std::find(ids.begin(), ids.end(), c) == ids.end()) ids.push_back(c);
  }
  // Normal equations, solved by Gauss-Jordan on a small system.
  std::vector<double> xtx(c_dim * c_dim, 0.0), xty(c_dim * ids.size(), 0.0);
  auto row = [&](std::size_t i) {
    std::vector<double> r(d.content.begin() + i * (c_dim - 1), d.content.begin() + (i + 1) * (c_dim - 1));
    r.push_back(1.0);
    return r;
  };
  for (std::size_t i = 0; i < d.count; ++i) {
    const auto r = row(i);
    for (std::size_t a = 0; a < c_dim; ++a) {
      for (std::size_t b = 0; b < c_dim; ++b) xtx[a * c_dim + b] += r[a] * r[b];
      for (std::size_t c = 0; c < ids.size(); ++c) xty[a * ids.size() + c] += r[a] * (d.cluster[i] == ids[c]);
    }
  }
  for (std::size_t a = 0; a < c_dim; ++a) xtx[a * c_dim + a] += 1e-9;
  const std::size_t m = ids.size();
  for (std::size_t p = 0; p < c_dim; ++p) {
    std::size_t best = p;
    for (std::size_t r = p + 1; r < c_dim; ++r) {
      if (std::abs(xtx[r * c_dim + p]) > std::abs(xtx[best * c_dim + p])) best = r;
    }
    for (std::size_t k = 0; k < c_dim; ++k) std::swap(xtx[p * c_dim + k], xtx[best * c_dim + k]);
    for (std::size_t k = 0; k < m; ++k) std::swap(xty[p * m + k], xty[best * m + k]);
    const double piv = xtx[p * c_dim + p];
    for (std::size_t k = 0; k < c_dim; ++k) xtx[p * c_dim + k] /= piv;
    for (std::size_t k = 0; k < m; ++k) xty[p * m + k] /= piv;
    for (std::size_t r = 0; r < c_dim; ++r) {
      if (r == p) continue;
      const double f = xtx[r * c_dim + p];
      for (std::size_t k = 0; k < c_dim; ++k) xtx[r * c_dim + k] -= f * xtx[p * c_dim + k];
      for (std::size_t k = 0; k < m; ++k) xty[r * m + k] -= f * xty[p * m + k];
    }
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.count; ++i) {
    const auto r = row(i);
    std::size_t arg = 0;
    double best = -1e300;
    for (std::size_t c = 0; c < m; ++c) {
      double score = 0.0;
      for (std::size_t a = 0; a < c_dim; ++a) score += r[a] * xty[a * m + c];
      if (score > best) {
        best = score;
        arg = c;
      }
    }
    correct += d.cluster[i] == ids[arg];
  }
  return static_cast<double>(correct) / static_cast<double>(d.count);
}

TEST(Generate, ContentDoesNotRevealCluster) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    BenchmarkSpec spec;
    spec.seed = seed;
    const Dataset data = generate_dataset(spec);
    EXPECT_LE(content_probe_accuracy(data, Split::kTrain), 1.0 / 4.0 + 0.05) << "seed " << seed;
  }
}

TEST(Persist, RoundTripAndManifest) {
  const fs::path dir = scratch("persist");
  const Dataset data = generate_dataset(small_spec(3));
  data.save(dir);
  const Dataset back = Dataset::load(dir);
  EXPECT_EQ(back.spec(), data.spec());
  EXPECT_EQ(back.basis(), data.basis());
  EXPECT_EQ(back.clusters(), data.clusters());
  for (Split s : {Split::kTrain, Split::kEvalSeen, Split::kEvalUnseen}) {
    EXPECT_EQ(back.split(s).target, data.split(s).target);
    EXPECT_EQ(back.split(s).reference, data.split(s).reference);
    EXPECT_EQ(back.split(s).cluster, data.split(s).cluster);
    EXPECT_EQ(back.split(s).segments, data.split(s).segments);
  }
  const nlohmann::json m = data.manifest();
  EXPECT_EQ(m.at("counts").at("train"), 120);
  EXPECT_TRUE(m.contains("cluster_counts"));
  EXPECT_EQ(m.at("version"), 1);
  fs::remove_all(dir);
}

TEST(Persist, MissingAndCorruptFiles) {
  EXPECT_THROW(Dataset::load(scratch("absent")), MissingFileError);
  const fs::path dir = scratch("corrupt");
  generate_dataset(small_spec()).save(dir);
  fs::resize_file(dir / "train_target.f64", 16);
  EXPECT_THROW(Dataset::load(dir), FormatError);
  fs::remove(dir / "train_target.f64");
  EXPECT_THROW(Dataset::load(dir), MissingFileError);
  fs::remove_all(dir);
}

TEST(SpecJson, RoundTripAndUnknownKeys) {
  BenchmarkSpec spec = small_spec(9);
  spec.observed_latent_dims = {1, 2};
  spec.reference_rendering = false;
  EXPECT_EQ(benchmark_spec_from_json(to_json(spec)), spec);
  nlohmann::json j = to_json(spec);
  j["bogus"] = 1;
  EXPECT_THROW(benchmark_spec_from_json(j), ConfigError);
}

TEST(Floor, SingleTightClusterGivesNoiseVariance) {
  BenchmarkSpec spec = small_spec();
  spec.clusters = {make_cluster({0, 0, 0, 0}, 1e-9, 1.0, 0.3, 1, false),
                   make_cluster({3, 0, 0, 0}, 1e-9, -1.0, 0.1, 2, false),
                   make_cluster({0, 3, 0, 0}, 1e-9, 0.8, -0.5, 3, true)};
  spec.target_noise = 0.07;
  const Dataset data = generate_dataset(spec);
  EXPECT_NEAR(averaged_style_floor(data, Split::kEvalUnseen), 0.07 * 0.07, 1e-12);
}

TEST(Floor, SymmetricClustersGiveSquaredStylePlusNoise) {
  BenchmarkSpec spec = small_spec();
  spec.clusters = {make_cluster({1, -1, 0.5, 0}, 1e-9, 1.0, 0.6, 2, false),
                   make_cluster({-1, 1, -0.5, 0}, 1e-9, 1.0, -0.6, 2, false),
                   make_cluster({4, 4, 4, 4}, 1e-9, 1.0, 0.0, 1, true)};
  const Dataset data = generate_dataset(spec);
  const std::vector<double> v = render_style(spec, data.basis(), data.clusters()[0], data.clusters()[0].mean);
  const std::vector<double> w = render_style(spec, data.basis(), data.clusters()[1], data.clusters()[1].mean);
  double norm = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    ASSERT_NEAR(v[i], -w[i], 1e-12);
    norm += v[i] * v[i];
  }
  norm /= static_cast<double>(v.size());
  EXPECT_NEAR(averaged_style_floor(data, Split::kTrain), norm + spec.target_noise * spec.target_noise, 1e-9);
}

// Brute force: average the targets of every content over a large sample and
// score each sample against its content average, undoing the in-sample bias.
TEST(Floor, ThreeClustersMatchExhaustiveAveraging) {
  BenchmarkSpec spec;
  spec.frames = 16;
  spec.n_contents = 3;
  spec.train_count = 30000;
  spec.eval_count = 2;
  spec.spread = 0.4;
  spec.clusters = {make_cluster({1, 0, 0, 0}, 0.4, 1.2, 0.5, 1, false),
                   make_cluster({-1, 1, 1, 0}, 0.4, -0.7, -0.2, 2, false),
                   make_cluster({0, -1, -1, 1}, 0.4, 0.9, 0.9, 3, false),
                   make_cluster({3, 3, 3, 3}, 0.4, 1, 0, 1, true)};
  const Dataset data = generate_dataset(spec);
  const SplitData& d = data.split(Split::kTrain);
  const std::size_t cells = spec.frames * spec.channels;
  std::vector<std::vector<double>> avg(spec.n_contents, std::vector<double>(cells, 0.0));
  std::vector<std::size_t> members(spec.n_contents, 0);
  for (std::size_t i = 0; i < d.count; ++i) {
    const auto g = static_cast<std::size_t>(d.content_id[i]);
    ++members[g];
    for (std::size_t k = 0; k < cells; ++k) avg[g][k] += d.target[i * cells + k];
  }
  for (std::size_t g = 0; g < avg.size(); ++g) {
    for (double& v : avg[g]) v /= static_cast<double>(members[g]);
  }
  double sse = 0.0;
  for (std::size_t i = 0; i < d.count; ++i) {
    const auto g = static_cast<std::size_t>(d.content_id[i]);
    const double correction = static_cast<double>(members[g]) / static_cast<double>(members[g] - 1);
    for (std::size_t k = 0; k < cells; ++k) sse += correction * std::pow(d.target[i * cells + k] - avg[g][k], 2);
  }
  const double brute = sse / static_cast<double>(d.count * cells);
  const double analytic = averaged_style_floor(data, Split::kTrain);
  EXPECT_NEAR(brute, analytic, 0.03 * analytic) << "brute " << brute << " analytic " << analytic;
}

TEST(Floor, NeverBelowOracle) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    BenchmarkSpec spec = small_spec(seed);
    spec.train_count = 400;
    const Dataset data = generate_dataset(spec);
    for (Split s : {Split::kTrain, Split::kEvalSeen, Split::kEvalUnseen}) {
      EXPECT_GE(averaged_style_floor(data, s), oracle_mse(data, s)) << "seed " << seed << " " << to_string(s);
    }
  }
}

TEST(Oracle, RecoversNoiseLevelWithLatentKnown) {
  BenchmarkSpec spec = small_spec(4);
  spec.train_count = 2000;
  spec.n_contents = 5;
  const Dataset data = generate_dataset(spec);
  const double noise = spec.target_noise * spec.target_noise;
  EXPECT_NEAR(oracle_mse(data, Split::kTrain), noise, 0.1 * noise);
}

}  // namespace
}  // namespace stylegate
