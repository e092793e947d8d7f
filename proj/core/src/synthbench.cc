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

#include "stylegate/synthbench.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include "stylegate/binary_io.h"
#include "stylegate/errors.h"
#include "stylegate/rng.h"

namespace stylegate {

namespace {

constexpr int kFormatVersion = 1;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr std::uint64_t kClusterStream = 1;
constexpr std::uint64_t kBasisStream = 2;
constexpr std::uint64_t kContentStream = 3;
constexpr std::uint64_t kSplitStream = 10;

const Split kAllSplits[] = {Split::kTrain, Split::kEvalSeen, Split::kEvalUnseen};

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d);
}

double max_spread(const std::vector<StyleCluster>& clusters) {
  double m = 0.0;
  for (const StyleCluster& c : clusters) {
    for (double s : c.spread) m = std::max(m, s);
  }
  return m;
}

void check_separation(const std::vector<StyleCluster>& clusters, double factor) {
  const double needed = factor * max_spread(clusters);
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    for (std::size_t j = i + 1; j < clusters.size(); ++j) {
      const double d = distance(clusters[i].mean, clusters[j].mean);
      if (d < needed) {
        throw ConfigError("clusters " + std::to_string(i) + " and " + std::to_string(j) + " are " +
                          std::to_string(d) + " apart, need at least " + std::to_string(needed));
      }
    }
  }
}

void validate_spec(const BenchmarkSpec& spec) {
  if (spec.latent_dim == 0 || spec.frames == 0 || spec.channels == 0 || spec.content_dim == 0 ||
      spec.n_contents == 0) {
    throw ConfigError("benchmark dimensions must be positive");
  }
  if (spec.n_segments == 0 || spec.n_segments > spec.frames) {
    throw ConfigError("n_segments must lie in [1, frames]");
  }
  if (spec.train_count == 0 || spec.eval_count < 2) throw ConfigError("train_count >= 1 and eval_count >= 2 required");
  if (spec.reference_noise < 0.0 || spec.target_noise < 0.0) throw ConfigError("noise levels must be >= 0");
  for (std::size_t d : spec.observed_latent_dims) {
    if (d >= spec.latent_dim) throw ConfigError("observed latent dim " + std::to_string(d) + " out of range");
  }
}

std::vector<StyleCluster> make_clusters(const BenchmarkSpec& spec) {
  std::vector<StyleCluster> clusters = spec.clusters;
  if (clusters.empty()) {
    if (spec.spread <= 0.0) throw ConfigError("spread must be positive");
    Rng rng(mix_seed(spec.seed, kClusterStream));
    const std::size_t total = spec.n_train_clusters + spec.n_unseen_clusters;
    const double needed = spec.separation * spec.spread;
    constexpr int kMaxAttempts = 10000;
    for (std::size_t c = 0; c < total; ++c) {
      StyleCluster cluster;
      cluster.id = static_cast<int>(c);
      cluster.unseen = c >= spec.n_train_clusters;
      cluster.spread.assign(spec.latent_dim, spec.spread);
      int attempt = 0;
      for (;; ++attempt) {
        if (attempt == kMaxAttempts) {
          throw ConfigError("cannot place " + std::to_string(total) + " clusters with separation " +
                            std::to_string(needed) + " inside mean_range");
        }
        cluster.mean.resize(spec.latent_dim);
        for (double& m : cluster.mean) m = rng.uniform(-spec.mean_range, spec.mean_range);
        bool ok = true;
        for (const StyleCluster& other : clusters) ok = ok && distance(other.mean, cluster.mean) >= needed;
        if (ok) break;
      }
      const double sign = rng.uniform(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
      cluster.gain = sign * rng.uniform(0.6, 1.4);
      cluster.offset = rng.uniform(-1.0, 1.0);
      cluster.frequency = static_cast<double>(1 + rng.index(3));
      clusters.push_back(std::move(cluster));
    }
  } else {
    for (std::size_t c = 0; c < clusters.size(); ++c) {
      StyleCluster& cluster = clusters[c];
      cluster.id = static_cast<int>(c);
      if (cluster.mean.size() != spec.latent_dim) throw ConfigError("cluster mean has wrong dimension");
      if (cluster.spread.size() == 1) cluster.spread.assign(spec.latent_dim, cluster.spread[0]);
      if (cluster.spread.size() != spec.latent_dim) throw ConfigError("cluster spread has wrong dimension");
      for (double s : cluster.spread) {
        if (s <= 0.0) throw ConfigError("cluster spread must be positive");
      }
    }
  }
  std::size_t n_train = 0;
  for (const StyleCluster& c : clusters) n_train += c.unseen ? 0 : 1;
  if (n_train < 2) throw ConfigError("benchmark needs at least two train clusters");
  if (n_train == clusters.size()) throw ConfigError("benchmark needs at least one unseen cluster");
  check_separation(clusters, spec.separation);
  return clusters;
}

RenderBasis make_basis(const BenchmarkSpec& spec) {
  Rng rng(mix_seed(spec.seed, kBasisStream));
  const std::size_t s = spec.latent_dim, f = spec.channels, c = spec.content_dim;
  RenderBasis b;
  b.ref_level.resize(s * f);
  b.ref_swing.resize(s * f);
  b.ref_phase.resize(s * f);
  for (double& v : b.ref_level) v = rng.normal();
  for (double& v : b.ref_swing) v = rng.normal();
  for (double& v : b.ref_phase) v = rng.uniform(0.0, kTwoPi);
  b.content_map.resize(f * c);
  for (double& v : b.content_map) v = rng.normal() / std::sqrt(static_cast<double>(c));
  b.mod_weight.resize(f * s);
  for (double& v : b.mod_weight) v = rng.normal() / std::sqrt(static_cast<double>(s));
  b.mod_phase.resize(f);
  for (double& v : b.mod_phase) v = rng.uniform(0.0, kTwoPi);
  b.offset_dir.resize(f);
  for (double& v : b.offset_dir) v = rng.normal();
  b.ref_mod_weight.resize(f * s);
  for (double& v : b.ref_mod_weight) v = rng.normal() / std::sqrt(static_cast<double>(s));
  b.ref_mod_phase.resize(f);
  for (double& v : b.ref_mod_phase) v = rng.uniform(0.0, kTwoPi);
  b.ref_offset_dir.resize(f);
  for (double& v : b.ref_offset_dir) v = rng.normal();
  return b;
}

std::vector<std::size_t> observed_dims(const BenchmarkSpec& spec) {
  if (!spec.observed_latent_dims.empty()) return spec.observed_latent_dims;
  std::vector<std::size_t> all(spec.latent_dim);
  for (std::size_t d = 0; d < all.size(); ++d) all[d] = d;
  return all;
}

std::vector<int> split_clusters(const std::vector<StyleCluster>& clusters, Split split) {
  std::vector<int> ids;
  for (const StyleCluster& c : clusters) {
    if (c.unseen == (split == Split::kEvalUnseen)) ids.push_back(c.id);
  }
  return ids;
}

std::size_t split_count(const BenchmarkSpec& spec, Split split) {
  switch (split) {
    case Split::kTrain:
      return spec.train_count;
    case Split::kEvalSeen:
      return spec.eval_count / 2;
    case Split::kEvalUnseen:
      return spec.eval_count - spec.eval_count / 2;
  }
  return 0;
}

SplitData render_split(const BenchmarkSpec& spec, const RenderBasis& basis, const std::vector<StyleCluster>& clusters,
                       const std::vector<std::vector<double>>& contents, Split split) {
  Rng rng(mix_seed(spec.seed, kSplitStream + static_cast<std::uint64_t>(split)));
  const std::size_t t_len = spec.frames, f = spec.channels, s_dim = spec.latent_dim, c_dim = spec.content_dim;
  const std::vector<int> ids = split_clusters(clusters, split);
  const std::vector<std::size_t> observed = observed_dims(spec);

  SplitData out;
  out.split = split;
  out.count = split_count(spec, split);
  const std::size_t n = out.count;
  out.content.resize(n * c_dim);
  out.reference.resize(n * t_len * f);
  out.target.resize(n * t_len * f);
  out.latent.resize(n * s_dim);
  out.cluster.resize(n);
  out.content_id.resize(n);
  out.segments.reserve(n * spec.n_segments);

  for (std::size_t i = 0; i < n; ++i) {
    const StyleCluster& cluster = clusters[static_cast<std::size_t>(ids[i % ids.size()])];
    const std::size_t content = (i / ids.size()) % contents.size();
    out.cluster[i] = cluster.id;
    out.content_id[i] = static_cast<int>(content);
    std::copy(contents[content].begin(), contents[content].end(), out.content.begin() + i * c_dim);

    double* s = out.latent.data() + i * s_dim;
    for (std::size_t d = 0; d < s_dim; ++d) s[d] = cluster.mean[d] + cluster.spread[d] * rng.normal();

    double* x = out.reference.data() + i * t_len * f;
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t ff = 0; ff < f; ++ff) {
        double v = 0.0;
        for (std::size_t d : observed) {
          const double wave = std::cos(kTwoPi * static_cast<double>((d + 1) * t) / static_cast<double>(t_len) +
                                       basis.ref_phase[d * f + ff]);
          v += s[d] * (basis.ref_level[d * f + ff] + basis.ref_swing[d * f + ff] * wave);
        }
        x[t * f + ff] = v;
      }
    }
    if (spec.reference_rendering) {
      for (std::size_t ff = 0; ff < f; ++ff) {
        double amp = 0.0;
        for (std::size_t d : observed) amp += basis.ref_mod_weight[ff * s_dim + d] * s[d];
        for (std::size_t t = 0; t < t_len; ++t) {
          const double wave = std::sin(kTwoPi * cluster.frequency * static_cast<double>(t) /
                                           static_cast<double>(t_len) +
                                       basis.ref_mod_phase[ff]);
          x[t * f + ff] += cluster.gain * amp * wave + cluster.offset * basis.ref_offset_dir[ff];
        }
      }
    }
    for (std::size_t k = 0; k < t_len * f; ++k) x[k] += spec.reference_noise * rng.normal();

    const std::vector<double> style = render_style(spec, basis, cluster, std::span<const double>(s, s_dim));
    double* y = out.target.data() + i * t_len * f;
    for (std::size_t ff = 0; ff < f; ++ff) {
      double base = 0.0;
      for (std::size_t k = 0; k < c_dim; ++k) base += basis.content_map[ff * c_dim + k] * contents[content][k];
      for (std::size_t t = 0; t < t_len; ++t) {
        y[t * f + ff] = base + style[t * f + ff] + spec.target_noise * rng.normal();
      }
    }

    // n_segments - 1 distinct cut points in [1, T-1]
    std::vector<std::size_t> cuts;
    std::vector<std::size_t> pool(t_len - 1);
    for (std::size_t k = 0; k < pool.size(); ++k) pool[k] = k + 1;
    for (std::size_t k = 0; k + 1 < spec.n_segments; ++k) {
      const std::size_t pick = k + rng.index(pool.size() - k);
      std::swap(pool[k], pool[pick]);
      cuts.push_back(pool[k]);
    }
    std::sort(cuts.begin(), cuts.end());
    std::size_t begin = 0;
    for (std::size_t cut : cuts) {
      out.segments.push_back(Segment{begin, cut});
      begin = cut;
    }
    out.segments.push_back(Segment{begin, t_len});
  }
  return out;
}

template <typename T>
void read_key(const nlohmann::json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kEvalSeen:
      return "eval_seen";
    case Split::kEvalUnseen:
      return "eval_unseen";
  }
  return "unknown";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "eval_seen") return Split::kEvalSeen;
  if (name == "eval_unseen") return Split::kEvalUnseen;
  throw ConfigError("unknown split '" + name + "' (expected train, eval_seen or eval_unseen)");
}

std::vector<double> render_style(const BenchmarkSpec& spec, const RenderBasis& basis, const StyleCluster& cluster,
                                 std::span<const double> s) {
  const std::size_t t_len = spec.frames, f = spec.channels, s_dim = spec.latent_dim;
  std::vector<double> out(t_len * f);
  for (std::size_t ff = 0; ff < f; ++ff) {
    double amp = 0.0;
    for (std::size_t d = 0; d < s_dim; ++d) amp += basis.mod_weight[ff * s_dim + d] * s[d];
    for (std::size_t t = 0; t < t_len; ++t) {
      const double wave =
          std::sin(kTwoPi * cluster.frequency * static_cast<double>(t) / static_cast<double>(t_len) +
                   basis.mod_phase[ff]);
      out[t * f + ff] = cluster.gain * amp * wave + cluster.offset * basis.offset_dir[ff];
    }
  }
  return out;
}

Dataset generate_dataset(const BenchmarkSpec& spec) {
  validate_spec(spec);
  Dataset data;
  data.spec_ = spec;
  data.clusters_ = make_clusters(spec);
  data.basis_ = make_basis(spec);
  Rng rng(mix_seed(spec.seed, kContentStream));
  data.contents_.assign(spec.n_contents, std::vector<double>(spec.content_dim));
  for (auto& c : data.contents_) {
    for (double& v : c) v = rng.normal();
  }
  for (Split s : kAllSplits) data.splits_.push_back(render_split(spec, data.basis_, data.clusters_, data.contents_, s));
  return data;
}

const SplitData& Dataset::split(Split s) const {
  for (const SplitData& d : splits_) {
    if (d.split == s) return d;
  }
  throw ConfigError("dataset has no split '" + to_string(s) + "'");
}

bool Dataset::has_split(Split s) const {
  return std::any_of(splits_.begin(), splits_.end(), [s](const SplitData& d) { return d.split == s; });
}

ReferenceFeatures Dataset::reference(Split s, std::size_t i) const {
  const SplitData& d = split(s);
  const std::size_t block = spec_.frames * spec_.channels;
  ReferenceFeatures x;
  x.frames = Tensor::from({spec_.frames, spec_.channels},
                          std::vector<double>(d.reference.begin() + i * block, d.reference.begin() + (i + 1) * block));
  x.segments.assign(d.segments.begin() + i * spec_.n_segments, d.segments.begin() + (i + 1) * spec_.n_segments);
  return x;
}

Tensor Dataset::content(Split s, std::size_t i) const {
  const SplitData& d = split(s);
  const std::size_t c = spec_.content_dim;
  return Tensor::from({c}, std::vector<double>(d.content.begin() + i * c, d.content.begin() + (i + 1) * c));
}

Tensor Dataset::target(Split s, std::size_t i) const {
  const SplitData& d = split(s);
  const std::size_t block = spec_.frames * spec_.channels;
  return Tensor::from({spec_.frames, spec_.channels},
                      std::vector<double>(d.target.begin() + i * block, d.target.begin() + (i + 1) * block));
}

nlohmann::json to_json(const StyleCluster& c) {
  return nlohmann::json{{"id", c.id},         {"mean", c.mean},     {"spread", c.spread},
                        {"gain", c.gain},     {"offset", c.offset}, {"frequency", c.frequency},
                        {"unseen", c.unseen}};
}

nlohmann::json to_json(const BenchmarkSpec& spec) {
  nlohmann::json j{{"latent_dim", spec.latent_dim},
                   {"n_train_clusters", spec.n_train_clusters},
                   {"n_unseen_clusters", spec.n_unseen_clusters},
                   {"train_count", spec.train_count},
                   {"eval_count", spec.eval_count},
                   {"frames", spec.frames},
                   {"channels", spec.channels},
                   {"content_dim", spec.content_dim},
                   {"n_contents", spec.n_contents},
                   {"n_segments", spec.n_segments},
                   {"separation", spec.separation},
                   {"spread", spec.spread},
                   {"mean_range", spec.mean_range},
                   {"reference_noise", spec.reference_noise},
                   {"target_noise", spec.target_noise},
                   {"observed_latent_dims", spec.observed_latent_dims},
                   {"reference_rendering", spec.reference_rendering},
                   {"seed", spec.seed}};
  nlohmann::json clusters = nlohmann::json::array();
  for (const StyleCluster& c : spec.clusters) clusters.push_back(to_json(c));
  j["clusters"] = clusters;
  return j;
}

BenchmarkSpec benchmark_spec_from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys{
      "latent_dim", "n_train_clusters", "n_unseen_clusters", "train_count",     "eval_count",
      "frames",     "channels",         "content_dim",       "n_contents",      "n_segments",
      "separation", "spread",           "mean_range",        "reference_noise", "target_noise",
      "observed_latent_dims", "reference_rendering", "clusters", "seed"};
  if (!j.is_object()) throw ConfigError("data: expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.count(key)) throw ConfigError("data." + key + ": unknown key");
  }
  BenchmarkSpec spec;
  try {
    read_key(j, "latent_dim", spec.latent_dim);
    read_key(j, "n_train_clusters", spec.n_train_clusters);
    read_key(j, "n_unseen_clusters", spec.n_unseen_clusters);
    read_key(j, "train_count", spec.train_count);
    read_key(j, "eval_count", spec.eval_count);
    read_key(j, "frames", spec.frames);
    read_key(j, "channels", spec.channels);
    read_key(j, "content_dim", spec.content_dim);
    read_key(j, "n_contents", spec.n_contents);
    read_key(j, "n_segments", spec.n_segments);
    read_key(j, "separation", spec.separation);
    read_key(j, "spread", spec.spread);
    read_key(j, "mean_range", spec.mean_range);
    read_key(j, "reference_noise", spec.reference_noise);
    read_key(j, "target_noise", spec.target_noise);
    read_key(j, "observed_latent_dims", spec.observed_latent_dims);
    read_key(j, "reference_rendering", spec.reference_rendering);
    read_key(j, "seed", spec.seed);
    if (j.contains("clusters")) {
      static const std::set<std::string> kClusterKeys{"id",     "mean",      "spread", "gain",
                                                      "offset", "frequency", "unseen"};
      for (const auto& c : j.at("clusters")) {
        for (const auto& [key, value] : c.items()) {
          if (!kClusterKeys.count(key)) throw ConfigError("data.clusters." + key + ": unknown key");
        }
        StyleCluster cluster;
        read_key(c, "mean", cluster.mean);
        read_key(c, "spread", cluster.spread);
        read_key(c, "gain", cluster.gain);
        read_key(c, "offset", cluster.offset);
        read_key(c, "frequency", cluster.frequency);
        read_key(c, "unseen", cluster.unseen);
        spec.clusters.push_back(std::move(cluster));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("data: ") + e.what());
  }
  return spec;
}

nlohmann::json Dataset::manifest() const {
  nlohmann::json clusters = nlohmann::json::array();
  for (const StyleCluster& c : clusters_) clusters.push_back(to_json(c));
  nlohmann::json counts, files, provenance;
  const std::size_t t = spec_.frames, f = spec_.channels;
  for (const SplitData& d : splits_) {
    const std::string name = to_string(d.split);
    counts[name] = d.count;
    files[name] = {
        {"content", {{"path", name + "_content.f64"}, {"shape", {d.count, spec_.content_dim}}}},
        {"reference", {{"path", name + "_reference.f64"}, {"shape", {d.count, t, f}}}},
        {"target", {{"path", name + "_target.f64"}, {"shape", {d.count, t, f}}}},
        {"latent", {{"path", name + "_latent.f64"}, {"shape", {d.count, spec_.latent_dim}}}},
        {"labels", {{"path", name + "_labels.f64"}, {"shape", {d.count, 2}}, {"columns", {"cluster", "content"}}}},
        {"segments",
         {{"path", name + "_segments.f64"}, {"shape", {d.count, spec_.n_segments, 2}}, {"columns", {"begin", "end"}}}}};
    std::map<int, std::size_t> per_cluster;
    for (int c : d.cluster) ++per_cluster[c];
    nlohmann::json pc = nlohmann::json::object();
    for (const auto& [id, n] : per_cluster) pc[std::to_string(id)] = n;
    provenance[name] = pc;
  }
  return nlohmann::json{
      {"format", "stylegate-dataset"},
      {"version", kFormatVersion},
      {"seed", spec_.seed},
      {"spec", to_json(spec_)},
      {"counts", counts},
      {"clusters", clusters},
      {"cluster_counts", provenance},
      {"basis",
       {{"ref_level", basis_.ref_level},
        {"ref_swing", basis_.ref_swing},
        {"ref_phase", basis_.ref_phase},
        {"content_map", basis_.content_map},
        {"mod_weight", basis_.mod_weight},
        {"mod_phase", basis_.mod_phase},
        {"offset_dir", basis_.offset_dir},
        {"ref_mod_weight", basis_.ref_mod_weight},
        {"ref_mod_phase", basis_.ref_mod_phase},
        {"ref_offset_dir", basis_.ref_offset_dir}}},
      {"contents", contents_},
      {"files", files}};
}

void Dataset::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_json(dir / "manifest.json", manifest());
  for (const SplitData& d : splits_) {
    const std::string name = to_string(d.split);
    write_f64(dir / (name + "_content.f64"), d.content);
    write_f64(dir / (name + "_reference.f64"), d.reference);
    write_f64(dir / (name + "_target.f64"), d.target);
    write_f64(dir / (name + "_latent.f64"), d.latent);
    std::vector<double> labels;
    labels.reserve(d.count * 2);
    for (std::size_t i = 0; i < d.count; ++i) {
      labels.push_back(d.cluster[i]);
      labels.push_back(d.content_id[i]);
    }
    write_f64(dir / (name + "_labels.f64"), labels);
    std::vector<double> segs;
    segs.reserve(d.segments.size() * 2);
    for (const Segment& s : d.segments) {
      segs.push_back(static_cast<double>(s.begin));
      segs.push_back(static_cast<double>(s.end));
    }
    write_f64(dir / (name + "_segments.f64"), segs);
  }
}

Dataset Dataset::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw MissingFileError("missing dataset directory " + dir.string());
  const nlohmann::json m = read_json(dir / "manifest.json");
  if (m.value("format", "") != "stylegate-dataset") throw FormatError(dir.string() + " is not a dataset");
  if (m.at("version").get<int>() != kFormatVersion) {
    throw FormatError("unsupported dataset version " + m.at("version").dump());
  }
  Dataset data;
  try {
    data.spec_ = benchmark_spec_from_json(m.at("spec"));
    for (const auto& c : m.at("clusters")) {
      StyleCluster cluster;
      cluster.id = c.at("id").get<int>();
      cluster.mean = c.at("mean").get<std::vector<double>>();
      cluster.spread = c.at("spread").get<std::vector<double>>();
      cluster.gain = c.at("gain").get<double>();
      cluster.offset = c.at("offset").get<double>();
      cluster.frequency = c.at("frequency").get<double>();
      cluster.unseen = c.at("unseen").get<bool>();
      data.clusters_.push_back(std::move(cluster));
    }
    const auto& b = m.at("basis");
    data.basis_.ref_level = b.at("ref_level").get<std::vector<double>>();
    data.basis_.ref_swing = b.at("ref_swing").get<std::vector<double>>();
    data.basis_.ref_phase = b.at("ref_phase").get<std::vector<double>>();
    data.basis_.content_map = b.at("content_map").get<std::vector<double>>();
    data.basis_.mod_weight = b.at("mod_weight").get<std::vector<double>>();
    data.basis_.mod_phase = b.at("mod_phase").get<std::vector<double>>();
    data.basis_.offset_dir = b.at("offset_dir").get<std::vector<double>>();
    data.basis_.ref_mod_weight = b.at("ref_mod_weight").get<std::vector<double>>();
    data.basis_.ref_mod_phase = b.at("ref_mod_phase").get<std::vector<double>>();
    data.basis_.ref_offset_dir = b.at("ref_offset_dir").get<std::vector<double>>();
    data.contents_ = m.at("contents").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }
  const BenchmarkSpec& spec = data.spec_;
  const std::size_t t = spec.frames, f = spec.channels;
  for (Split s : kAllSplits) {
    const std::string name = to_string(s);
    if (!m.at("counts").contains(name)) continue;
    SplitData d;
    d.split = s;
    d.count = m.at("counts").at(name).get<std::size_t>();
    d.content = read_f64(dir / (name + "_content.f64"), d.count * spec.content_dim);
    d.reference = read_f64(dir / (name + "_reference.f64"), d.count * t * f);
    d.target = read_f64(dir / (name + "_target.f64"), d.count * t * f);
    d.latent = read_f64(dir / (name + "_latent.f64"), d.count * spec.latent_dim);
    const std::vector<double> labels = read_f64(dir / (name + "_labels.f64"), d.count * 2);
    for (std::size_t i = 0; i < d.count; ++i) {
      d.cluster.push_back(static_cast<int>(labels[2 * i]));
      d.content_id.push_back(static_cast<int>(labels[2 * i + 1]));
    }
    const std::vector<double> segs = read_f64(dir / (name + "_segments.f64"), d.count * spec.n_segments * 2);
    for (std::size_t i = 0; i < segs.size(); i += 2) {
      d.segments.push_back(Segment{static_cast<std::size_t>(segs[i]), static_cast<std::size_t>(segs[i + 1])});
    }
    data.splits_.push_back(std::move(d));
  }
  return data;
}

double averaged_style_floor(const Dataset& data, Split split) {
  const BenchmarkSpec& spec = data.spec();
  const SplitData& d = data.split(split);
  const std::size_t t_len = spec.frames, f = spec.channels, s_dim = spec.latent_dim;
  std::map<int, std::size_t> counts;
  for (int c : d.cluster) ++counts[c];

  const std::size_t cells = t_len * f;
  std::vector<double> mix_mean(cells, 0.0);
  std::vector<std::vector<double>> means;
  std::vector<std::vector<double>> vars;
  std::vector<double> weights;
  for (const auto& [id, n] : counts) {
    const StyleCluster& c = data.clusters().at(static_cast<std::size_t>(id));
    const double w = static_cast<double>(n) / static_cast<double>(d.count);
    std::vector<double> m = render_style(spec, data.basis(), c, c.mean);
    std::vector<double> v(cells);
    for (std::size_t ff = 0; ff < f; ++ff) {
      double amp_var = 0.0;
      for (std::size_t k = 0; k < s_dim; ++k) {
        const double a = data.basis().mod_weight[ff * s_dim + k];
        amp_var += a * a * c.spread[k] * c.spread[k];
      }
      for (std::size_t t = 0; t < t_len; ++t) {
        const double wave = std::sin(kTwoPi * c.frequency * static_cast<double>(t) / static_cast<double>(t_len) +
                                     data.basis().mod_phase[ff]);
        v[t * f + ff] = c.gain * c.gain * wave * wave * amp_var;
      }
    }
    for (std::size_t i = 0; i < cells; ++i) mix_mean[i] += w * m[i];
    means.push_back(std::move(m));
    vars.push_back(std::move(v));
    weights.push_back(w);
  }
  double total = 0.0;
  for (std::size_t c = 0; c < means.size(); ++c) {
    for (std::size_t i = 0; i < cells; ++i) {
      const double dev = means[c][i] - mix_mean[i];
      total += weights[c] * (vars[c][i] + dev * dev);
    }
  }
  return total / static_cast<double>(cells) + spec.target_noise * spec.target_noise;
}

double oracle_mse(const Dataset& data, Split split) {
  const BenchmarkSpec& spec = data.spec();
  const SplitData& d = data.split(split);
  const std::size_t cells = spec.frames * spec.channels;
  // Demean target and rendered style within (content, cell) groups, then fit
  // one pooled slope.
  std::vector<double> style(d.count * cells);
  for (std::size_t i = 0; i < d.count; ++i) {
    const StyleCluster& c = data.clusters().at(static_cast<std::size_t>(d.cluster[i]));
    const std::vector<double> z =
        render_style(spec, data.basis(), c, std::span<const double>(d.latent.data() + i * spec.latent_dim, spec.latent_dim));
    std::copy(z.begin(), z.end(), style.begin() + i * cells);
  }
  const std::size_t groups = data.contents().size();
  std::vector<double> y_mean(groups * cells, 0.0), z_mean(groups * cells, 0.0);
  std::vector<std::size_t> members(groups, 0);
  for (std::size_t i = 0; i < d.count; ++i) {
    const std::size_t g = static_cast<std::size_t>(d.content_id[i]);
    ++members[g];
    for (std::size_t k = 0; k < cells; ++k) {
      y_mean[g * cells + k] += d.target[i * cells + k];
      z_mean[g * cells + k] += style[i * cells + k];
    }
  }
  for (std::size_t g = 0; g < groups; ++g) {
    if (members[g] == 0) continue;
    for (std::size_t k = 0; k < cells; ++k) {
      y_mean[g * cells + k] /= static_cast<double>(members[g]);
      z_mean[g * cells + k] /= static_cast<double>(members[g]);
    }
  }
  double yz = 0.0, zz = 0.0;
  for (std::size_t i = 0; i < d.count; ++i) {
    const std::size_t g = static_cast<std::size_t>(d.content_id[i]);
    for (std::size_t k = 0; k < cells; ++k) {
      const double y = d.target[i * cells + k] - y_mean[g * cells + k];
      const double z = style[i * cells + k] - z_mean[g * cells + k];
      yz += y * z;
      zz += z * z;
    }
  }
  const double slope = zz > 0.0 ? yz / zz : 0.0;
  double sse = 0.0;
  for (std::size_t i = 0; i < d.count; ++i) {
    const std::size_t g = static_cast<std::size_t>(d.content_id[i]);
    for (std::size_t k = 0; k < cells; ++k) {
      const double r = (d.target[i * cells + k] - y_mean[g * cells + k]) -
                       slope * (style[i * cells + k] - z_mean[g * cells + k]);
      sse += r * r;
    }
  }
  return sse / static_cast<double>(d.count * cells);
}

}  // namespace stylegate
