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

#include "stylegate/analysis.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "stylegate/binary_io.h"
#include "stylegate/errors.h"
#include "stylegate/rng.h"

namespace stylegate {

namespace {

void finish_cell(UtilizationCell& cell, std::size_t k) {
  double mass = 0.0;
  for (double f : cell.fraction) mass += f;
  cell.selection_fraction.assign(cell.count.size(), 0.0);
  if (cell.samples == 0) return;
  for (double& f : cell.fraction) f /= mass;
  const double selections = static_cast<double>(cell.samples * k);
  for (std::size_t i = 0; i < cell.count.size(); ++i) {
    cell.selection_fraction[i] = static_cast<double>(cell.count[i]) / selections;
  }
}

UtilizationCell empty_cell(std::size_t n) {
  UtilizationCell c;
  c.fraction.assign(n, 0.0);
  c.count.assign(n, 0);
  return c;
}

nlohmann::json cell_json(const UtilizationCell& c) {
  return nlohmann::json{{"samples", c.samples},
                        {"fraction", c.fraction},
                        {"selection_fraction", c.selection_fraction},
                        {"count", c.count}};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::vector<std::pair<Split, std::size_t>> select_subset(const Dataset& data, const SubsetSpec& spec) {
  std::map<int, std::vector<std::pair<Split, std::size_t>>> by_cluster;
  for (Split s : spec.splits) {
    if (!data.has_split(s)) throw InputError("dataset has no split " + to_string(s));
    const SplitData& d = data.split(s);
    for (std::size_t i = 0; i < d.count; ++i) by_cluster[d.cluster[i]].emplace_back(s, i);
  }
  if (by_cluster.empty() || spec.samples == 0) throw InputError("gating analysis subset is empty");

  Rng rng(mix_seed(spec.seed, 0xa11a));
  for (auto& [cluster, pool] : by_cluster) {
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.index(i)]);
  }
  // Round-robin over clusters keeps the per-cluster counts within one of each other.
  std::vector<std::pair<Split, std::size_t>> chosen;
  std::map<int, std::size_t> taken;
  bool progress = true;
  while (chosen.size() < spec.samples && progress) {
    progress = false;
    for (auto& [cluster, pool] : by_cluster) {
      if (chosen.size() == spec.samples) break;
      std::size_t& t = taken[cluster];
      if (t < pool.size()) {
        chosen.push_back(pool[t++]);
        progress = true;
      }
    }
  }
  return chosen;
}

UtilizationReport gating_analysis(const StyleModel& model, const Dataset& data, const SubsetSpec& spec) {
  const ModelConfig& cfg = model.config();
  if (cfg.variant != Variant::kMoe) throw InputError("no gating to analyze: model variant is " + to_string(cfg.variant));
  const std::size_t n = cfg.gating.n_experts;
  const std::size_t k = spec.k_override > 0 ? spec.k_override : cfg.gating.k_infer;
  if (k > n) throw ConfigError("k override " + std::to_string(k) + " exceeds n_experts " + std::to_string(n));

  const auto subset = select_subset(data, spec);
  const auto& levels = model.encoder().levels();
  UtilizationReport report;
  report.n_experts = n;
  report.k = k;
  report.samples = subset.size();
  report.levels.resize(levels.size());
  for (std::size_t l = 0; l < levels.size(); ++l) {
    report.levels[l].resolution = levels[l].resolution();
    report.levels[l].overall = empty_cell(n);
  }

  for (const auto& [split, i] : subset) {
    const int cluster = data.split(split).cluster[i];
    const ReferenceFeatures x = data.reference(split, i);
    for (std::size_t l = 0; l < levels.size(); ++l) {
      NoiseSource off = NoiseSource::eval();
      const GateDecision d = noisy_gate(x, *levels[l].router(), levels[l].gating(), off, k);
      LevelUtilization& lu = report.levels[l];
      auto [it, inserted] = lu.per_cluster.try_emplace(cluster, empty_cell(n));
      for (UtilizationCell* cell : {&lu.overall, &it->second}) {
        ++cell->samples;
        for (std::size_t e = 0; e < n; ++e) cell->fraction[e] += d.weights[e];
        for (std::size_t e : d.selected) ++cell->count[e];
      }
    }
  }
  for (LevelUtilization& lu : report.levels) {
    finish_cell(lu.overall, k);
    for (auto& [cluster, cell] : lu.per_cluster) finish_cell(cell, k);
  }
  return report;
}

nlohmann::json UtilizationReport::to_json() const {
  nlohmann::json out{{"n_experts", n_experts}, {"k", k}, {"samples", samples}, {"gate_noise", false}};
  nlohmann::json lv = nlohmann::json::array();
  for (std::size_t l = 0; l < levels.size(); ++l) {
    nlohmann::json clusters = nlohmann::json::object();
    for (const auto& [c, cell] : levels[l].per_cluster) clusters[std::to_string(c)] = cell_json(cell);
    lv.push_back({{"level", l},
                  {"resolution", to_string(levels[l].resolution)},
                  {"overall", cell_json(levels[l].overall)},
                  {"clusters", clusters}});
  }
  out["levels"] = lv;
  return out;
}

std::string UtilizationReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "level,cluster,expert,fraction,count\n";
  for (std::size_t l = 0; l < levels.size(); ++l) {
    auto rows = [&](const std::string& name, const UtilizationCell& cell) {
      for (std::size_t e = 0; e < cell.fraction.size(); ++e) {
        out << l << ',' << name << ',' << e << ',' << cell.fraction[e] << ',' << cell.count[e] << '\n';
      }
    };
    rows("all", levels[l].overall);
    for (const auto& [c, cell] : levels[l].per_cluster) rows(std::to_string(c), cell);
  }
  return out.str();
}

void UtilizationReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_text(dir / "utilization.csv", to_csv());
  write_json(dir / "utilization.json", to_json());
}

nlohmann::json ComparisonTable::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const ComparisonRow& r : rows) {
    out.push_back({{"variant", r.variant},
                   {"split", r.split},
                   {"cosine", r.metrics.cosine_similarity},
                   {"distortion", r.metrics.distortion},
                   {"frame_error", r.metrics.frame_error},
                   {"mse", r.metrics.mse},
                   {"samples", r.metrics.samples}});
  }
  return out;
}

std::string ComparisonTable::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "variant,split,cosine,distortion,frame_error,mse\n";
  for (const ComparisonRow& r : rows) {
    out << r.variant << ',' << r.split << ',' << r.metrics.cosine_similarity << ',' << r.metrics.distortion << ','
        << r.metrics.frame_error << ',' << r.metrics.mse << '\n';
  }
  return out.str();
}

void ComparisonTable::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_text(dir / "comparison.csv", to_csv());
  write_json(dir / "comparison.json", to_json());
}

ComparisonTable compare_variants(const std::vector<std::pair<std::string, const StyleModel*>>& models,
                                 const Dataset& data, const std::vector<Split>& splits, std::size_t threads) {
  for (Split s : splits) {
    if (!data.has_split(s) || data.split(s).count == 0) {
      throw InputError("split mismatch: dataset has no " + to_string(s) + " samples");
    }
  }
  ComparisonTable table;
  for (const auto& [name, model] : models) {
    for (Split s : splits) table.rows.push_back({name, to_string(s), evaluate(*model, data, s, 0, threads)});
  }
  return table;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 == 1 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  if (cfg.variants.empty()) throw ConfigError("experiment.variants must not be empty");
  ExperimentResult result;
  for (std::uint64_t seed : cfg.seeds) {
    BenchmarkSpec spec = cfg.data;
    spec.seed = seed;
    const Dataset data = generate_dataset(spec);
    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = mix_seed(seed, 2);
    SeedResult sr;
    sr.seed = seed;
    for (Variant v : cfg.variants) {
      ModelConfig mc = cfg.model;
      mc.variant = v;
      mc.seed = mix_seed(seed, 1);
      const TrainResult run = train(mc, data, train_cfg);
      const StyleModel& model = run.checkpoint.model;
      const ComparisonTable t = compare_variants({{to_string(v), &model}}, data, {Split::kEvalSeen, Split::kEvalUnseen},
                                                 cfg.threads);
      sr.table.rows.insert(sr.table.rows.end(), t.rows.begin(), t.rows.end());
      if (v == Variant::kMoe && cfg.analyze_gating) sr.utilization = gating_analysis(model, data, cfg.subset);
    }
    result.seeds.push_back(std::move(sr));
  }
  const std::size_t per_seed = result.seeds.front().table.rows.size();
  for (std::size_t r = 0; r < per_seed; ++r) {
    std::vector<double> cos, dist, ffe, err;
    for (const SeedResult& sr : result.seeds) {
      const MetricsBundle& m = sr.table.rows[r].metrics;
      cos.push_back(m.cosine_similarity);
      dist.push_back(m.distortion);
      ffe.push_back(m.frame_error);
      err.push_back(m.mse);
    }
    ComparisonRow row = result.seeds.front().table.rows[r];
    row.metrics = MetricsBundle{median(cos), median(dist), median(ffe), median(err), row.metrics.samples};
    result.median.rows.push_back(row);
  }
  return result;
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  std::vector<std::string> variants;
  for (Variant v : cfg.variants) variants.push_back(to_string(v));
  std::vector<std::string> splits;
  for (Split s : cfg.subset.splits) splits.push_back(to_string(s));
  return nlohmann::json{{"data", to_json(cfg.data)},
                        {"model", to_json(cfg.model)},
                        {"train", to_json(cfg.train)},
                        {"variants", variants},
                        {"seeds", cfg.seeds},
                        {"analyze_gating", cfg.analyze_gating},
                        {"subset",
                         {{"samples", cfg.subset.samples},
                          {"seed", cfg.subset.seed},
                          {"splits", splits},
                          {"k_override", cfg.subset.k_override}}}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> keys{"data", "model", "train", "variants", "seeds", "analyze_gating", "subset"};
  if (!j.is_object()) throw ConfigError("experiment: expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!keys.count(key)) throw ConfigError("experiment." + key + ": unknown key");
  }
  ExperimentConfig cfg;
  try {
    if (j.contains("data")) cfg.data = benchmark_spec_from_json(j.at("data"));
    if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));
    if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
    if (j.contains("variants")) {
      cfg.variants.clear();
      for (const auto& v : j.at("variants")) cfg.variants.push_back(variant_from_string(v.get<std::string>()));
    }
    if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("analyze_gating")) cfg.analyze_gating = j.at("analyze_gating").get<bool>();
    if (j.contains("subset")) {
      const auto& s = j.at("subset");
      for (const auto& [key, value] : s.items()) {
        if (key != "samples" && key != "seed" && key != "splits" && key != "k_override") {
          throw ConfigError("experiment.subset." + key + ": unknown key");
        }
      }
      if (s.contains("samples")) cfg.subset.samples = s.at("samples").get<std::size_t>();
      if (s.contains("seed")) cfg.subset.seed = s.at("seed").get<std::uint64_t>();
      if (s.contains("k_override")) cfg.subset.k_override = s.at("k_override").get<std::size_t>();
      if (s.contains("splits")) {
        cfg.subset.splits.clear();
        for (const auto& name : s.at("splits")) cfg.subset.splits.push_back(split_from_string(name.get<std::string>()));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment: ") + e.what());
  }
  return cfg;
}

}  // namespace stylegate
