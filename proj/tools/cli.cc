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

#include "cli.h"

#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "stylegate/analysis.h"
#include "stylegate/binary_io.h"
#include "stylegate/errors.h"
#include "stylegate/synthbench.h"
#include "stylegate/training.h"
#include "stylegate/version.h"

namespace stylegate::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::set<std::string> kTopLevelKeys{"version", "seed",  "output_dir", "dataset_dir", "data",
                                          "model",   "train", "analysis",   "experiment",  "checkpoints"};

struct GlobalFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  std::size_t threads = 1;
};

void fill_seed(json& section, std::uint64_t seed) {
  if (!section.contains("seed")) section["seed"] = seed;
}

SubsetSpec subset_from_json(const json& j) {
  json wrapped{{"subset", j}};
  return experiment_config_from_json(wrapped).subset;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

fs::path output_dir(const GlobalFlags& flags, const RunConfig* rc) {
  if (!flags.out.empty()) return flags.out;
  if (rc != nullptr && rc->resolved.contains("output_dir")) return rc->resolved.at("output_dir").get<std::string>();
  throw ConfigError("output_dir: required (set it in the config or pass --out)");
}

void prepare_output(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw Error(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw Error("refusing to overwrite nonempty directory " + dir.string() + " (pass --force)");
    }
  }
  fs::create_directories(dir);
}

void write_run_record(const fs::path& dir, const std::string& command, const json& config, const json& seeds) {
  const std::string canonical = config.dump();
  json record{{"tool", "stylegate"},
              {"version", kVersion},
              {"command", command},
              {"config_hash", "fnv1a64:" + hex64(fnv1a(canonical))},
              {"seeds", seeds},
              {"formats", {{"run_config", kRunConfigVersion}, {"dataset", 1}, {"checkpoint", 1}}},
              {"config", config}};
  write_json(dir / "run.json", record);
}

json seeds_of(const RunConfig& rc) {
  json seeds{{"seed", rc.seed}};
  for (const char* section : {"data", "model", "train", "analysis"}) {
    if (rc.resolved.contains(section) && rc.resolved.at(section).contains("seed")) {
      seeds[section] = rc.resolved.at(section).at("seed");
    }
  }
  if (rc.resolved.contains("experiment")) seeds["experiment"] = rc.resolved.at("experiment").at("seeds");
  return seeds;
}

RunConfig load_run_config(const GlobalFlags& flags, std::ostream& err) {
  if (flags.config.empty()) throw ConfigError("--config: required for this command");
  RunConfig rc = resolve_run_config(read_json(flags.config), flags.seed);
  if (rc.seed_was_filled) err << "note: config has no seed; using seed " << rc.seed << "\n";
  return rc;
}

Dataset dataset_for(const RunConfig& rc) {
  if (rc.resolved.contains("dataset_dir")) return Dataset::load(rc.resolved.at("dataset_dir").get<std::string>());
  if (rc.resolved.contains("data")) return generate_dataset(benchmark_spec_from_json(rc.resolved.at("data")));
  throw ConfigError("dataset_dir: required (or give a data section to generate one)");
}

int cmd_gen_data(const GlobalFlags& flags, std::ostream& out, std::ostream& err) {
  const RunConfig rc = load_run_config(flags, err);
  if (!rc.resolved.contains("data")) throw ConfigError("data: required for gen-data");
  const BenchmarkSpec spec = benchmark_spec_from_json(rc.resolved.at("data"));
  const fs::path dir = output_dir(flags, &rc);
  const Dataset data = generate_dataset(spec);
  prepare_output(dir, flags.force);
  data.save(dir);
  write_run_record(dir, "gen-data", rc.resolved, seeds_of(rc));
  out << dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const GlobalFlags& flags, std::ostream& out, std::ostream& err) {
  const RunConfig rc = load_run_config(flags, err);
  const ModelConfig model_cfg = model_config_from_json(rc.resolved.value("model", json::object()));
  const TrainConfig train_cfg = train_config_from_json(rc.resolved.value("train", json::object()));
  const fs::path dir = output_dir(flags, &rc);
  const Dataset data = dataset_for(rc);
  prepare_output(dir, flags.force);

  {
    const StyleModel probe = StyleModel::init(model_cfg);
    err << to_string(model_cfg.variant) << ": " << probe.parameter_count() << " parameters ("
        << probe.expert_parameter_count() << " in style experts)\n";
  }
  const TrainResult result = train(model_cfg, data, train_cfg);
  result.checkpoint.save(dir);
  write_train_log(dir / "metrics.csv", result.log);
  std::string evals = "step,split,mse\n";
  for (const EvalLogRow& row : result.evals) {
    evals += std::to_string(row.step) + "," + row.split + "," + json(row.mse).dump() + "\n";
  }
  write_text(dir / "evals.csv", evals);
  json summary = json::object();
  for (Split s : {Split::kEvalSeen, Split::kEvalUnseen}) {
    if (data.has_split(s)) summary[to_string(s)] = evaluate(result.checkpoint.model, data, s, 0, flags.threads).to_json();
  }
  write_json(dir / "metrics.json", summary);
  write_run_record(dir, "train", rc.resolved, seeds_of(rc));
  out << summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_eval(const GlobalFlags& flags, const std::string& checkpoint, const std::string& dataset,
             const std::string& split_name, std::size_t k, std::ostream& out) {
  const Split split = split_from_string(split_name);
  const Checkpoint ckpt = Checkpoint::load(checkpoint);
  const Dataset data = Dataset::load(dataset);
  if (!data.has_split(split)) throw InputError("dataset has no split " + split_name);
  const MetricsBundle m = evaluate(ckpt.model, data, split, k, flags.threads);
  json result = m.to_json();
  result["split"] = split_name;
  result["variant"] = to_string(ckpt.model.config().variant);
  result["k"] = ckpt.model.config().variant == Variant::kMoe ? (k > 0 ? k : ckpt.model.config().gating.k_infer) : 0;
  out << result.dump(2) << "\n";
  return kExitOk;
}

int cmd_analyze(const GlobalFlags& flags, const std::string& checkpoint, const std::string& dataset, std::size_t k,
                std::ostream& out, std::ostream& err) {
  std::optional<RunConfig> rc;
  if (!flags.config.empty()) rc = load_run_config(flags, err);
  SubsetSpec subset;
  if (rc && rc->resolved.contains("analysis")) subset = subset_from_json(rc->resolved.at("analysis"));
  if (k > 0) subset.k_override = k;
  if (flags.seed) subset.seed = *flags.seed;
  const fs::path dir = output_dir(flags, rc ? &*rc : nullptr);
  const Checkpoint ckpt = Checkpoint::load(checkpoint);
  const Dataset data = Dataset::load(dataset);
  const UtilizationReport report = gating_analysis(ckpt.model, data, subset);
  prepare_output(dir, flags.force);
  report.write(dir);
  json config = rc ? rc->resolved : json::object();
  config["checkpoint"] = checkpoint;
  config["dataset_dir"] = dataset;
  config["analysis_resolved"] = {{"samples", subset.samples}, {"seed", subset.seed}, {"k_override", subset.k_override}};
  write_run_record(dir, "analyze", config, json{{"analysis", subset.seed}});
  out << report.to_csv();
  return kExitOk;
}

int cmd_compare(const GlobalFlags& flags, std::ostream& out, std::ostream& err) {
  const RunConfig rc = load_run_config(flags, err);
  const fs::path dir = output_dir(flags, &rc);
  const json& doc = rc.resolved;
  if (doc.contains("checkpoints") == doc.contains("experiment")) {
    throw ConfigError("compare: give exactly one of checkpoints or experiment");
  }
  if (doc.contains("checkpoints")) {
    const json& paths = doc.at("checkpoints");
    if (!paths.is_object() || paths.empty()) throw ConfigError("checkpoints: expected {variant: path}");
    const Dataset data = dataset_for(rc);
    std::vector<Checkpoint> loaded;
    std::vector<std::string> names;
    for (const auto& [name, path] : paths.items()) {
      names.push_back(name);
      loaded.push_back(Checkpoint::load(path.get<std::string>()));
    }
    std::vector<std::pair<std::string, const StyleModel*>> models;
    for (std::size_t i = 0; i < loaded.size(); ++i) models.emplace_back(names[i], &loaded[i].model);
    const ComparisonTable table = compare_variants(models, data, {Split::kEvalSeen, Split::kEvalUnseen}, flags.threads);
    prepare_output(dir, flags.force);
    table.write(dir);
    write_run_record(dir, "compare", doc, seeds_of(rc));
    out << table.to_csv();
    return kExitOk;
  }

  json exp = doc.at("experiment");
  for (const char* section : {"data", "model", "train"}) {
    if (doc.contains(section)) exp[section] = doc.at(section);
  }
  ExperimentConfig cfg = experiment_config_from_json(exp);
  cfg.threads = flags.threads;
  prepare_output(dir, flags.force);
  const ExperimentResult result = run_experiment(cfg);
  result.median.write(dir);
  std::string per_seed = "seed,variant,split,cosine,distortion,frame_error,mse\n";
  for (const SeedResult& sr : result.seeds) {
    const std::string csv = sr.table.to_csv();
    std::size_t pos = csv.find('\n') + 1;
    while (pos < csv.size()) {
      const std::size_t end = csv.find('\n', pos);
      per_seed += std::to_string(sr.seed) + "," + csv.substr(pos, end - pos + 1);
      pos = end + 1;
    }
    if (sr.utilization) sr.utilization->write(dir / ("seed_" + std::to_string(sr.seed)));
  }
  write_text(dir / "per_seed.csv", per_seed);
  write_run_record(dir, "compare", doc, seeds_of(rc));
  out << result.median.to_csv();
  return kExitOk;
}

}  // namespace

RunConfig resolve_run_config(const json& doc, std::optional<std::uint64_t> seed_flag) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (!kTopLevelKeys.count(key)) throw ConfigError(key + ": unknown key");
  }
  if (!doc.contains("version")) throw ConfigError("version: required");
  if (!doc.at("version").is_number_integer() || doc.at("version").get<int>() != kRunConfigVersion) {
    throw ConfigError("version: unsupported value " + doc.at("version").dump() + " (expected " +
                      std::to_string(kRunConfigVersion) + ")");
  }
  RunConfig rc;
  rc.resolved = doc;
  if (seed_flag) {
    rc.seed = *seed_flag;
  } else if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_integer() || doc.at("seed").get<std::int64_t>() < 0) throw ConfigError("seed: expected a non-negative integer");
    rc.seed = doc.at("seed").get<std::uint64_t>();
  } else {
    rc.seed_was_filled = true;
  }
  rc.resolved["seed"] = rc.seed;
  for (const char* key : {"output_dir", "dataset_dir"}) {
    if (doc.contains(key) && !doc.at(key).is_string()) throw ConfigError(std::string(key) + ": expected a string");
  }

  for (const char* section : {"data", "model", "train", "analysis"}) {
    if (!doc.contains(section)) continue;
    if (!doc.at(section).is_object()) throw ConfigError(std::string(section) + ": expected an object");
    fill_seed(rc.resolved[section], rc.seed);
  }
  if (rc.resolved.contains("data")) benchmark_spec_from_json(rc.resolved.at("data"));
  if (rc.resolved.contains("model")) model_config_from_json(rc.resolved.at("model")).validate();
  if (rc.resolved.contains("train")) train_config_from_json(rc.resolved.at("train")).validate();
  if (rc.resolved.contains("analysis")) subset_from_json(rc.resolved.at("analysis"));
  if (rc.resolved.contains("experiment")) {
    json& exp = rc.resolved["experiment"];
    if (!exp.is_object()) throw ConfigError("experiment: expected an object");
    for (const char* key : {"data", "model", "train"}) {
      if (exp.contains(key)) throw ConfigError(std::string("experiment.") + key + ": set it at the top level");
    }
    if (!exp.contains("seeds")) {
      json seeds = json::array();
      for (std::uint64_t s = 0; s < 10; ++s) seeds.push_back(rc.seed + s);
      exp["seeds"] = seeds;
    }
    if (exp.contains("subset")) fill_seed(exp["subset"], rc.seed);
    experiment_config_from_json(exp);
  }
  if (rc.resolved.contains("checkpoints") && !rc.resolved.at("checkpoints").is_object()) {
    throw ConfigError("checkpoints: expected {variant: path}");
  }
  return rc;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"stylegate: sparse mixture-of-style-experts toolkit"};
  app.name("stylegate");
  app.require_subcommand(1);
  app.fallthrough();
  GlobalFlags flags;
  std::uint64_t seed_value = 0;
  app.add_option("--config", flags.config, "Run configuration (JSON)");
  app.add_option("--out", flags.out, "Output directory");
  auto* seed_opt = app.add_option("--seed", seed_value, "Override the configuration seed");
  app.add_flag("--force", flags.force, "Overwrite a nonempty output directory");
  app.add_option("--threads", flags.threads, "Evaluation worker threads")->check(CLI::PositiveNumber);

  std::string checkpoint, dataset, split = "eval_unseen";
  std::size_t k = 0;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic benchmark dataset");
  auto* trn = app.add_subcommand("train", "Train a model variant");
  auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint; metrics JSON on stdout");
  evl->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  evl->add_option("--dataset", dataset, "Dataset directory")->required();
  evl->add_option("--split", split, "train, eval_seen or eval_unseen");
  evl->add_option("--k", k, "Experts per input at inference (0 keeps the trained value)");
  auto* ana = app.add_subcommand("analyze", "Gating utilization report");
  ana->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  ana->add_option("--dataset", dataset, "Dataset directory")->required();
  ana->add_option("--k", k, "Experts per input (0 keeps the trained value)");
  auto* cmp = app.add_subcommand("compare", "Variant comparison table");

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  if (seed_opt->count() > 0) flags.seed = seed_value;

  try {
    if (gen->parsed()) return cmd_gen_data(flags, out, err);
    if (trn->parsed()) return cmd_train(flags, out, err);
    if (evl->parsed()) return cmd_eval(flags, checkpoint, dataset, split, k, out);
    if (ana->parsed()) return cmd_analyze(flags, checkpoint, dataset, k, out, err);
    if (cmp->parsed()) return cmd_compare(flags, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const MissingFileError& e) {
    err << "missing file: " << e.what() << "\n";
    return kExitMissing;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace stylegate::cli
