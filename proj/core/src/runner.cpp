// Copyright 2026 The ntlkit Authors. All Rights Reserved.
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

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "ntl/bench.hpp"
#include "ntl/errors.hpp"

namespace ntl::bench {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json history_to_json(const methods::TrainHistory& h) {
  json j;
  j["epochs"] = json::array();
  for (const auto& e : h.epochs) {
    json rec{{"epoch", e.epoch},
             {"train_loss", e.train_loss},
             {"train_acc", e.train_acc},
             {"source_val_acc", e.source_val_acc}};
    if (std::isfinite(e.target_val_acc)) rec["target_val_acc"] = e.target_val_acc;
    j["epochs"].push_back(rec);
  }
  j["provenance"] = {{"source", {{"images", h.source_reads.image_reads}, {"labels", h.source_reads.label_reads}}},
                     {"target", {{"images", h.target_reads.image_reads}, {"labels", h.target_reads.label_reads}}}};
  return j;
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << body;
}

}  // namespace

std::string cli_train(const ExperimentConfig& cfg, Registry& registry) {
  const std::string run_id = run_id_for(cfg);
  auto t0 = std::chrono::steady_clock::now();

  PreparedData data = build_dataset(cfg.dataset);
  ArchSpec arch = ArchSpec::parse(cfg.arch);
  arch.num_classes = data.pair.num_classes;
  arch.input_channels = static_cast<int>(data.pair.source->channels());
  arch.input_size = static_cast<int>(data.pair.source->height());
  if (cfg.method.objective.feature_reg == objectives::FeatureReg::domain_confusion) arch.aux_domain_head = true;

  ModelBundle init = ModelBundle::init(arch, cfg.run.seed);
  methods::TrainResult trained =
      methods::train_method(cfg.method, init, data.pair, data.source_split, data.target_split, cfg.run);

  RunRecord rec;
  rec.run_id = run_id;
  rec.config_json = cfg.canonical_json;
  rec.method_name = methods::to_string(cfg.method.name);
  rec.dataset_name = data.pair.source->name() + "->" + data.pair.target->name();
  rec.pretrain = evaluate_pair(trained.model, data.pair, data.source_split.test, data.target_split.test);
  rec.pretrain_val = evaluate_pair(trained.model, data.pair, data.source_split.val, data.target_split.val);

  fs::create_directories(cfg.output_dir);
  rec.checkpoint_path = cfg.output_dir + "/" + run_id + ".ckpt";
  rec.history_path = cfg.output_dir + "/" + run_id + ".history.json";
  save_checkpoint(trained.model, rec.checkpoint_path);
  write_file(rec.history_path, history_to_json(trained.history).dump(2));
  data::write_metadata_sidecar(*data.pair.target, cfg.output_dir + "/" + run_id + ".target-dataset.txt");

  auto t1 = std::chrono::steady_clock::now();
  rec.wall_time_s = std::chrono::duration<double>(t1 - t0).count();
  registry.put(rec);
  return run_id;
}

std::string cli_attack(const std::string& base_run_id, const std::vector<attacks::AttackSpec>& specs,
                       Registry& registry) {
  RunRecord base = registry.get(base_run_id);
  ExperimentConfig cfg = parse_config(base.config_json);
  auto t0 = std::chrono::steady_clock::now();

  PreparedData data = build_dataset(cfg.dataset);
  ModelBundle model = load_checkpoint(base.checkpoint_path);
  std::vector<attacks::AttackOutcome> outcomes =
      attacks::run_threat_battery(model, data.pair, data.source_split, data.target_split, specs);

  // The attack record hashes the base config, the base run id, and the specs.
  json id_src = json::parse(base.config_json);
  id_src["base_run_id"] = base_run_id;
  id_src["attacks"] = json::array();
  for (const auto& s : specs) {
    id_src["attacks"].push_back({{"family", attacks::to_string(s.family)},
                                 {"strategy", attacks::to_string(s.strategy)},
                                 {"budget_fraction", s.budget_fraction},
                                 {"epochs", s.epochs},
                                 {"learning_rate", s.learning_rate},
                                 {"seed", s.seed},
                                 {"optimizer", to_string(s.optimizer)},
                                 {"perturb_magnitude", s.perturb_magnitude}});
  }
  const std::string id_text = id_src.dump(2);
  uint64_t h = fnv1a(id_text.data(), id_text.size());
  char idbuf[24];
  std::snprintf(idbuf, sizeof(idbuf), "%016llx", static_cast<unsigned long long>(h));

  RunRecord rec;
  rec.run_id = idbuf;
  rec.config_json = id_text;
  rec.method_name = base.method_name;
  rec.dataset_name = base.dataset_name;
  rec.pretrain = base.pretrain;
  rec.pretrain_val = base.pretrain_val;
  rec.checkpoint_path = base.checkpoint_path;
  rec.history_path = base.history_path;
  rec.base_run_id = base_run_id;
  for (const auto& o : outcomes) rec.attack_rows.push_back({o.spec, o.pre, o.post, o.target_reads});

  auto t1 = std::chrono::steady_clock::now();
  rec.wall_time_s = std::chrono::duration<double>(t1 - t0).count();
  registry.put(rec);
  return rec.run_id;
}

ReportPaths cli_report(const std::vector<std::string>& run_ids, const Registry& registry, const std::string& out_dir,
                       bool with_plot) {
  std::vector<RunRecord> records;
  records.reserve(run_ids.size());
  for (const auto& id : run_ids) records.push_back(registry.get(id));

  fs::create_directories(out_dir);
  ReportPaths paths;
  paths.csv = out_dir + "/report.csv";
  paths.markdown = out_dir + "/report.md";
  write_file(paths.csv, render_csv(records));
  write_file(paths.markdown, render_markdown(records));
  if (with_plot) {
    paths.svg = out_dir + "/report.svg";
    write_file(paths.svg, render_svg_bars(records));
  }
  return paths;
}

std::string sweep(const ExperimentConfig& cfg, Registry& registry) {
  if (!cfg.sweep) throw ValidationError("sweep: config has no sweep block");
  const SweepConfig& sw = *cfg.sweep;
  std::string best_id;
  double best_oa = -1.0;
  for (double value : sw.values) {
    ExperimentConfig variant = with_override(cfg, sw.param_path, value);
    std::string id = registry.contains(run_id_for(variant)) ? run_id_for(variant) : cli_train(variant, registry);
    RunRecord rec = registry.get(id);
    if (rec.pretrain_val.oa > best_oa) {  // strict: ties keep the first-listed value
      best_oa = rec.pretrain_val.oa;
      best_id = id;
    }
  }
  return best_id;
}

}  // namespace ntl::bench
