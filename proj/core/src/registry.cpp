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

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "ntl/bench.hpp"
#include "ntl/errors.hpp"

namespace ntl::bench {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json metrics_to_json(const Metrics& m) { return json{{"sa", m.sa}, {"ta", m.ta}, {"oa", m.oa}}; }

Metrics metrics_from_json(const json& j) {
  Metrics m;
  m.sa = j.at("sa").get<double>();
  m.ta = j.at("ta").get<double>();
  m.oa = j.at("oa").get<double>();
  return m;
}

json attack_spec_to_json(const attacks::AttackSpec& a) {
  return json{{"family", attacks::to_string(a.family)},
              {"strategy", attacks::to_string(a.strategy)},
              {"budget_fraction", a.budget_fraction},
              {"epochs", a.epochs},
              {"learning_rate", a.learning_rate},
              {"seed", a.seed},
              {"optimizer", to_string(a.optimizer)},
              {"perturb_magnitude", a.perturb_magnitude}};
}

attacks::AttackSpec attack_spec_from_json(const json& j) {
  attacks::AttackSpec a;
  a.family = attacks::family_from_string(j.at("family").get<std::string>());
  a.strategy = attacks::strategy_from_string(j.at("strategy").get<std::string>());
  a.budget_fraction = j.at("budget_fraction").get<double>();
  a.epochs = j.at("epochs").get<int>();
  a.learning_rate = j.at("learning_rate").get<double>();
  a.seed = j.at("seed").get<uint64_t>();
  a.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  a.perturb_magnitude = j.value("perturb_magnitude", 0.25);
  return a;
}

}  // namespace

std::string RunRecord::to_json() const {
  json j;
  j["run_id"] = run_id;
  j["config"] = json::parse(config_json);
  j["method"] = method_name;
  j["dataset"] = dataset_name;
  j["pretrain"] = metrics_to_json(pretrain);
  j["pretrain_val"] = metrics_to_json(pretrain_val);
  j["wall_time_s"] = wall_time_s;
  j["artifacts"] = {{"checkpoint", checkpoint_path}, {"history", history_path}};
  if (!base_run_id.empty()) j["base_run_id"] = base_run_id;
  j["attacks"] = json::array();
  for (const auto& row : attack_rows) {
    json r;
    r["spec"] = attack_spec_to_json(row.spec);
    r["pre"] = metrics_to_json(row.pre);
    r["post"] = metrics_to_json(row.post);
    // informational; recomputed from pre/post on load
    r["deltas"] = {{"sa", row.sa_delta()}, {"ta", row.ta_delta()}};
    r["target_reads"] = {{"images", row.target_reads.image_reads}, {"labels", row.target_reads.label_reads}};
    j["attacks"].push_back(r);
  }
  return j.dump(2);
}

RunRecord RunRecord::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("corrupt run record: ") + e.what());
  }
  RunRecord rec;
  rec.run_id = j.at("run_id").get<std::string>();
  rec.config_json = j.at("config").dump(2);
  rec.method_name = j.at("method").get<std::string>();
  rec.dataset_name = j.at("dataset").get<std::string>();
  rec.pretrain = metrics_from_json(j.at("pretrain"));
  rec.pretrain_val = metrics_from_json(j.at("pretrain_val"));
  rec.wall_time_s = j.value("wall_time_s", 0.0);
  if (j.contains("artifacts")) {
    rec.checkpoint_path = j["artifacts"].value("checkpoint", "");
    rec.history_path = j["artifacts"].value("history", "");
  }
  rec.base_run_id = j.value("base_run_id", "");
  if (j.contains("attacks")) {
    for (const auto& r : j["attacks"]) {
      AttackRow row;
      row.spec = attack_spec_from_json(r.at("spec"));
      row.pre = metrics_from_json(r.at("pre"));
      row.post = metrics_from_json(r.at("post"));
      if (r.contains("target_reads")) {
        row.target_reads.image_reads = r["target_reads"].value("images", uint64_t{0});
        row.target_reads.label_reads = r["target_reads"].value("labels", uint64_t{0});
      }
      rec.attack_rows.push_back(std::move(row));
    }
  }
  return rec;
}

Registry::Registry(std::string root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw IoError("cannot create registry root: " + root_);
}

std::string Registry::path_for(const std::string& run_id) const { return root_ + "/" + run_id + ".json"; }

void Registry::put(const RunRecord& record) {
  if (record.run_id.empty()) throw ValidationError("record has no run_id");
  const std::string path = path_for(record.run_id);
  const std::string body = record.to_json();
  if (fs::exists(path)) {
    std::ifstream in(path);
    std::string existing((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    // A deterministic re-run reproduces everything but the wall time; the
    // first write wins. Diverging content under one id is an error.
    RunRecord a = RunRecord::from_json(existing);
    RunRecord b = record;
    a.wall_time_s = 0.0;
    b.wall_time_s = 0.0;
    if (a.to_json() == b.to_json()) return;
    throw IoError("registry is append-only: run " + record.run_id + " already exists with different content");
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    if (!f) throw IoError("cannot write run record: " + tmp);
    f << body;
  }
  fs::rename(tmp, path);
}

RunRecord Registry::get(const std::string& run_id) const {
  const std::string path = path_for(run_id);
  std::ifstream f(path);
  if (!f) throw IoError("unknown run_id: " + run_id);
  std::string body((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return RunRecord::from_json(body);
}

bool Registry::contains(const std::string& run_id) const { return fs::exists(path_for(run_id)); }

std::vector<std::string> Registry::list() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (!entry.is_regular_file()) continue;
    auto name = entry.path().filename().string();
    if (name.size() > 5 && name.substr(name.size() - 5) == ".json") ids.push_back(name.substr(0, name.size() - 5));
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string resolve_registry_root(const std::string& flag_value, const std::string& output_dir) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("NTL_REGISTRY"); env && *env) return env;
  return output_dir + "/registry";
}

}  // namespace ntl::bench
