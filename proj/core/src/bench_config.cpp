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

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ntl/bench.hpp"
#include "ntl/errors.hpp"

namespace ntl::bench {

using nlohmann::json;

namespace {

// Collects field-path qualified problems so a bad config reports everything
// at once.
struct Problems {
  std::vector<std::string> items;
  void add(const std::string& path, const std::string& msg) { items.push_back(path + ": " + msg); }
  void raise_if_any() const {
    if (items.empty()) return;
    std::ostringstream os;
    os << "invalid config:";
    for (const auto& i : items) os << "\n  " << i;
    throw ValidationError(os.str());
  }
};

json defaults_json() {
  json j;
  j["dataset"] = {
      {"base", "synthetic_glyphs"},
      {"path", ""},
      {"seed", 7},
      {"split_seed", 11},
      {"glyphs", {{"count", 1200}, {"image_size", 32}, {"num_classes", 10}}},
      {"shift", json::array({{{"kind", "rotation"}, {"magnitude", 0.6}}, {{"kind", "color_invert"}, {"magnitude", 0.6}}})},
  };
  j["method"] = {
      {"name", "ntl"},
      {"objective",
       {{"source_loss", "cross_entropy"},
        {"target_output_reg", "max_kl_to_label"},
        {"target_feature_reg", "max_mmd"},
        {"lambda", 1.0},
        {"clamp_bound", 30.0},
        {"mmd_bandwidth_scales", {0.25, 0.5, 1.0, 2.0, 4.0}},
        {"output_reg_weight", 1.0},
        {"feature_reg_weight", 1.0}}},
      {"params", json::object()},
      {"defense_consistency_weight", 0.0},
  };
  j["run"] = {{"seed", 1},        {"epochs", 12},           {"batch_size", 32},
              {"learning_rate", 2e-3}, {"optimizer", "adam"},    {"device_hint", "cpu"},
              {"arch", "conv:8,16,32|in:1x32|classes:10"}};
  j["attacks"] = json::array();
  j["output_dir"] = "runs";
  return j;
}

// Recursive merge: user values override defaults; unknown keys are kept and
// later rejected by the schema walk.
json merge(const json& base, const json& user) {
  if (!base.is_object() || !user.is_object()) return user;
  json out = base;
  for (auto it = user.begin(); it != user.end(); ++it) {
    if (out.contains(it.key()))
      out[it.key()] = merge(out[it.key()], it.value());
    else
      out[it.key()] = it.value();
  }
  return out;
}

double require_number(const json& j, const std::string& path, const char* key, Problems& p, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) {
    p.add(path + "." + key, "expected a number");
    return fallback;
  }
  return j[key].get<double>();
}

std::string require_string(const json& j, const std::string& path, const char* key, Problems& p,
                           const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string()) {
    p.add(path + "." + key, "expected a string");
    return fallback;
  }
  return j[key].get<std::string>();
}

void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> known, Problems& p) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) ok = true;
    if (!ok) p.add(path + "." + it.key(), "unknown field");
  }
}

data::ShiftSpec parse_shift(const json& j, const std::string& path, Problems& p) {
  data::ShiftSpec s;
  reject_unknown(j, path, {"kind", "magnitude"}, p);
  try {
    s.kind = data::shift_kind_from_string(require_string(j, path, "kind", p, "rotation"));
  } catch (const ValidationError& e) {
    p.add(path + ".kind", e.what());
  }
  s.magnitude = require_number(j, path, "magnitude", p, 0.5);
  if (s.magnitude < 0.0 || s.magnitude > 1.0) p.add(path + ".magnitude", "must lie in [0,1]");
  return s;
}

attacks::AttackSpec parse_attack(const json& j, const std::string& path, Problems& p) {
  attacks::AttackSpec a;
  reject_unknown(j, path,
                 {"family", "strategy", "budget_fraction", "epochs", "learning_rate", "seed", "optimizer",
                  "perturb_magnitude"},
                 p);
  try {
    a.family = attacks::family_from_string(require_string(j, path, "family", p, "target_ft"));
  } catch (const ValidationError& e) {
    p.add(path + ".family", e.what());
  }
  try {
    a.strategy = attacks::strategy_from_string(require_string(j, path, "strategy", p, "direct_all"));
  } catch (const ValidationError& e) {
    p.add(path + ".strategy", e.what());
  }
  a.budget_fraction = require_number(j, path, "budget_fraction", p, 0.10);
  a.epochs = static_cast<int>(require_number(j, path, "epochs", p, 20));
  a.learning_rate = require_number(j, path, "learning_rate", p, 1e-3);
  a.seed = static_cast<uint64_t>(require_number(j, path, "seed", p, 1));
  a.perturb_magnitude = require_number(j, path, "perturb_magnitude", p, 0.25);
  try {
    a.optimizer = optimizer_from_string(require_string(j, path, "optimizer", p, "adam"));
  } catch (const ValidationError& e) {
    p.add(path + ".optimizer", e.what());
  }
  try {
    a.validate();
  } catch (const ValidationError& e) {
    p.add(path, e.what());
  }
  return a;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json user;
  try {
    user = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!user.is_object()) throw ValidationError("config root must be a JSON object");

  json j = merge(defaults_json(), user);
  Problems p;
  reject_unknown(j, "$", {"dataset", "method", "run", "attacks", "sweep", "output_dir"}, p);

  ExperimentConfig cfg;

  // ---- dataset ----
  {
    const json& d = j["dataset"];
    const std::string path = "dataset";
    if (!d.is_object()) {
      p.add(path, "expected an object");
    } else {
      reject_unknown(d, path, {"base", "path", "seed", "split_seed", "glyphs", "shift", "trigger"}, p);
      std::string base = require_string(d, path, "base", p, "synthetic_glyphs");
      if (base == "synthetic_glyphs")
        cfg.dataset.base = data::DatasetBase::synthetic_glyphs;
      else if (base == "digits_idx")
        cfg.dataset.base = data::DatasetBase::digits_idx;
      else
        p.add(path + ".base", "expected synthetic_glyphs|digits_idx");
      cfg.dataset.path = require_string(d, path, "path", p, "");
      if (cfg.dataset.base == data::DatasetBase::digits_idx && cfg.dataset.path.empty())
        p.add(path + ".path", "required for digits_idx");
      cfg.dataset.seed = static_cast<uint64_t>(require_number(d, path, "seed", p, 7));
      cfg.dataset.split_seed = static_cast<uint64_t>(require_number(d, path, "split_seed", p, 11));
      if (d.contains("glyphs")) {
        const json& g = d["glyphs"];
        reject_unknown(g, path + ".glyphs", {"count", "image_size", "num_classes"}, p);
        cfg.dataset.glyphs.count = static_cast<int64_t>(require_number(g, path + ".glyphs", "count", p, 1200));
        cfg.dataset.glyphs.image_size = static_cast<int>(require_number(g, path + ".glyphs", "image_size", p, 32));
        cfg.dataset.glyphs.num_classes = static_cast<int>(require_number(g, path + ".glyphs", "num_classes", p, 10));
        if (cfg.dataset.glyphs.image_size != 32 && cfg.dataset.glyphs.image_size != 64)
          p.add(path + ".glyphs.image_size", "expected 32 or 64");
      }
      bool has_shift = d.contains("shift") && !d["shift"].is_null() && !(d["shift"].is_array() && d["shift"].empty());
      bool has_trigger = d.contains("trigger") && !d["trigger"].is_null();
      if (has_shift && has_trigger) p.add(path, "shift and trigger are mutually exclusive");
      if (!has_shift && !has_trigger) p.add(path, "one of shift or trigger is required");
      if (has_shift) {
        const json& s = d["shift"];
        if (s.is_array()) {
          for (size_t i = 0; i < s.size(); ++i)
            cfg.dataset.shifts.push_back(parse_shift(s[i], path + ".shift[" + std::to_string(i) + "]", p));
        } else if (s.is_object()) {
          cfg.dataset.shifts.push_back(parse_shift(s, path + ".shift", p));
        } else {
          p.add(path + ".shift", "expected an object or array");
        }
      }
      if (has_trigger) {
        const json& t = d["trigger"];
        reject_unknown(t, path + ".trigger", {"mode", "size", "alpha"}, p);
        std::string mode = require_string(t, path + ".trigger", "mode", p, "ov");
        if (mode != "ov" && mode != "aa") p.add(path + ".trigger.mode", "expected ov|aa");
        cfg.dataset.trigger_mode = mode;
        cfg.dataset.trigger_size = static_cast<int64_t>(require_number(t, path + ".trigger", "size", p, 4));
        cfg.dataset.trigger_alpha = require_number(t, path + ".trigger", "alpha", p, 1.0);
        if (cfg.dataset.trigger_alpha <= 0.0 || cfg.dataset.trigger_alpha > 1.0)
          p.add(path + ".trigger.alpha", "must lie in (0,1]");
      }
    }
  }

  // ---- method ----
  {
    const json& m = j["method"];
    const std::string path = "method";
    if (!m.is_object()) {
      p.add(path, "expected an object");
    } else {
      reject_unknown(m, path, {"name", "objective", "params", "defense_consistency_weight"}, p);
      try {
        cfg.method.name = methods::method_from_string(require_string(m, path, "name", p, "ntl"));
      } catch (const ValidationError& e) {
        p.add(path + ".name", e.what());
      }
      cfg.method.defense_consistency_weight = require_number(m, path, "defense_consistency_weight", p, 0.0);
      if (m.contains("params")) {
        if (!m["params"].is_object()) {
          p.add(path + ".params", "expected an object");
        } else {
          for (auto it = m["params"].begin(); it != m["params"].end(); ++it) {
            if (!it.value().is_number())
              p.add(path + ".params." + it.key(), "expected a number");
            else
              cfg.method.params[it.key()] = it.value().get<double>();
          }
        }
      }
      const json& o = m["objective"];
      const std::string opath = path + ".objective";
      reject_unknown(o, opath,
                     {"source_loss", "target_output_reg", "target_feature_reg", "lambda", "clamp_bound",
                      "mmd_bandwidth_scales", "output_reg_weight", "feature_reg_weight"},
                     p);
      std::string src_loss = require_string(o, opath, "source_loss", p, "cross_entropy");
      if (src_loss != "cross_entropy") p.add(opath + ".source_loss", "only cross_entropy is supported");
      try {
        cfg.method.objective.output_reg =
            objectives::output_reg_from_string(require_string(o, opath, "target_output_reg", p, "none"));
      } catch (const ValidationError& e) {
        p.add(opath + ".target_output_reg", e.what());
      }
      try {
        cfg.method.objective.feature_reg =
            objectives::feature_reg_from_string(require_string(o, opath, "target_feature_reg", p, "none"));
      } catch (const ValidationError& e) {
        p.add(opath + ".target_feature_reg", e.what());
      }
      cfg.method.objective.lambda = require_number(o, opath, "lambda", p, 1.0);
      cfg.method.objective.clamp_bound = require_number(o, opath, "clamp_bound", p, 30.0);
      cfg.method.objective.output_reg_weight = require_number(o, opath, "output_reg_weight", p, 1.0);
      cfg.method.objective.feature_reg_weight = require_number(o, opath, "feature_reg_weight", p, 1.0);
      if (o.contains("mmd_bandwidth_scales")) {
        if (!o["mmd_bandwidth_scales"].is_array()) {
          p.add(opath + ".mmd_bandwidth_scales", "expected an array of numbers");
        } else {
          cfg.method.objective.mmd_bandwidth_scales.clear();
          for (const auto& v : o["mmd_bandwidth_scales"]) {
            if (!v.is_number())
              p.add(opath + ".mmd_bandwidth_scales", "expected an array of numbers");
            else
              cfg.method.objective.mmd_bandwidth_scales.push_back(v.get<double>());
          }
        }
      }
      if (cfg.method.objective.output_reg == objectives::OutputReg::min_kl_to_style_label)
        p.add(opath + ".target_output_reg", "min_kl_to_style_label needs an in-process style provider");
      try {
        cfg.method.validate();
      } catch (const ValidationError& e) {
        p.add(path, e.what());
      }
    }
  }

  // ---- run ----
  {
    const json& r = j["run"];
    const std::string path = "run";
    if (!r.is_object()) {
      p.add(path, "expected an object");
    } else {
      reject_unknown(r, path,
                     {"seed", "epochs", "batch_size", "learning_rate", "optimizer", "device_hint", "arch"}, p);
      cfg.run.seed = static_cast<uint64_t>(require_number(r, path, "seed", p, 1));
      cfg.run.epochs = static_cast<int>(require_number(r, path, "epochs", p, 12));
      cfg.run.batch_size = static_cast<int>(require_number(r, path, "batch_size", p, 32));
      cfg.run.learning_rate = require_number(r, path, "learning_rate", p, 2e-3);
      cfg.run.device_hint = require_string(r, path, "device_hint", p, "cpu");
      cfg.arch = require_string(r, path, "arch", p, cfg.arch);
      try {
        cfg.run.optimizer_name = optimizer_from_string(require_string(r, path, "optimizer", p, "adam"));
      } catch (const ValidationError& e) {
        p.add(path + ".optimizer", e.what());
      }
      if (cfg.run.epochs < 1) p.add(path + ".epochs", "must be positive");
      cfg.run.lambda = cfg.method.objective.lambda;
      cfg.run.clamp_bound = cfg.method.objective.clamp_bound;
      try {
        cfg.run.validate();
      } catch (const ValidationError& e) {
        p.add(path, e.what());
      }
      try {
        ArchSpec::parse(cfg.arch);
      } catch (const std::exception& e) {
        p.add(path + ".arch", e.what());
      }
    }
  }

  // ---- attacks ----
  if (j.contains("attacks")) {
    if (!j["attacks"].is_array()) {
      p.add("attacks", "expected an array");
    } else {
      const auto& arr = j["attacks"];
      for (size_t i = 0; i < arr.size(); ++i)
        cfg.attack_specs.push_back(parse_attack(arr[i], "attacks[" + std::to_string(i) + "]", p));
    }
  }

  // ---- sweep ----
  if (j.contains("sweep") && !j["sweep"].is_null()) {
    const json& s = j["sweep"];
    reject_unknown(s, "sweep", {"param_path", "values"}, p);
    SweepConfig sw;
    sw.param_path = require_string(s, "sweep", "param_path", p, "");
    if (sw.param_path.empty()) p.add("sweep.param_path", "required");
    if (!s.contains("values") || !s["values"].is_array() || s["values"].size() != 5) {
      p.add("sweep.values", "expected exactly 5 candidate values");
    } else {
      for (const auto& v : s["values"]) {
        if (!v.is_number())
          p.add("sweep.values", "expected numbers");
        else
          sw.values.push_back(v.get<double>());
      }
    }
    cfg.sweep = sw;
  }

  cfg.output_dir = require_string(j, "$", "output_dir", p, "runs");
  p.raise_if_any();

  cfg.canonical_json = j.dump(2);
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_config(buf.str());
}

std::string default_config_json() { return defaults_json().dump(2); }

ExperimentConfig with_override(const ExperimentConfig& cfg, const std::string& param_path, double value) {
  json j = json::parse(cfg.canonical_json);
  json* node = &j;
  std::stringstream ss(param_path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ValidationError("sweep.param_path: empty path");
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i]))
      throw ValidationError("sweep.param_path: no such field '" + param_path + "'");
    node = &(*node)[parts[i]];
  }
  if (!node->is_object() || !node->contains(parts.back()))
    throw ValidationError("sweep.param_path: no such field '" + param_path + "'");
  (*node)[parts.back()] = value;
  j.erase("sweep");  // variants themselves carry no sweep block
  return parse_config(j.dump());
}

std::string run_id_for(const ExperimentConfig& cfg) {
  uint64_t h = fnv1a(cfg.canonical_json.data(), cfg.canonical_json.size());
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PreparedData build_dataset(const DatasetConfig& cfg) {
  DatasetPtr base;
  switch (cfg.base) {
    case data::DatasetBase::synthetic_glyphs:
      base = std::make_shared<Dataset>(data::synthesize_glyphs(cfg.seed, cfg.glyphs));
      break;
    case data::DatasetBase::digits_idx:
      base = std::make_shared<Dataset>(data::load_or_synthesize(data::DatasetBase::digits_idx, cfg.path));
      break;
  }

  PreparedData out;
  if (cfg.trigger_mode) {
    data::TriggerSpec trig = data::TriggerSpec::checkerboard_default(base->channels());
    if (cfg.trigger_size != 4) {
      trig.pattern = Tensor({base->channels(), cfg.trigger_size, cfg.trigger_size});
      for (int64_t c = 0; c < base->channels(); ++c)
        for (int64_t y = 0; y < cfg.trigger_size; ++y)
          for (int64_t x = 0; x < cfg.trigger_size; ++x)
            trig.pattern[(c * cfg.trigger_size + y) * cfg.trigger_size + x] = ((x + y) % 2 == 0) ? 1.0 : 0.0;
    }
    trig.alpha = cfg.trigger_alpha;
    out.pair = *cfg.trigger_mode == "ov" ? data::build_ov_pair(base, trig) : data::build_aa_pair(base, trig);
  } else {
    out.pair = data::make_domain_pair(base, cfg.shifts, derive_seed(cfg.seed, "shift"));
  }
  // Source and target are index-aligned transforms, so one split serves both
  // without leaking shifted test images into target training.
  out.source_split = data::split_811(*out.pair.source, cfg.split_seed);
  out.target_split = out.source_split;
  return out;
}

}  // namespace ntl::bench
