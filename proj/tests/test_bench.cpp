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

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ntl/bench.hpp"
#include "ntl/errors.hpp"
#include "test_helpers.hpp"

using namespace ntl;
using namespace ntl::bench;
namespace fs = std::filesystem;

namespace {

std::string scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

// Tiny but complete experiment config (seconds-scale training).
std::string tiny_config(const std::string& out_dir, uint64_t seed = 1, double lambda = 1.0) {
  return std::string(R"({
    "dataset": {
      "base": "synthetic_glyphs",
      "seed": 5,
      "split_seed": 3,
      "glyphs": {"count": 120, "image_size": 32},
      "shift": [{"kind": "rotation", "magnitude": 0.6}, {"kind": "color_invert", "magnitude": 0.6}]
    },
    "method": {
      "name": "ntl",
      "objective": {"target_output_reg": "max_kl_to_label", "target_feature_reg": "max_mmd",
                    "lambda": )") +
         std::to_string(lambda) + R"(, "clamp_bound": 30.0}
    },
    "run": {"seed": )" +
         std::to_string(seed) + R"(, "epochs": 2, "batch_size": 16, "learning_rate": 0.002,
            "arch": "conv:4,8|in:1x32|classes:10"},
    "attacks": [
      {"family": "target_ft", "strategy": "direct_FC", "budget_fraction": 0.25, "epochs": 2,
       "learning_rate": 0.001, "seed": 2}
    ],
    "output_dir": ")" +
         out_dir + R"("
  })";
}

}  // namespace

TEST_CASE("config validation lists field paths") {
  try {
    parse_config(R"({"run": {"epochs": -3, "bogus_key": 1}, "dataset": {"base": "nope"}})");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    std::string msg = e.what();
    CHECK(msg.find("run.epochs") != std::string::npos);
    CHECK(msg.find("run.bogus_key") != std::string::npos);
    CHECK(msg.find("dataset.base") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("{not json"), ValidationError);
  // defaults provide a shift, so shift+trigger together must be rejected
  CHECK_THROWS_AS(parse_config(R"({"dataset": {"trigger": {"mode": "ov"}}})"), ValidationError);
  CHECK_NOTHROW(parse_config(R"({"dataset": {}})"));  // defaults fill everything in
}

TEST_CASE("sweep block requires exactly 5 values") {
  std::string base = tiny_config("/tmp/ntl_cfg_x");
  auto patched = base.substr(0, base.rfind('}')) +
                 R"(, "sweep": {"param_path": "method.objective.lambda", "values": [1, 2, 3]}})";
  CHECK_THROWS_AS(parse_config(patched), ValidationError);
}

TEST_CASE("defaults parse cleanly") {
  ExperimentConfig cfg = parse_config(default_config_json());
  CHECK(cfg.method.name == methods::MethodName::ntl);
  CHECK(cfg.dataset.shifts.size() == 2);
}

TEST_CASE("run ids are pure functions of the canonical config") {
  std::string dir = scratch_dir("ntl_bench_ids");
  ExperimentConfig a = parse_config(tiny_config(dir, 1));
  ExperimentConfig b = parse_config(tiny_config(dir, 1));
  ExperimentConfig c = parse_config(tiny_config(dir, 2));  // seed differs
  CHECK(run_id_for(a) == run_id_for(b));
  CHECK(run_id_for(a) != run_id_for(c));

  ExperimentConfig d = with_override(a, "method.objective.lambda", 0.5);
  CHECK(run_id_for(d) != run_id_for(a));
  CHECK(d.method.objective.lambda == 0.5);
  CHECK_THROWS_AS(with_override(a, "method.objective.nope", 1.0), ValidationError);
}

TEST_CASE("checkpoint round-trip is parameter-exact") {
  std::string dir = scratch_dir("ntl_bench_ckpt");
  ArchSpec arch;
  arch.input_channels = 1;
  arch.input_size = 8;
  arch.conv_channels = {4, 8};
  arch.num_classes = 5;
  arch.aux_domain_head = true;
  ModelBundle m = ModelBundle::init(arch, 123);
  std::string path = dir + "/model.ckpt";
  save_checkpoint(m, path);
  ModelBundle loaded = load_checkpoint(path);
  CHECK(loaded.parameter_checksum() == m.parameter_checksum());
  CHECK(loaded.arch() == arch);

  SUBCASE("metric replay after reload") {
    Rng rng(5);
    Tensor images = ntl::testing::random_tensor({10, 1, 8, 8}, rng, 0.0, 1.0);
    Tensor a = m.logits(images);
    Tensor b = loaded.logits(images);
    for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  }

  SUBCASE("truncation is an integrity error, not a misload") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::string cut = dir + "/cut.ckpt";
    std::ofstream out(cut, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 17));
    out.close();
    CHECK_THROWS_AS(load_checkpoint(cut), IoError);
  }

  SUBCASE("arch mismatch names both specs") {
    ArchSpec other = arch;
    other.conv_channels = {2};
    try {
      load_checkpoint(path, other);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      std::string msg = e.what();
      CHECK(msg.find(arch.to_string()) != std::string::npos);
      CHECK(msg.find(other.to_string()) != std::string::npos);
    }
  }
}

TEST_CASE("registry is append-only and idempotent") {
  std::string dir = scratch_dir("ntl_bench_reg");
  Registry reg(dir);
  RunRecord rec;
  rec.run_id = "cafe0000cafe0000";
  rec.config_json = "{}";
  rec.method_name = "ntl";
  rec.dataset_name = "x";
  rec.pretrain = Metrics::from_sa_ta(80.0, 10.0);
  rec.pretrain_val = Metrics::from_sa_ta(81.0, 11.0);
  reg.put(rec);
  CHECK(reg.contains(rec.run_id));
  reg.put(rec);  // identical content: fine
  RunRecord rerun = rec;
  rerun.wall_time_s = 5.0;  // wall time is the one volatile field
  CHECK_NOTHROW(reg.put(rerun));

  RunRecord changed = rec;
  changed.pretrain = Metrics::from_sa_ta(10.0, 90.0);
  CHECK_THROWS_AS(reg.put(changed), IoError);

  RunRecord loaded = reg.get(rec.run_id);
  CHECK(loaded.pretrain.sa == 80.0);
  CHECK(loaded.pretrain.oa == rec.pretrain.oa);
  CHECK_THROWS_AS(reg.get("ffffffffffffffff"), IoError);
  CHECK(reg.list() == std::vector<std::string>{rec.run_id});
}

TEST_CASE("delta formatting matches the reporting convention") {
  CHECK(format_delta(44.3 - 9.9) == "(+34.4)");
  CHECK(format_delta(81.7 - 83.9) == "(-2.2)");
  CHECK(format_delta(0.0) == "(+0.0)");
}

TEST_CASE("report rendering carries signed deltas") {
  RunRecord rec;
  rec.run_id = "deadbeef00000000";
  rec.config_json = "{}";
  rec.method_name = "ntl";
  rec.dataset_name = "glyphs";
  rec.pretrain = Metrics::from_sa_ta(83.9, 9.9);
  rec.pretrain_val = rec.pretrain;
  AttackRow row;
  row.spec.family = attacks::ThreatFamily::source_ft;
  row.spec.strategy = attacks::Strategy::transntl;
  row.pre = rec.pretrain;
  row.post = Metrics::from_sa_ta(81.7, 44.3);
  rec.attack_rows.push_back(row);

  std::string csv = render_csv({rec});
  CHECK(csv.find("(+34.4)") != std::string::npos);
  CHECK(csv.find("(-2.2)") != std::string::npos);
  CHECK(csv.find("source_ft/transntl") != std::string::npos);
  CHECK(csv.find("83.9") != std::string::npos);

  std::string md = render_markdown({rec});
  CHECK(md.find("44.3 (+34.4)") != std::string::npos);
  CHECK(md.find("81.7 (-2.2)") != std::string::npos);

  std::string svg = render_svg_bars({rec});
  CHECK(svg.find("<svg") != std::string::npos);

  // deltas are recomputed from pre/post on load, not trusted from disk
  std::string serialized = rec.to_json();
  RunRecord back = RunRecord::from_json(serialized);
  CHECK(back.attack_rows[0].sa_delta() == doctest::Approx(-2.2));
  CHECK(back.attack_rows[0].ta_delta() == doctest::Approx(34.4));
}

TEST_CASE("cli_train end to end: determinism, registry, artifacts") {
  std::string dir = scratch_dir("ntl_bench_train");
  ExperimentConfig cfg = parse_config(tiny_config(dir, 1));
  Registry reg(dir + "/registry");

  std::string id1 = cli_train(cfg, reg);
  RunRecord rec1 = reg.get(id1);
  CHECK(fs::exists(rec1.checkpoint_path));
  CHECK(fs::exists(rec1.history_path));
  CHECK(rec1.method_name == "ntl");
  CHECK(rec1.pretrain.oa == doctest::Approx(overall_score(rec1.pretrain.sa, rec1.pretrain.ta)));

  // identical config + seed: same id, identical metrics (idempotent put)
  std::string id2 = cli_train(cfg, reg);
  CHECK(id2 == id1);
  RunRecord rec2 = reg.get(id2);
  CHECK(rec2.pretrain.sa == rec1.pretrain.sa);
  CHECK(rec2.pretrain.ta == rec1.pretrain.ta);
}

TEST_CASE("cli_attack runs the battery against a stored checkpoint") {
  std::string dir = scratch_dir("ntl_bench_attack");
  ExperimentConfig cfg = parse_config(tiny_config(dir, 3));
  Registry reg(dir + "/registry");
  std::string base_id = cli_train(cfg, reg);

  std::string attack_id = cli_attack(base_id, cfg.attack_specs, reg);
  CHECK(attack_id != base_id);
  RunRecord rec = reg.get(attack_id);
  CHECK(rec.base_run_id == base_id);
  REQUIRE(rec.attack_rows.size() == 1);
  CHECK(rec.attack_rows[0].pre.sa == rec.pretrain.sa);

  // report over both records; reporting must not mutate the registry
  auto before_train = fs::file_size(dir + "/registry/" + base_id + ".json");
  auto paths = cli_report({base_id, attack_id}, reg, dir + "/reports", true);
  CHECK(fs::exists(paths.csv));
  CHECK(fs::exists(paths.markdown));
  CHECK(fs::exists(paths.svg));
  CHECK(fs::file_size(dir + "/registry/" + base_id + ".json") == before_train);

  CHECK_THROWS_AS(cli_attack("0000000000000000", cfg.attack_specs, reg), IoError);
}

TEST_CASE("sweep picks the best validation OA and persists all variants") {
  std::string dir = scratch_dir("ntl_bench_sweep");
  std::string base = tiny_config(dir, 4);
  auto swept = base.substr(0, base.rfind('}')) +
               R"(, "sweep": {"param_path": "method.objective.lambda", "values": [0.0, 0.5, 1.0, 2.0, 4.0]}})";
  ExperimentConfig cfg = parse_config(swept);
  Registry reg(dir + "/registry");

  std::string best = sweep(cfg, reg);
  auto ids = reg.list();
  CHECK(ids.size() == 5);  // all five variants persisted
  RunRecord best_rec = reg.get(best);
  for (const auto& id : ids) {
    RunRecord rec = reg.get(id);
    CHECK(best_rec.pretrain_val.oa >= rec.pretrain_val.oa);  // winner by validation OA
  }

  SUBCASE("identical values collapse to one variant and the tie keeps it") {
    std::string dir2 = scratch_dir("ntl_bench_sweep_tie");
    std::string tie = tiny_config(dir2, 4);
    auto tie_cfg = tie.substr(0, tie.rfind('}')) +
                   R"(, "sweep": {"param_path": "method.objective.lambda", "values": [1.0, 1.0, 1.0, 1.0, 1.0]}})";
    Registry reg2(dir2 + "/registry");
    ExperimentConfig c2 = parse_config(tie_cfg);
    std::string winner = sweep(c2, reg2);
    CHECK(winner == run_id_for(with_override(c2, "method.objective.lambda", 1.0)));
    CHECK(reg2.list().size() == 1);
  }
}
