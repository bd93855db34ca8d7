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

// Command-line front end: train / attack / report / sweep / validate-config.
// Exit codes: 0 success, 2 validation error, 3 divergence abort, 1 other.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ntl/bench.hpp"
#include "ntl/errors.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;

std::vector<std::string> split_ids(const std::string& csv) {
  std::vector<std::string> ids;
  std::string cur;
  for (char c : csv) {
    if (c == ',') {
      if (!cur.empty()) ids.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) ids.push_back(cur);
  return ids;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"non-transferable learning workbench"};
  app.require_subcommand(1);

  std::string config_path, registry_flag, run_id, run_ids_csv, out_dir = "reports";
  bool with_plot = false, print_defaults = false;

  auto* train = app.add_subcommand("train", "pre-train a model per config and register the run");
  train->add_option("--config", config_path, "experiment config (JSON)")->required();
  train->add_option("--registry", registry_flag, "registry root (default: $NTL_REGISTRY or <output_dir>/registry)");

  auto* attack = app.add_subcommand("attack", "run the config's attack battery against a stored run");
  attack->add_option("--run", run_id, "base run id")->required();
  attack->add_option("--config", config_path, "config providing the attacks block")->required();
  attack->add_option("--registry", registry_flag, "registry root");

  auto* report = app.add_subcommand("report", "emit CSV/Markdown (optionally SVG) for stored runs");
  report->add_option("--runs", run_ids_csv, "comma-separated run ids")->required();
  report->add_option("--out", out_dir, "output directory (default: reports)");
  report->add_option("--registry", registry_flag, "registry root");
  report->add_flag("--plot", with_plot, "also emit an SVG bar chart");

  auto* sweep_cmd = app.add_subcommand("sweep", "train the 5 sweep variants, report the best by validation OA");
  sweep_cmd->add_option("--config", config_path, "config with a sweep block")->required();
  sweep_cmd->add_option("--registry", registry_flag, "registry root");

  auto* validate = app.add_subcommand("validate-config", "parse and validate a config");
  validate->add_option("--config", config_path, "experiment config (JSON)");
  validate->add_flag("--print-defaults", print_defaults, "print the full default config and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) {
      if (print_defaults) {
        std::cout << ntl::bench::default_config_json() << "\n";
        return 0;
      }
      if (config_path.empty()) {
        std::cerr << "validate-config: --config or --print-defaults required\n";
        return kExitValidation;
      }
      ntl::bench::ExperimentConfig cfg = ntl::bench::load_config_file(config_path);
      std::cout << "ok: " << ntl::bench::run_id_for(cfg) << "\n";
      return 0;
    }

    if (train->parsed()) {
      auto cfg = ntl::bench::load_config_file(config_path);
      ntl::bench::Registry registry(ntl::bench::resolve_registry_root(registry_flag, cfg.output_dir));
      std::cout << ntl::bench::cli_train(cfg, registry) << "\n";
      return 0;
    }

    if (attack->parsed()) {
      auto cfg = ntl::bench::load_config_file(config_path);
      if (cfg.attack_specs.empty()) throw ntl::ValidationError("attacks: config has no attack specs");
      ntl::bench::Registry registry(ntl::bench::resolve_registry_root(registry_flag, cfg.output_dir));
      std::cout << ntl::bench::cli_attack(run_id, cfg.attack_specs, registry) << "\n";
      return 0;
    }

    if (report->parsed()) {
      ntl::bench::Registry registry(ntl::bench::resolve_registry_root(registry_flag, "runs"));
      auto ids = split_ids(run_ids_csv);
      auto paths = ntl::bench::cli_report(ids, registry, out_dir, with_plot);
      std::cout << paths.csv << "\n" << paths.markdown << "\n";
      if (!paths.svg.empty()) std::cout << paths.svg << "\n";
      return 0;
    }

    if (sweep_cmd->parsed()) {
      auto cfg = ntl::bench::load_config_file(config_path);
      ntl::bench::Registry registry(ntl::bench::resolve_registry_root(registry_flag, cfg.output_dir));
      std::cout << ntl::bench::sweep(cfg, registry) << "\n";
      return 0;
    }
  } catch (const ntl::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ntl::DivergenceError& e) {
    std::cerr << "aborted: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
