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

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ntl/attacks.hpp"
#include "ntl/data.hpp"
#include "ntl/methods.hpp"

namespace ntl::bench {

// ---------------------------------------------------------------------------
// experiment configuration
// ---------------------------------------------------------------------------

struct DatasetConfig {
  data::DatasetBase base = data::DatasetBase::synthetic_glyphs;
  std::string path;  // digits_idx images file
  uint64_t seed = 7;
  uint64_t split_seed = 11;
  data::GlyphOptions glyphs;
  std::vector<data::ShiftSpec> shifts;       // exclusive with trigger
  std::optional<std::string> trigger_mode;   // "ov" | "aa"
  int64_t trigger_size = 4;
  double trigger_alpha = 1.0;
};

struct SweepConfig {
  std::string param_path;       // dotted json path, e.g. method.objective.lambda
  std::vector<double> values;   // exactly 5 candidates
};

/// A full experiment in one artifact: dataset block, method block, run block,
/// attack list, optional sweep. The canonical JSON (defaults resolved, keys
/// sorted) is what the run id hashes.
struct ExperimentConfig {
  DatasetConfig dataset;
  methods::MethodSpec method;
  RunConfig run;
  std::string arch = "conv:8,16,32|in:1x32|classes:10";
  std::vector<attacks::AttackSpec> attack_specs;
  std::optional<SweepConfig> sweep;
  std::string output_dir = "runs";

  std::string canonical_json;  // filled by the parser
};

/// Parses and validates a config; throws ValidationError listing every bad
/// field path.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);

/// The full default config as pretty JSON (dumped on request by the CLI).
std::string default_config_json();

/// Re-parses the config with one dotted-path field replaced (sweep support).
ExperimentConfig with_override(const ExperimentConfig& cfg, const std::string& param_path, double value);

/// Content hash of the canonical config (which includes the seed).
std::string run_id_for(const ExperimentConfig& cfg);

struct PreparedData {
  DomainPair pair;
  SplitTriple source_split;
  SplitTriple target_split;
};

/// Materializes the dataset block deterministically.
PreparedData build_dataset(const DatasetConfig& cfg);

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

/// Binary checkpoint with the arch spec embedded and an integrity hash;
/// round-trips are parameter-exact.
void save_checkpoint(const ModelBundle& model, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);
/// Load with an arch expectation; mismatch errors name both specs.
ModelBundle load_checkpoint(const std::string& path, const ArchSpec& expected);

// ---------------------------------------------------------------------------
// run registry
// ---------------------------------------------------------------------------

struct AttackRow {
  attacks::AttackSpec spec;
  Metrics pre;
  Metrics post;
  ProvenanceCounters target_reads;
  double sa_delta() const { return post.sa - pre.sa; }
  double ta_delta() const { return post.ta - pre.ta; }
};

struct RunRecord {
  std::string run_id;
  std::string config_json;     // canonical snapshot
  std::string method_name;
  std::string dataset_name;
  Metrics pretrain;            // test split
  Metrics pretrain_val;        // validation split (sweep selection)
  std::vector<AttackRow> attack_rows;
  double wall_time_s = 0.0;
  std::string checkpoint_path;
  std::string history_path;
  std::string base_run_id;     // set on attack records

  std::string to_json() const;
  static RunRecord from_json(const std::string& text);
};

/// Append-only directory of per-run JSON records named by run id. Rewriting
/// an id with identical content is a no-op; with different content an error.
class Registry {
 public:
  explicit Registry(std::string root);
  const std::string& root() const { return root_; }
  void put(const RunRecord& record);
  RunRecord get(const std::string& run_id) const;
  bool contains(const std::string& run_id) const;
  std::vector<std::string> list() const;

 private:
  std::string path_for(const std::string& run_id) const;
  std::string root_;
};

/// Registry root resolution: explicit flag, else the NTL_REGISTRY env var,
/// else "<output_dir>/registry".
std::string resolve_registry_root(const std::string& flag_value, const std::string& output_dir);

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

/// "(+34.4)" / "(-2.2)" delta formatting used across reports.
std::string format_delta(double delta);

std::string render_csv(const std::vector<RunRecord>& records);
std::string render_markdown(const std::vector<RunRecord>& records);
std::string render_svg_bars(const std::vector<RunRecord>& records);

// ---------------------------------------------------------------------------
// runner entry points (shared by the CLI and tests)
// ---------------------------------------------------------------------------

/// Trains per the config, evaluates, persists checkpoint + history + record.
/// Returns the run id.
std::string cli_train(const ExperimentConfig& cfg, Registry& registry);

/// Runs the config's attack battery against a stored checkpoint; persists a
/// new record referencing the base run. Returns the new run id.
std::string cli_attack(const std::string& base_run_id, const std::vector<attacks::AttackSpec>& specs,
                       Registry& registry);

struct ReportPaths {
  std::string csv;
  std::string markdown;
  std::string svg;  // empty unless requested
};

/// Renders reports for the given run ids into out_dir.
ReportPaths cli_report(const std::vector<std::string>& run_ids, const Registry& registry, const std::string& out_dir,
                       bool with_plot = false);

/// Trains the 5 sweep variants, persists all records, returns the run id of
/// the best validation-OA variant (ties resolve to the first listed value).
std::string sweep(const ExperimentConfig& cfg, Registry& registry);

}  // namespace ntl::bench
