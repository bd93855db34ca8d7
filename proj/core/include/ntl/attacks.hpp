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

#include <span>
#include <string>
#include <vector>

#include "ntl/auxgen.hpp"
#include "ntl/dataset.hpp"
#include "ntl/metrics.hpp"
#include "ntl/model.hpp"
#include "ntl/run_config.hpp"

namespace ntl::attacks {

// Three post-training threat families: fine-tuning on a small labeled source
// subset (including the perturbation/self-distillation attack), fine-tuning
// on a small labeled target subset, and source-free adaptation on unlabeled
// target data.

enum class ThreatFamily { source_ft, target_ft, sfda };
enum class Strategy { initFC_all, initFC_FC, direct_FC, direct_all, transntl, shot };

struct AttackSpec {
  ThreatFamily family = ThreatFamily::source_ft;
  Strategy strategy = Strategy::direct_all;
  double budget_fraction = 0.10;
  int epochs = 20;
  double learning_rate = 1e-3;
  uint64_t seed = 1;
  OptimizerName optimizer = OptimizerName::adam;
  double perturb_magnitude = 0.25;  // transntl only

  void validate() const;  // strategy/family compatibility, ranges
};

/// Uniformly samples floor(fraction*N) indices from the split without
/// replacement; deterministic per seed; result sorted ascending.
std::vector<int64_t> attack_subset(std::span<const int64_t> split, double fraction, uint64_t seed);

/// Basic fine-tuning strategies. initFC_* re-initializes the classifier head
/// from the fresh-init distribution first; *_FC updates only the head (phi
/// frozen); *_all updates everything. The input model is not modified.
ModelBundle finetune_attack(const ModelBundle& model, const Dataset& data, std::span<const int64_t> subset,
                            Strategy strategy, const AttackSpec& cfg);

/// Impairment-repair self-distillation on source data: fine-tunes all
/// parameters minimizing CE(f(x), y) plus KL(f(p(x)) || teacher(x)) over the
/// perturbation set, with a frozen copy of the input model as teacher.
ModelBundle transntl_attack(const ModelBundle& model, const Dataset& source, std::span<const int64_t> subset,
                            const std::vector<auxgen::Augmentation>& pset, const AttackSpec& cfg);

/// Source-free adaptation on unlabeled target data: freezes the classifier
/// head and adapts phi with the information-maximization loss plus
/// cross-entropy to nearest-centroid pseudo-labels recomputed each epoch.
ModelBundle shot_attack(const ModelBundle& model, const UnlabeledView& target_images, const AttackSpec& cfg);

/// Soft-weighted class centroids followed by nearest-centroid assignment
/// (exposed for the pseudo-label oracle in tests).
std::vector<int> nearest_centroid_pseudo_labels(const Tensor& features, const Tensor& probs);

struct AttackOutcome {
  AttackSpec spec;
  Metrics pre;
  Metrics post;
  // Read deltas on the target dataset during the attack, for the provenance log.
  ProvenanceCounters target_reads;
};

/// Evaluates the model once, then runs each attack from a fresh copy and
/// reports pre/post metrics on the test splits. Provenance guards abort on
/// violation; the input model's parameters are left bit-identical.
std::vector<AttackOutcome> run_threat_battery(const ModelBundle& model, const DomainPair& pair,
                                              const SplitTriple& source_split, const SplitTriple& target_split,
                                              const std::vector<AttackSpec>& specs);

const char* to_string(ThreatFamily f);
const char* to_string(Strategy s);
ThreatFamily family_from_string(const std::string& s);
Strategy strategy_from_string(const std::string& s);

}  // namespace ntl::attacks
