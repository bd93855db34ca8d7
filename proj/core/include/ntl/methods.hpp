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

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ntl/auxgen.hpp"
#include "ntl/dataset.hpp"
#include "ntl/objectives.hpp"
#include "ntl/run_config.hpp"

namespace ntl::methods {

enum class MethodName { sl, ntl, cuti_style, dso, sophon, source_only_wrapper };

/// A named training method: objective composition plus method-specific
/// scalars. method params are validated against the method name.
struct MethodSpec {
  MethodName name = MethodName::ntl;
  objectives::ObjectiveSpec objective;
  std::map<std::string, double> params;
  /// Weight of the perturbed-source consistency defense term (0 disables it).
  double defense_consistency_weight = 0.0;

  double param(const std::string& key, double fallback) const;
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;       // running accuracy over the epoch's batches
  double source_val_acc = 0.0;
  double target_val_acc = 0.0;  // NaN when no target domain is known
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  // Read deltas over the training call, for the provenance log.
  ProvenanceCounters source_reads;
  ProvenanceCounters target_reads;
};

struct TrainResult {
  ModelBundle model;
  TrainHistory history;
};

/// Plain supervised reference: mini-batch cross-entropy descent.
TrainResult train_supervised(const ModelBundle& model, const Dataset& source, const SplitTriple& split,
                             const RunConfig& cfg);

/// Target-specified training: per step one source batch and one target batch
/// through the composite objective (plus the consistency defense term when
/// enabled). lambda = 0 reproduces train_supervised exactly.
TrainResult train_ntl(const ModelBundle& model, const DomainPair& pair, const SplitTriple& source_split,
                      const SplitTriple& target_split, const MethodSpec& spec, const RunConfig& cfg);

/// Per-image per-channel statistic remix of a source batch into a synthetic
/// style-shifted target batch; labels carried over unchanged.
Batch make_cuti_style_batch(const Batch& source_batch, double noise_std, Rng& rng, bool clip = true);

/// Source-only training against per-step style-remixed batches.
TrainResult train_cuti_style(const ModelBundle& model, const Dataset& source, const SplitTriple& split,
                             const MethodSpec& spec, const RunConfig& cfg);

/// Inner-maximization perturbation: ascent_steps sign-gradient steps of size
/// radius/ascent_steps on the error-label loss, projected to the inf-ball.
Tensor dso_craft_perturbation(const ModelBundle& model, const Batch& batch, double radius, int ascent_steps);

/// Source-only worst-case-risk training: clean cross-entropy plus the
/// error-label loss on crafted perturbations. Never touches target data.
TrainResult train_dso(const ModelBundle& model, const Dataset& source, const SplitTriple& split,
                      const MethodSpec& spec, const RunConfig& cfg);

/// Fine-tuning-aware training: alternates simulated target fine-tuning with
/// meta-updates that keep the adapted model wrong, and maintenance epochs of
/// source cross-entropy.
TrainResult train_sophon(const ModelBundle& model, const DomainPair& pair, const SplitTriple& source_split,
                         const SplitTriple& target_split, const MethodSpec& spec, const RunConfig& cfg);

/// Source-only wrapper: builds an auxiliary domain from the source and runs
/// target-specified training against it.
TrainResult train_source_only(const ModelBundle& model, const Dataset& source, const SplitTriple& split,
                              const MethodSpec& spec, const RunConfig& cfg);

/// Dispatcher used by the experiment runner. Source-only methods are handed
/// only the source dataset.
TrainResult train_method(const MethodSpec& spec, const ModelBundle& model, const DomainPair& pair,
                         const SplitTriple& source_split, const SplitTriple& target_split, const RunConfig& cfg);

/// mean_p KL(f(p(x)) || stopgrad(f(x))) over the perturbation set.
ad::VarPtr transntl_defense_node(const TapeModel& model, const Tensor& source_images,
                                 const std::vector<auxgen::Augmentation>& pset, Rng& rng);
double transntl_defense_term(const ModelBundle& model, const Tensor& source_images,
                             const std::vector<auxgen::Augmentation>& pset, uint64_t seed);

// ---- simulated fine-tuning with meta-gradients ----

/// Builds a scalar loss from parameter leaves for simulation step `step`.
using LossBuilder = std::function<ad::VarPtr(const std::vector<ad::VarPtr>& params, int step)>;

struct MetaResult {
  double accumulated_loss = 0.0;
  std::vector<Tensor> grads;           // w.r.t. the base parameters
  std::vector<Tensor> adapted_params;  // after the last simulated step
};

/// Simulates `steps` SGD fine-tuning steps on inner_loss and accumulates
/// step_loss after each step. First-order mode sums the step-loss gradients
/// at the adapted parameters; second-order unrolls through the updates with
/// central-difference Hessian-vector products. Base parameters are never
/// modified (clone isolation).
MetaResult simulate_finetune_meta(const std::vector<Tensor>& base_params, const LossBuilder& inner_loss,
                                  const LossBuilder& step_loss, int steps, double inner_lr,
                                  bool second_order = false, double hvp_eps = 1e-4);

const char* to_string(MethodName m);
MethodName method_from_string(const std::string& s);

}  // namespace ntl::methods
