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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ntl/autodiff.hpp"
#include "ntl/dataset.hpp"
#include "ntl/model.hpp"

namespace ntl::objectives {

// The regularizer catalog. Output-space terms manipulate the classifier
// distribution on target batches; feature-space terms act on phi outputs.
// "max_*" terms are maximized (entering the composite clamped at tau),
// "min_*" terms are targeted proxies that are minimized.

enum class OutputReg {
  none,
  max_kl_to_label,       // push predictions away from the true label
  min_kl_to_error_label, // fit the deterministic wrong label (y+1 mod C)
  min_inverse_ce,        // fit the label-complement distribution
  min_uniform_kl,        // fit the uniform distribution
  min_kl_to_style_label, // fit externally supplied style-label distributions
};

enum class FeatureReg {
  none,
  max_mmd,           // separate source/target feature distributions
  domain_confusion,  // train a two-way domain head jointly with phi
  min_fda,           // collapse target class-mean separation
};

/// Supplies per-sample style-label distributions [N,C] for a target batch.
/// The network that produces such labels is external; only the objective
/// shape is housed here.
using StyleLabelProvider = std::function<Tensor(const Batch&)>;

/// Declarative composition of source loss, target regularizers, trade-off
/// weight lambda, and the clamp bound tau.
struct ObjectiveSpec {
  OutputReg output_reg = OutputReg::none;
  FeatureReg feature_reg = FeatureReg::none;
  double lambda = 1.0;
  double clamp_bound = 1.0;
  std::vector<double> mmd_bandwidth_scales = {0.25, 0.5, 1.0, 2.0, 4.0};
  // Per-regularizer multipliers on top of the shared lambda (default 1).
  double output_reg_weight = 1.0;
  double feature_reg_weight = 1.0;
  StyleLabelProvider style_provider;

  bool has_regularizer() const { return output_reg != OutputReg::none || feature_reg != FeatureReg::none; }
  void validate() const;
};

// ---- scalar catalog operations ----

/// -log probs[label]; probs must be a probability vector.
double cross_entropy(std::span<const double> probs, int label);

/// sum_i p_i log(p_i / max(q_i, 1e-12)); zero terms where p_i == 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// KL(probs || uniform) = log C - H(probs).
double uniform_kl(std::span<const double> probs);

/// min(raw_loss, bound); the composite's gradient is zero past the bound.
double clamped_target_term(double raw_loss, double bound);

/// Deterministic wrong-label map (y+1) mod C; never equals y.
int error_label(int y, int num_classes);

/// One-hot of (1-y) for C=2; for C>2 the uniform distribution over all
/// classes except y (zero mass at the true label).
std::vector<double> inverse_label_distribution(int y, int num_classes);

/// Biased squared MMD between feature batches (multi-Gaussian kernel, median
/// heuristic bandwidth). See ad::mmd_biased for the estimator definition.
double mmd_biased(const Tensor& za, const Tensor& zb, std::span<const double> bandwidth_scales);

/// tr(S_b) / (tr(S_w) + 1e-8) over features with labels.
double fda_term(const Tensor& z, const std::vector<int>& labels);

/// Mean cross-entropy of the model's domain head over a feature batch with
/// 0/1 domain labels. Requires an aux head on the bundle.
double domain_confusion_loss(const ModelBundle& model, const Tensor& features, const std::vector<int>& domain_labels);

// ---- tape builders (training path) ----

/// One-hot rows for a label list.
Tensor one_hot_rows(const std::vector<int>& labels, int num_classes);
Tensor uniform_rows(int64_t n, int num_classes);
Tensor error_label_rows(const std::vector<int>& labels, int num_classes);
Tensor inverse_label_rows(const std::vector<int>& labels, int num_classes);

/// The composite objective: L_src - lambda * sum_r w_r * min(signed_r, tau).
/// Maximized regularizers enter positively, minimized ones negated, so a
/// single subtraction realizes both orientations. lambda = 0 returns the
/// plain source cross-entropy node itself (bit-identical gradients).
ad::VarPtr composite_node(const TapeModel& model, const Batch& source, const Batch& target, const ObjectiveSpec& spec);

/// Scalar evaluation of the composite on a bundle (used by tests and tools).
double eq1_composite(const Batch& source, const Batch& target, const ModelBundle& model, const ObjectiveSpec& spec);

const char* to_string(OutputReg r);
const char* to_string(FeatureReg r);
OutputReg output_reg_from_string(const std::string& s);
FeatureReg feature_reg_from_string(const std::string& s);

}  // namespace ntl::objectives
