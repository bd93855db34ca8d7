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

#include "ntl/objectives.hpp"

#include <cmath>

#include "ntl/errors.hpp"

namespace ntl::objectives {

namespace {
constexpr double kKlFloor = 1e-12;

// Tolerance is looser than the model-output invariant so that finite
// difference probes at step 1e-5 stay admissible.
void check_prob_vector(std::span<const double> p) {
  double sum = 0.0;
  for (double v : p) {
    if (v < -1e-9) throw ValidationError("probability vector has negative entries");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-4) throw ValidationError("probability vector does not sum to 1");
}
}  // namespace

void ObjectiveSpec::validate() const {
  if (lambda < 0.0) throw ValidationError("objective.lambda must be nonnegative");
  if (clamp_bound <= 0.0) throw ValidationError("objective.clamp_bound must be positive");
  if (mmd_bandwidth_scales.empty()) throw ValidationError("objective.mmd_bandwidth_scales must be nonempty");
  for (double s : mmd_bandwidth_scales)
    if (s <= 0.0) throw ValidationError("objective.mmd_bandwidth_scales must be positive");
  if (output_reg == OutputReg::min_kl_to_style_label && !style_provider)
    throw ValidationError("objective.style_provider required for min_kl_to_style_label");
  if (output_reg_weight < 0.0 || feature_reg_weight < 0.0)
    throw ValidationError("objective regularizer weights must be nonnegative");
}

double cross_entropy(std::span<const double> probs, int label) {
  if (label < 0 || label >= static_cast<int>(probs.size())) throw ValidationError("cross_entropy: label out of range");
  check_prob_vector(probs);
  return -std::log(std::max(probs[static_cast<size_t>(label)], kKlFloor));
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ValidationError("kl_divergence: length mismatch");
  double s = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;  // 0 * log 0 := 0
    s += p[i] * std::log(p[i] / std::max(q[i], kKlFloor));
  }
  return s;
}

double uniform_kl(std::span<const double> probs) {
  std::vector<double> u(probs.size(), 1.0 / static_cast<double>(probs.size()));
  return kl_divergence(probs, u);
}

double clamped_target_term(double raw_loss, double bound) {
  if (bound <= 0.0) throw ValidationError("clamped_target_term: bound must be positive");
  return std::min(raw_loss, bound);
}

int error_label(int y, int num_classes) {
  if (num_classes < 2) throw ValidationError("error-label undefined for single class");
  if (y < 0 || y >= num_classes) throw ValidationError("error_label: label out of range");
  return (y + 1) % num_classes;
}

std::vector<double> inverse_label_distribution(int y, int num_classes) {
  if (num_classes < 2) throw ValidationError("inverse label distribution undefined for single class");
  if (y < 0 || y >= num_classes) throw ValidationError("inverse_label_distribution: label out of range");
  std::vector<double> d(static_cast<size_t>(num_classes), 1.0 / static_cast<double>(num_classes - 1));
  d[static_cast<size_t>(y)] = 0.0;
  return d;
}

double mmd_biased(const Tensor& za, const Tensor& zb, std::span<const double> bandwidth_scales) {
  std::vector<double> scales(bandwidth_scales.begin(), bandwidth_scales.end());
  return ad::mmd_biased(ad::constant(za), ad::constant(zb), scales)->value.item();
}

double fda_term(const Tensor& z, const std::vector<int>& labels) {
  return ad::fda_term(ad::constant(z), labels)->value.item();
}

double domain_confusion_loss(const ModelBundle& model, const Tensor& features, const std::vector<int>& domain_labels) {
  if (!model.has_aux_head()) throw ValidationError("no domain head configured");
  auto tm = TapeModel::bind(model, false, false, false);
  auto lp = ad::row_log_softmax(tm.aux_logits(ad::constant(features)));
  return ad::nll_mean(lp, domain_labels)->value.item();
}

Tensor one_hot_rows(const std::vector<int>& labels, int num_classes) {
  Tensor t({static_cast<int64_t>(labels.size()), num_classes});
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) throw ValidationError("one_hot_rows: label out of range");
    t.at2(static_cast<int64_t>(i), labels[i]) = 1.0;
  }
  return t;
}

Tensor uniform_rows(int64_t n, int num_classes) {
  return Tensor::full({n, num_classes}, 1.0 / static_cast<double>(num_classes));
}

Tensor error_label_rows(const std::vector<int>& labels, int num_classes) {
  std::vector<int> err(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) err[i] = error_label(labels[i], num_classes);
  return one_hot_rows(err, num_classes);
}

Tensor inverse_label_rows(const std::vector<int>& labels, int num_classes) {
  Tensor t({static_cast<int64_t>(labels.size()), num_classes});
  for (size_t i = 0; i < labels.size(); ++i) {
    auto d = inverse_label_distribution(labels[i], num_classes);
    for (int j = 0; j < num_classes; ++j) t.at2(static_cast<int64_t>(i), j) = d[static_cast<size_t>(j)];
  }
  return t;
}

namespace {

// signed orientation: maximized -> +raw, minimized -> -raw
ad::VarPtr signed_term(const ad::VarPtr& raw, bool maximized) { return maximized ? raw : ad::neg(raw); }

ad::VarPtr output_reg_term(const TapeModel& model, const ad::VarPtr& target_feats, const Batch& target,
                           const ObjectiveSpec& spec, int num_classes) {
  auto lp = ad::row_log_softmax(model.logits_from_features(target_feats));
  switch (spec.output_reg) {
    case OutputReg::max_kl_to_label:
      return signed_term(ad::kl_rows_mean(lp, one_hot_rows(target.labels, num_classes)), true);
    case OutputReg::min_kl_to_error_label:
      return signed_term(ad::kl_rows_mean(lp, error_label_rows(target.labels, num_classes)), false);
    case OutputReg::min_inverse_ce:
      return signed_term(ad::ce_rows_mean(lp, inverse_label_rows(target.labels, num_classes)), false);
    case OutputReg::min_uniform_kl:
      return signed_term(ad::kl_rows_mean(lp, uniform_rows(target.size(), num_classes)), false);
    case OutputReg::min_kl_to_style_label: {
      Tensor style = spec.style_provider(target);
      if (style.ndim() != 2 || style.dim(0) != target.size() || style.dim(1) != num_classes)
        throw ValidationError("style provider returned wrong shape");
      return signed_term(ad::kl_rows_mean(lp, style), false);
    }
    case OutputReg::none:
      break;
  }
  throw ValidationError("no output regularizer configured");
}

ad::VarPtr feature_reg_term(const TapeModel& model, const ad::VarPtr& source_feats, const ad::VarPtr& target_feats,
                            const Batch& target, const ObjectiveSpec& spec) {
  switch (spec.feature_reg) {
    case FeatureReg::max_mmd:
      return signed_term(ad::mmd_biased(source_feats, target_feats, spec.mmd_bandwidth_scales), true);
    case FeatureReg::min_fda:
      return signed_term(ad::fda_term(target_feats, target.labels), false);
    case FeatureReg::domain_confusion: {
      // Joint minimization: phi and the domain head cooperate to separate
      // the domains in feature space.
      auto feats = ad::concat_rows(source_feats, target_feats);
      std::vector<int> domain_labels(static_cast<size_t>(feats->value.dim(0)), 0);
      for (int64_t i = source_feats->value.dim(0); i < feats->value.dim(0); ++i)
        domain_labels[static_cast<size_t>(i)] = 1;
      auto lp = ad::row_log_softmax(model.aux_logits(feats));
      return signed_term(ad::nll_mean(lp, domain_labels), false);
    }
    case FeatureReg::none:
      break;
  }
  throw ValidationError("no feature regularizer configured");
}

}  // namespace

ad::VarPtr composite_node(const TapeModel& model, const Batch& source, const Batch& target, const ObjectiveSpec& spec) {
  spec.validate();
  if (source.size() < 1) throw ValidationError("composite: empty source batch");
  int num_classes = model.arch->num_classes;

  auto src_feats = model.features(ad::constant(source.images));
  auto src_lp = ad::row_log_softmax(model.logits_from_features(src_feats));
  auto l_src = ad::nll_mean(src_lp, source.labels);
  if (spec.lambda == 0.0) return l_src;  // degenerates to supervised learning

  if (!spec.has_regularizer()) throw ValidationError("no target regularizer configured");
  if (target.size() < 1) throw ValidationError("composite: empty target batch");

  auto tgt_feats = model.features(ad::constant(target.images));
  ad::VarPtr reg_sum;
  auto add_term = [&](const ad::VarPtr& signed_raw, double weight) {
    auto clamped = ad::clamp_max(signed_raw, spec.clamp_bound);
    auto weighted = weight == 1.0 ? clamped : ad::scale(clamped, weight);
    reg_sum = reg_sum ? ad::add(reg_sum, weighted) : weighted;
  };
  if (spec.output_reg != OutputReg::none)
    add_term(output_reg_term(model, tgt_feats, target, spec, num_classes), spec.output_reg_weight);
  if (spec.feature_reg != FeatureReg::none)
    add_term(feature_reg_term(model, src_feats, tgt_feats, target, spec), spec.feature_reg_weight);

  return ad::sub(l_src, ad::scale(reg_sum, spec.lambda));
}

double eq1_composite(const Batch& source, const Batch& target, const ModelBundle& model, const ObjectiveSpec& spec) {
  bool needs_aux = spec.feature_reg == FeatureReg::domain_confusion;
  if (needs_aux && !model.has_aux_head()) throw ValidationError("no domain head configured");
  auto tm = TapeModel::bind(model, false, false, false);
  return composite_node(tm, source, target, spec)->value.item();
}

const char* to_string(OutputReg r) {
  switch (r) {
    case OutputReg::none: return "none";
    case OutputReg::max_kl_to_label: return "max_kl_to_label";
    case OutputReg::min_kl_to_error_label: return "min_kl_to_error_label";
    case OutputReg::min_inverse_ce: return "min_inverse_ce";
    case OutputReg::min_uniform_kl: return "min_uniform_kl";
    case OutputReg::min_kl_to_style_label: return "min_kl_to_style_label";
  }
  return "?";
}

const char* to_string(FeatureReg r) {
  switch (r) {
    case FeatureReg::none: return "none";
    case FeatureReg::max_mmd: return "max_mmd";
    case FeatureReg::domain_confusion: return "domain_confusion";
    case FeatureReg::min_fda: return "min_fda";
  }
  return "?";
}

OutputReg output_reg_from_string(const std::string& s) {
  if (s == "none") return OutputReg::none;
  if (s == "max_kl_to_label") return OutputReg::max_kl_to_label;
  if (s == "min_kl_to_error_label") return OutputReg::min_kl_to_error_label;
  if (s == "min_inverse_ce") return OutputReg::min_inverse_ce;
  if (s == "min_uniform_kl") return OutputReg::min_uniform_kl;
  if (s == "min_kl_to_style_label") return OutputReg::min_kl_to_style_label;
  throw ValidationError("unknown output regularizer '" + s + "'");
}

FeatureReg feature_reg_from_string(const std::string& s) {
  if (s == "none") return FeatureReg::none;
  if (s == "max_mmd") return FeatureReg::max_mmd;
  if (s == "domain_confusion") return FeatureReg::domain_confusion;
  if (s == "min_fda") return FeatureReg::min_fda;
  throw ValidationError("unknown feature regularizer '" + s + "'");
}

}  // namespace ntl::objectives
