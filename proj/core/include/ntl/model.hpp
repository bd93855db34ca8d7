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

#include "ntl/autodiff.hpp"
#include "ntl/tensor.hpp"

namespace ntl {

/// Declarative architecture: a stack of conv(3x3)->relu->maxpool(2x2) blocks
/// as the feature extractor, one linear layer as the classifier head.
/// String form: "conv:8,16,32|in:1x32|classes:10[|aux]".
struct ArchSpec {
  int input_channels = 1;
  int input_size = 32;  // square images
  std::vector<int> conv_channels = {32, 64, 128};
  int num_classes = 10;
  bool aux_domain_head = false;

  int64_t feature_dim() const;
  std::string to_string() const;
  static ArchSpec parse(const std::string& s);
  void validate() const;

  bool operator==(const ArchSpec&) const = default;
};

/// Feature extractor phi plus classifier head omega (f = omega . phi), with an
/// optional two-way domain-classifier head. Parameters of the three parts are
/// held in disjoint lists so fine-tuning strategies can freeze parts exactly.
class ModelBundle {
 public:
  ModelBundle() = default;
  static ModelBundle init(const ArchSpec& arch, uint64_t seed);

  const ArchSpec& arch() const { return arch_; }

  std::vector<Tensor>& phi_params() { return phi_params_; }
  const std::vector<Tensor>& phi_params() const { return phi_params_; }
  std::vector<Tensor>& omega_params() { return omega_params_; }
  const std::vector<Tensor>& omega_params() const { return omega_params_; }
  std::vector<Tensor>& aux_params() { return aux_params_; }
  const std::vector<Tensor>& aux_params() const { return aux_params_; }
  bool has_aux_head() const { return !aux_params_.empty(); }

  /// Fresh draw for the classifier head from the init distribution (used by
  /// the initFC fine-tuning strategies).
  void reinit_omega(uint64_t seed);

  uint64_t parameter_checksum() const;
  uint64_t phi_checksum() const;
  uint64_t omega_checksum() const;

  // ---- tape-free inference ----
  Tensor features(const Tensor& images) const;   // [N,d]
  Tensor logits(const Tensor& images) const;     // [N,C]
  Tensor probs(const Tensor& images) const;      // [N,C], rows sum to 1
  std::vector<int> predict(const Tensor& images) const;  // argmax, ties -> lowest class

 private:
  friend struct TapeModel;
  ArchSpec arch_;
  std::vector<Tensor> phi_params_;    // per block: [W, b]
  std::vector<Tensor> omega_params_;  // [W(d,C), b(C)]
  std::vector<Tensor> aux_params_;    // [W(d,2), b(2)] when enabled
};

/// Per-step differentiable view of a ModelBundle: parameter tensors wrapped
/// as tape leaves. Gradients land on the leaves; write_back/apply goes
/// through the optimizer.
struct TapeModel {
  const ArchSpec* arch = nullptr;
  std::vector<ad::VarPtr> phi;
  std::vector<ad::VarPtr> omega;
  std::vector<ad::VarPtr> aux;

  static TapeModel bind(const ModelBundle& m, bool phi_grad, bool omega_grad, bool aux_grad);
  static TapeModel bind_all(const ModelBundle& m, bool requires_grad = true) {
    return bind(m, requires_grad, requires_grad, requires_grad);
  }
  /// Rebuilds a tape view from leaves in canonical order (phi pairs, omega
  /// pair, aux pair when present). Used by simulated fine-tuning.
  static TapeModel from_leaves(const ArchSpec& arch, const std::vector<ad::VarPtr>& leaves);

  ad::VarPtr features(const ad::VarPtr& images) const;
  ad::VarPtr logits_from_features(const ad::VarPtr& feats) const;
  ad::VarPtr logits(const ad::VarPtr& images) const { return logits_from_features(features(images)); }
  ad::VarPtr aux_logits(const ad::VarPtr& feats) const;

  /// Leaves in bind order (phi, omega, aux) that carry requires_grad.
  std::vector<ad::VarPtr> trainable_leaves() const;
};

/// Parameter tensors in the same order as TapeModel::trainable_leaves for the
/// matching bind flags.
std::vector<Tensor*> trainable_params(ModelBundle& m, bool phi, bool omega, bool aux);

/// All parameter tensors in canonical order (phi, omega, aux), by value.
std::vector<Tensor> snapshot_params(const ModelBundle& m);
void restore_params(ModelBundle& m, const std::vector<Tensor>& params);

}  // namespace ntl
