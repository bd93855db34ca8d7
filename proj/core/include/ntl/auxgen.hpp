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

#include <string>
#include <vector>

#include "ntl/dataset.hpp"
#include "ntl/rng.hpp"
#include "ntl/tensor.hpp"

namespace ntl::auxgen {

enum class AugOp { gaussian_noise, gaussian_blur, solarize, sharpness, color_invert, rotation, contrast };

/// Strong-augmentation recipe: ops_per_sample ops drawn per image from `ops`,
/// each applied at the shared magnitude in [0,1].
struct AugmentationSpec {
  std::vector<AugOp> ops = {AugOp::gaussian_noise, AugOp::gaussian_blur, AugOp::solarize,  AugOp::sharpness,
                            AugOp::color_invert,   AugOp::rotation,      AugOp::contrast};
  double magnitude = 0.5;
  int ops_per_sample = 2;
  void validate() const;
};

/// One concrete op at a fixed magnitude (member of a perturbation set).
struct Augmentation {
  AugOp op;
  double magnitude;
};

// Per-op scaling of the shared [0,1] magnitude knob:
//   gaussian_noise  additive sigma = 0.3 * m
//   gaussian_blur   blur sigma (pixels) = 2 * m
//   solarize        invert above threshold 1 - m
//   sharpness       unsharp amount = 2 * m
//   color_invert    blend weight m toward 1 - x
//   rotation        angle drawn uniform in +-(m * 90 degrees)
//   contrast        factor drawn uniform in [1/(1+2m), 1+2m]
Tensor apply_op(const Tensor& images, AugOp op, double magnitude, Rng& rng);

/// Applies one perturbation-set member to a batch.
Tensor apply_augmentation(const Tensor& images, const Augmentation& aug, Rng& rng);

/// Label-preserving randomized augmentation, deterministic per seed.
Tensor strong_augment(const Tensor& images, const AugmentationSpec& spec, uint64_t seed);
Batch strong_augment(const Batch& batch, const AugmentationSpec& spec, uint64_t seed);

/// Per-image per-channel statistic remix: normalize by the spatial (mean,
/// std), then denormalize with (mean + eta_mu, std * exp(eta_sigma)),
/// eta ~ Normal(0, noise_std^2). With clip=true the result is re-clipped to
/// the input batch's pixel range.
Tensor style_remix(const Tensor& images, double noise_std, Rng& rng, bool clip = true);

enum class AuxStrategy { strong_augment, cuti_style };

struct AuxDomainParams {
  AugmentationSpec augment;       // used by strong_augment
  double cuti_noise_std = 0.5;    // used by cuti_style
};

/// Builds a synthetic "target" domain from source data: same size, same
/// labels, images transformed by the chosen strategy; provenance "auxiliary".
Dataset build_auxiliary_domain(const Dataset& source, AuxStrategy strategy, const AuxDomainParams& params,
                               uint64_t seed);

enum class PerturbationKind { transntl_default };

/// The fixed ordered list [gaussian_noise, gaussian_blur, contrast, rotation]
/// at the given magnitude; shared by the TransNTL attack and defense.
std::vector<Augmentation> perturbation_set(PerturbationKind kind, double magnitude);

const char* to_string(AugOp op);
AugOp aug_op_from_string(const std::string& s);

}  // namespace ntl::auxgen
