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

#include "ntl/auxgen.hpp"

#include <algorithm>
#include <cmath>

#include "ntl/errors.hpp"
#include "ntl/image_ops.hpp"

namespace ntl::auxgen {

void AugmentationSpec::validate() const {
  if (ops.empty()) throw ValidationError("augmentation spec needs at least one op");
  if (magnitude < 0.0 || magnitude > 1.0) throw ValidationError("augmentation magnitude must lie in [0,1]");
  if (ops_per_sample < 1) throw ValidationError("ops_per_sample must be positive");
}

Tensor apply_op(const Tensor& images, AugOp op, double magnitude, Rng& rng) {
  switch (op) {
    case AugOp::gaussian_noise: {
      Tensor out = images;
      double sigma = 0.3 * magnitude;
      if (sigma > 0.0)
        for (int64_t i = 0; i < out.numel(); ++i) out[i] += rng.normal(0.0, sigma);
      img::clip01_(out);
      return out;
    }
    case AugOp::gaussian_blur:
      return img::gaussian_blur(images, 2.0 * magnitude);
    case AugOp::solarize:
      return img::solarize(images, 1.0 - magnitude);
    case AugOp::sharpness:
      return img::sharpen(images, 2.0 * magnitude);
    case AugOp::color_invert:
      return img::invert_blend(images, magnitude);
    case AugOp::rotation: {
      double span = magnitude * (3.14159265358979323846 / 2.0);
      // per-image angle so a batch does not rotate in lockstep
      const int64_t N = images.dim(0), chw = images.numel() / images.dim(0);
      Tensor out({images.dim(0), images.dim(1), images.dim(2), images.dim(3)});
      for (int64_t n = 0; n < N; ++n) {
        double angle = rng.uniform(-span, span);
        Tensor one({1, images.dim(1), images.dim(2), images.dim(3)});
        std::copy(images.data() + n * chw, images.data() + (n + 1) * chw, one.data());
        Tensor rot = img::rotate_bilinear(one, angle);
        std::copy(rot.data(), rot.data() + chw, out.data() + n * chw);
      }
      return out;
    }
    case AugOp::contrast: {
      const int64_t N = images.dim(0), chw = images.numel() / images.dim(0);
      Tensor out({images.dim(0), images.dim(1), images.dim(2), images.dim(3)});
      double hi = 1.0 + 2.0 * magnitude;
      for (int64_t n = 0; n < N; ++n) {
        double f = rng.uniform(1.0 / hi, hi);
        Tensor one({1, images.dim(1), images.dim(2), images.dim(3)});
        std::copy(images.data() + n * chw, images.data() + (n + 1) * chw, one.data());
        Tensor adj = img::adjust_contrast(one, f);
        std::copy(adj.data(), adj.data() + chw, out.data() + n * chw);
      }
      return out;
    }
  }
  throw ValidationError("unknown augmentation op");
}

Tensor apply_augmentation(const Tensor& images, const Augmentation& aug, Rng& rng) {
  return apply_op(images, aug.op, aug.magnitude, rng);
}

Tensor strong_augment(const Tensor& images, const AugmentationSpec& spec, uint64_t seed) {
  spec.validate();
  if (images.ndim() != 4) throw ValidationError("strong_augment expects [N,C,H,W]");
  Rng rng(derive_seed(seed, "strong_augment"));
  const int64_t N = images.dim(0), chw = images.numel() / images.dim(0);
  Tensor out = images;
  for (int64_t n = 0; n < N; ++n) {
    Tensor one({1, images.dim(1), images.dim(2), images.dim(3)});
    std::copy(out.data() + n * chw, out.data() + (n + 1) * chw, one.data());
    for (int k = 0; k < spec.ops_per_sample; ++k) {
      AugOp op = spec.ops[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(spec.ops.size()) - 1))];
      one = apply_op(one, op, spec.magnitude, rng);
    }
    std::copy(one.data(), one.data() + chw, out.data() + n * chw);
  }
  return out;
}

Batch strong_augment(const Batch& batch, const AugmentationSpec& spec, uint64_t seed) {
  Batch out;
  out.images = strong_augment(batch.images, spec, seed);
  out.labels = batch.labels;
  return out;
}

Tensor style_remix(const Tensor& images, double noise_std, Rng& rng, bool clip) {
  if (images.ndim() != 4) throw ValidationError("style_remix expects [N,C,H,W]");
  if (noise_std < 0.0) throw ValidationError("style_remix noise_std must be nonnegative");
  constexpr double kStdFloor = 1e-6;
  const int64_t N = images.dim(0), C = images.dim(1), hw = images.dim(2) * images.dim(3);

  double in_lo = images[0], in_hi = images[0];
  for (int64_t i = 0; i < images.numel(); ++i) {
    in_lo = std::min(in_lo, images[i]);
    in_hi = std::max(in_hi, images[i]);
  }

  Tensor out = images;
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      double* px = out.data() + (n * C + c) * hw;
      double mean = 0.0;
      for (int64_t i = 0; i < hw; ++i) mean += px[i];
      mean /= static_cast<double>(hw);
      double var = 0.0;
      for (int64_t i = 0; i < hw; ++i) var += (px[i] - mean) * (px[i] - mean);
      double sd = std::sqrt(var / static_cast<double>(hw));
      sd = std::max(sd, kStdFloor);
      double new_mean = mean + rng.normal(0.0, noise_std);
      double new_sd = sd * std::exp(rng.normal(0.0, noise_std));
      for (int64_t i = 0; i < hw; ++i) px[i] = (px[i] - mean) / sd * new_sd + new_mean;
    }
  }
  if (clip)
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(out[i], in_lo, in_hi);
  return out;
}

Dataset build_auxiliary_domain(const Dataset& source, AuxStrategy strategy, const AuxDomainParams& params,
                               uint64_t seed) {
  Tensor images;
  switch (strategy) {
    case AuxStrategy::strong_augment:
      images = strong_augment(source.raw_images(), params.augment, seed);
      break;
    case AuxStrategy::cuti_style: {
      Rng rng(derive_seed(seed, "aux_cuti"));
      images = style_remix(source.raw_images(), params.cuti_noise_std, rng);
      break;
    }
  }
  return Dataset(std::move(images), source.raw_labels(), source.num_classes(), source.name() + "+aux", "auxiliary");
}

std::vector<Augmentation> perturbation_set(PerturbationKind kind, double magnitude) {
  if (magnitude <= 0.0 || magnitude > 1.0) throw ValidationError("perturbation magnitude must lie in (0,1]");
  switch (kind) {
    case PerturbationKind::transntl_default:
      return {{AugOp::gaussian_noise, magnitude},
              {AugOp::gaussian_blur, magnitude},
              {AugOp::contrast, magnitude},
              {AugOp::rotation, magnitude}};
  }
  throw ValidationError("unknown perturbation kind");
}

const char* to_string(AugOp op) {
  switch (op) {
    case AugOp::gaussian_noise: return "gaussian_noise";
    case AugOp::gaussian_blur: return "gaussian_blur";
    case AugOp::solarize: return "solarize";
    case AugOp::sharpness: return "sharpness";
    case AugOp::color_invert: return "color_invert";
    case AugOp::rotation: return "rotation";
    case AugOp::contrast: return "contrast";
  }
  return "?";
}

AugOp aug_op_from_string(const std::string& s) {
  if (s == "gaussian_noise") return AugOp::gaussian_noise;
  if (s == "gaussian_blur") return AugOp::gaussian_blur;
  if (s == "solarize") return AugOp::solarize;
  if (s == "sharpness") return AugOp::sharpness;
  if (s == "color_invert") return AugOp::color_invert;
  if (s == "rotation") return AugOp::rotation;
  if (s == "contrast") return AugOp::contrast;
  throw ValidationError("unknown augmentation op '" + s + "'");
}

}  // namespace ntl::auxgen
