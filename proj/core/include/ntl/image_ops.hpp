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

#include "ntl/tensor.hpp"

namespace ntl::img {

// Deterministic pixel primitives over [N,C,H,W] batches with values in [0,1].
// Randomized augmentation wrappers live in ntl::auxgen.

/// Rotation about the image center, bilinear sampling, clamp-to-edge fill.
Tensor rotate_bilinear(const Tensor& images, double radians);

/// Separable Gaussian blur; sigma in pixels, identity when sigma <= 0.
Tensor gaussian_blur(const Tensor& images, double sigma);

/// out = mean + factor * (x - mean) per image, clipped to [0,1].
Tensor adjust_contrast(const Tensor& images, double factor);

/// out = (1-m)*x + m*(1-x); involution at m = 1.
Tensor invert_blend(const Tensor& images, double m);

/// Pixels above the threshold are inverted.
Tensor solarize(const Tensor& images, double threshold);

/// Unsharp mask: x + amount * (x - blur(x, sigma)), clipped.
Tensor sharpen(const Tensor& images, double amount, double sigma = 1.0);

/// Rolls channels by one and blends with the original at weight m.
/// Identity for single-channel images.
Tensor channel_roll_blend(const Tensor& images, double m);

void clip01_(Tensor& images);

}  // namespace ntl::img
