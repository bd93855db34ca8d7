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

#include "ntl/image_ops.hpp"

#include <algorithm>
#include <cmath>

#include "ntl/errors.hpp"

namespace ntl::img {

namespace {
void check_nchw(const Tensor& t) {
  if (t.ndim() != 4) throw ValidationError("image op expects [N,C,H,W]");
}
}  // namespace

void clip01_(Tensor& images) {
  for (int64_t i = 0; i < images.numel(); ++i) images[i] = std::clamp(images[i], 0.0, 1.0);
}

Tensor rotate_bilinear(const Tensor& images, double radians) {
  check_nchw(images);
  if (radians == 0.0) return images;
  const int64_t N = images.dim(0), C = images.dim(1), H = images.dim(2), W = images.dim(3);
  Tensor out({N, C, H, W});
  const double cy = (static_cast<double>(H) - 1.0) / 2.0;
  const double cx = (static_cast<double>(W) - 1.0) / 2.0;
  const double ca = std::cos(radians), sa = std::sin(radians);
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const double* src = images.data() + (n * C + c) * H * W;
      double* dst = out.data() + (n * C + c) * H * W;
      for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
          // inverse-map the output pixel into the source frame
          double dy = static_cast<double>(y) - cy;
          double dx = static_cast<double>(x) - cx;
          double sy = cy + (sa * dx + ca * dy);
          double sx = cx + (ca * dx - sa * dy);
          sy = std::clamp(sy, 0.0, static_cast<double>(H - 1));
          sx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
          int64_t y0 = static_cast<int64_t>(std::floor(sy)), x0 = static_cast<int64_t>(std::floor(sx));
          int64_t y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
          double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
          double v00 = src[y0 * W + x0], v01 = src[y0 * W + x1];
          double v10 = src[y1 * W + x0], v11 = src[y1 * W + x1];
          dst[y * W + x] = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
        }
      }
    }
  }
  return out;
}

Tensor gaussian_blur(const Tensor& images, double sigma) {
  check_nchw(images);
  if (sigma <= 0.0) return images;
  const int64_t N = images.dim(0), C = images.dim(1), H = images.dim(2), W = images.dim(3);
  const int64_t r = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(2.0 * sigma)));
  std::vector<double> k(static_cast<size_t>(2 * r + 1));
  double sum = 0.0;
  for (int64_t i = -r; i <= r; ++i) {
    double w = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    k[static_cast<size_t>(i + r)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;

  Tensor tmp({N, C, H, W}), out({N, C, H, W});
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const double* src = images.data() + (n * C + c) * H * W;
      double* mid = tmp.data() + (n * C + c) * H * W;
      double* dst = out.data() + (n * C + c) * H * W;
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          double acc = 0.0;
          for (int64_t i = -r; i <= r; ++i) acc += k[static_cast<size_t>(i + r)] * src[y * W + std::clamp(x + i, int64_t{0}, W - 1)];
          mid[y * W + x] = acc;
        }
      for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
          double acc = 0.0;
          for (int64_t i = -r; i <= r; ++i) acc += k[static_cast<size_t>(i + r)] * mid[std::clamp(y + i, int64_t{0}, H - 1) * W + x];
          dst[y * W + x] = acc;
        }
    }
  }
  return out;
}

Tensor adjust_contrast(const Tensor& images, double factor) {
  check_nchw(images);
  const int64_t N = images.dim(0), chw = images.numel() / images.dim(0);
  Tensor out = images;
  for (int64_t n = 0; n < N; ++n) {
    double* px = out.data() + n * chw;
    double mean = 0.0;
    for (int64_t i = 0; i < chw; ++i) mean += px[i];
    mean /= static_cast<double>(chw);
    for (int64_t i = 0; i < chw; ++i) px[i] = std::clamp(mean + factor * (px[i] - mean), 0.0, 1.0);
  }
  return out;
}

Tensor invert_blend(const Tensor& images, double m) {
  check_nchw(images);
  Tensor out = images;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = (1.0 - m) * out[i] + m * (1.0 - out[i]);
  return out;
}

Tensor solarize(const Tensor& images, double threshold) {
  check_nchw(images);
  Tensor out = images;
  for (int64_t i = 0; i < out.numel(); ++i)
    if (out[i] > threshold) out[i] = 1.0 - out[i];
  return out;
}

Tensor sharpen(const Tensor& images, double amount, double sigma) {
  check_nchw(images);
  if (amount == 0.0) return images;
  Tensor blurred = gaussian_blur(images, sigma);
  Tensor out = images;
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] + amount * (out[i] - blurred[i]);
  clip01_(out);
  return out;
}

Tensor channel_roll_blend(const Tensor& images, double m) {
  check_nchw(images);
  const int64_t N = images.dim(0), C = images.dim(1), hw = images.dim(2) * images.dim(3);
  if (C == 1 || m == 0.0) return images;
  Tensor out = images;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      const double* rolled = images.data() + (n * C + (c + 1) % C) * hw;
      double* dst = out.data() + (n * C + c) * hw;
      for (int64_t i = 0; i < hw; ++i) dst[i] = (1.0 - m) * dst[i] + m * rolled[i];
    }
  return out;
}

}  // namespace ntl::img
