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

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ntl {

/// Dense row-major double tensor. All numerics in this project run at 64-bit
/// so analytic gradients can be checked against central finite differences.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);
  Tensor(std::vector<int64_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int64_t> shape, double value);
  static Tensor scalar(double value);

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(size_t i) const { return shape_[i]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> flat() { return {data_.data(), data_.size()}; }
  std::span<const double> flat() const { return {data_.data(), data_.size()}; }

  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 2D / 4D convenience indexers (no bounds checks in release builds).
  double& at2(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * shape_[1] + c)]; }
  double at2(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * shape_[1] + c)]; }
  double& at4(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  double at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  /// Value of a single-element tensor.
  double item() const;

  Tensor reshaped(std::vector<int64_t> new_shape) const;

  void fill(double value);
  void zero_() { fill(0.0); }
  /// this += scale * other (shapes must match).
  void add_(const Tensor& other, double scale = 1.0);
  void scale_(double s);

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  std::string shape_str() const;

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

/// FNV-1a over the raw bytes; used for parameter and dataset checksums.
uint64_t fnv1a(const void* bytes, size_t len, uint64_t seed = 0xcbf29ce484222325ull);
uint64_t checksum(const Tensor& t, uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace ntl
