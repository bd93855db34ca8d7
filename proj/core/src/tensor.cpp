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

#include "ntl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "ntl/errors.hpp"

namespace ntl {

namespace {
int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw ValidationError("negative tensor dimension");
    n *= d;
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
    throw ValidationError("tensor shape/value size mismatch");
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

double Tensor::item() const {
  if (numel() != 1) throw ValidationError("item() on tensor with " + std::to_string(numel()) + " elements");
  return data_[0];
}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
  if (shape_numel(new_shape) != numel()) throw ValidationError("reshape changes element count");
  Tensor t;
  t.shape_ = std::move(new_shape);
  t.data_ = data_;
  return t;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::add_(const Tensor& other, double scale) {
  if (!same_shape(other)) throw ValidationError("add_ shape mismatch: " + shape_str() + " vs " + other.shape_str());
  const double* src = other.data();
  double* dst = data();
  for (size_t i = 0; i < data_.size(); ++i) dst[i] += scale * src[i];
}

void Tensor::scale_(double s) {
  for (double& v : data_) v *= s;
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << "]";
  return os.str();
}

uint64_t fnv1a(const void* bytes, size_t len, uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  uint64_t h = seed;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

uint64_t checksum(const Tensor& t, uint64_t seed) {
  return fnv1a(t.data(), sizeof(double) * static_cast<size_t>(t.numel()), seed);
}

}  // namespace ntl
