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

#include <memory>
#include <vector>

#include "ntl/run_config.hpp"
#include "ntl/tensor.hpp"

namespace ntl {

/// Stateful first-order optimizer over a fixed parameter list.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) override;

 private:
  double lr_;
};

class Adam final : public Optimizer {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) override;

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

std::unique_ptr<Optimizer> make_optimizer(OptimizerName name, double lr);

}  // namespace ntl
