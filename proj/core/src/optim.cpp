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

#include "ntl/optim.hpp"

#include <cmath>

#include "ntl/errors.hpp"

namespace ntl {

void RunConfig::validate() const {
  if (epochs < 0) throw ValidationError("run.epochs must be nonnegative");
  if (batch_size < 1) throw ValidationError("run.batch_size must be positive");
  if (learning_rate <= 0.0) throw ValidationError("run.learning_rate must be positive");
  if (lambda < 0.0) throw ValidationError("run.lambda must be nonnegative");
  if (clamp_bound <= 0.0) throw ValidationError("run.clamp_bound must be positive");
}

OptimizerName optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerName::sgd;
  if (s == "adam") return OptimizerName::adam;
  throw ValidationError("unknown optimizer '" + s + "' (expected sgd|adam)");
}

std::string to_string(OptimizerName o) { return o == OptimizerName::sgd ? "sgd" : "adam"; }

void Sgd::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size()) throw ValidationError("optimizer param/grad count mismatch");
  for (size_t i = 0; i < params.size(); ++i) params[i]->add_(*grads[i], -lr_);
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size()) throw ValidationError("optimizer param/grad count mismatch");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  if (m_.size() != params.size()) throw ValidationError("optimizer bound to a different parameter list");
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (int64_t j = 0; j < p.numel(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      double mhat = m[j] / bc1;
      double vhat = v[j] / bc2;
      p[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerName name, double lr) {
  if (name == OptimizerName::sgd) return std::make_unique<Sgd>(lr);
  return std::make_unique<Adam>(lr);
}

}  // namespace ntl
