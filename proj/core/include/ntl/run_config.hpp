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
#include <string>

namespace ntl {

enum class OptimizerName { sgd, adam };

/// Per-run training configuration shared by every pipeline.
struct RunConfig {
  uint64_t seed = 1;
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 1e-3;
  OptimizerName optimizer_name = OptimizerName::adam;
  double lambda = 1.0;       // trade-off weight between source task and target regularizers
  double clamp_bound = 1.0;  // tau, cap on each maximized target term
  std::string device_hint = "cpu";

  void validate() const;
};

OptimizerName optimizer_from_string(const std::string& s);
std::string to_string(OptimizerName o);

}  // namespace ntl
