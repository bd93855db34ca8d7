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

#include <span>

#include "ntl/dataset.hpp"
#include "ntl/model.hpp"

namespace ntl {

/// Source accuracy, target accuracy, and the overall score
/// OA = (SA + (100 - TA)) / 2, all percentages in [0,100].
struct Metrics {
  double sa = 0.0;
  double ta = 0.0;
  double oa = 0.0;

  static Metrics from_sa_ta(double sa, double ta);
};

/// OA = (sa + (100 - ta)) / 2; inputs must lie in [0,100].
double overall_score(double sa, double ta);

/// 100 * (correct argmax predictions / |split|). Argmax ties break toward the
/// lowest class index. Deterministic given model and data.
double evaluate_accuracy(const ModelBundle& model, const Dataset& dataset, std::span<const int64_t> split);

/// SA/TA/OA of a model over a domain pair at the given split indices.
Metrics evaluate_pair(const ModelBundle& model, const DomainPair& pair, std::span<const int64_t> source_split,
                      std::span<const int64_t> target_split);

}  // namespace ntl
