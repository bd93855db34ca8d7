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

#include "ntl/metrics.hpp"

#include <algorithm>

#include "ntl/errors.hpp"

namespace ntl {

double overall_score(double sa, double ta) {
  if (sa < 0.0 || sa > 100.0 || ta < 0.0 || ta > 100.0) throw ValidationError("percentage out of range");
  return (sa + (100.0 - ta)) / 2.0;
}

Metrics Metrics::from_sa_ta(double sa, double ta) { return {sa, ta, overall_score(sa, ta)}; }

double evaluate_accuracy(const ModelBundle& model, const Dataset& dataset, std::span<const int64_t> split) {
  if (split.empty()) throw ValidationError("empty evaluation split");
  if (model.arch().num_classes != dataset.num_classes()) throw ValidationError("class-count mismatch");
  constexpr int64_t kEvalBatch = 64;
  int64_t correct = 0;
  for (size_t start = 0; start < split.size(); start += kEvalBatch) {
    size_t stop = std::min(split.size(), start + kEvalBatch);
    std::span<const int64_t> chunk(split.data() + start, stop - start);
    Batch b = dataset.gather(chunk);
    std::vector<int> pred = model.predict(b.images);
    for (size_t i = 0; i < pred.size(); ++i)
      if (pred[i] == b.labels[i]) correct++;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(split.size());
}

Metrics evaluate_pair(const ModelBundle& model, const DomainPair& pair, std::span<const int64_t> source_split,
                      std::span<const int64_t> target_split) {
  double sa = evaluate_accuracy(model, *pair.source, source_split);
  double ta = evaluate_accuracy(model, *pair.target, target_split);
  return Metrics::from_sa_ta(sa, ta);
}

}  // namespace ntl
