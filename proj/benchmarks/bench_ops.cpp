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

#include <benchmark/benchmark.h>

#include "ntl/auxgen.hpp"
#include "ntl/objectives.hpp"
#include "ntl/rng.hpp"

namespace {

using namespace ntl;

Tensor random_features(int64_t n, int64_t d, uint64_t seed) {
  Rng rng(seed);
  Tensor t({n, d});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_mmd_biased(benchmark::State& state) {
  int64_t n = state.range(0), d = state.range(1);
  Tensor za = random_features(n, d, 1);
  Tensor zb = random_features(n, d, 2);
  std::vector<double> scales{0.25, 0.5, 1.0, 2.0, 4.0};
  for (auto _ : state) benchmark::DoNotOptimize(objectives::mmd_biased(za, zb, scales));
}
BENCHMARK(BM_mmd_biased)->Args({32, 128})->Args({32, 512})->Args({64, 512});

void BM_mmd_backward(benchmark::State& state) {
  int64_t n = state.range(0), d = state.range(1);
  Tensor za = random_features(n, d, 1);
  Tensor zb = random_features(n, d, 2);
  std::vector<double> scales{0.25, 0.5, 1.0, 2.0, 4.0};
  for (auto _ : state) {
    auto la = ad::leaf(za, true);
    auto lb = ad::leaf(zb, true);
    auto root = ad::mmd_biased(la, lb, scales);
    ad::backward(root);
    benchmark::DoNotOptimize(la->grad.data());
  }
}
BENCHMARK(BM_mmd_backward)->Args({32, 128})->Args({32, 512});

void BM_fda_term(benchmark::State& state) {
  int64_t n = state.range(0), d = state.range(1);
  Tensor z = random_features(n, d, 3);
  std::vector<int> labels;
  for (int64_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(i % 10));
  for (auto _ : state) benchmark::DoNotOptimize(objectives::fda_term(z, labels));
}
BENCHMARK(BM_fda_term)->Args({32, 512})->Args({64, 512});

void BM_strong_augment(benchmark::State& state) {
  Rng rng(4);
  Tensor images({state.range(0), 1, 32, 32});
  for (int64_t i = 0; i < images.numel(); ++i) images[i] = rng.uniform(0.0, 1.0);
  auxgen::AugmentationSpec spec;
  spec.magnitude = 0.6;
  uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(auxgen::strong_augment(images, spec, seed++));
}
BENCHMARK(BM_strong_augment)->Arg(32)->Arg(128);

}  // namespace
