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

#include "ntl/data.hpp"
#include "ntl/methods.hpp"
#include "ntl/objectives.hpp"

namespace {

using namespace ntl;

struct TrainFixture {
  DomainPair pair;
  SplitTriple split;
  ModelBundle model;
  Batch source_batch;
  Batch target_batch;

  static TrainFixture make(int64_t batch) {
    data::GlyphOptions opts;
    opts.count = 256;
    auto base = std::make_shared<Dataset>(data::synthesize_glyphs(1, opts));
    TrainFixture f{data::make_domain_pair(base, data::ShiftSpec{data::ShiftKind::rotation, 0.6}, 2),
                   data::split_811(256, 3), ModelBundle(), {}, {}};
    ArchSpec arch;
    arch.input_channels = 1;
    arch.input_size = 32;
    arch.conv_channels = {8, 16, 32};
    arch.num_classes = 10;
    f.model = ModelBundle::init(arch, 5);
    std::vector<int64_t> idx(f.split.train.begin(), f.split.train.begin() + batch);
    f.source_batch = f.pair.source->gather(idx);
    f.target_batch = f.pair.target->gather(idx);
    return f;
  }
};

void BM_forward_batch(benchmark::State& state) {
  auto f = TrainFixture::make(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(f.model.logits(f.source_batch.images));
}
BENCHMARK(BM_forward_batch)->Arg(32)->Arg(64);

void BM_composite_step(benchmark::State& state) {
  auto f = TrainFixture::make(state.range(0));
  objectives::ObjectiveSpec spec;
  spec.output_reg = objectives::OutputReg::max_kl_to_label;
  spec.feature_reg = objectives::FeatureReg::max_mmd;
  spec.lambda = 1.0;
  spec.clamp_bound = 30.0;
  for (auto _ : state) {
    auto tm = TapeModel::bind_all(f.model);
    auto root = objectives::composite_node(tm, f.source_batch, f.target_batch, spec);
    ad::backward(root);
    benchmark::DoNotOptimize(root->value.item());
  }
}
BENCHMARK(BM_composite_step)->Arg(32);

void BM_glyph_synthesis(benchmark::State& state) {
  data::GlyphOptions opts;
  opts.count = state.range(0);
  uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(data::synthesize_glyphs(seed++, opts).size());
}
BENCHMARK(BM_glyph_synthesis)->Arg(256);

}  // namespace
