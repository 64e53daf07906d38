// Copyright 2026 The RED Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <benchmark/benchmark.h>

#include "red/hashing.hpp"
#include "red/inference.hpp"
#include "red/merging.hpp"
#include "red/metrics.hpp"
#include "red/model_io.hpp"
#include "red/pipeline.hpp"
#include "red/separation.hpp"
#include "red/synth.hpp"

namespace {

void BM_HashDistribution(benchmark::State& state) {
  red::MultimodalSpec spec;
  spec.seed = 7;
  spec.modes = red::spaced_modes(8, 0.1);
  spec.noise = 0.005;
  spec.n_in = static_cast<std::size_t>(state.range(0));
  spec.n_out = 64;
  const auto layer = red::gen_multimodal_layer(spec).layer;
  const auto values = layer.tensor("weight").values();
  for (auto _ : state) {
    benchmark::DoNotOptimize(red::hash_distribution(values, 0.0));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(values.size()));
}
BENCHMARK(BM_HashDistribution)->Arg(16)->Arg(64)->Arg(256);

void BM_MergeModel(benchmark::State& state) {
  red::DuplicateSpec spec;
  spec.seed = 3;
  const auto w = static_cast<std::size_t>(state.range(0));
  spec.widths = {32, w, w, w, 10};
  spec.planted = {0, 2};
  const auto planted = red::gen_model_with_duplicates(spec);
  red::MergeConfig cfg;
  cfg.alpha = 0.2;
  for (auto _ : state) {
    benchmark::DoNotOptimize(red::merge_model(planted.model, cfg));
  }
}
BENCHMARK(BM_MergeModel)->Arg(32)->Arg(128);

void BM_SeparateLayer(benchmark::State& state) {
  red::SeparableSpec spec;
  spec.n_in = static_cast<std::size_t>(state.range(0));
  spec.n_out = 64;
  const auto layer = red::gen_separable_conv(spec);
  for (auto _ : state) {
    benchmark::DoNotOptimize(red::separate_layer(layer));
  }
}
BENCHMARK(BM_SeparateLayer)->Arg(8)->Arg(32);

void BM_Forward(benchmark::State& state) {
  red::ConvNetSpec spec;
  spec.channels = {8, 16, 16};
  spec.residual_after = {1};
  const auto model = red::gen_conv_net(spec);
  const auto inputs = red::random_inputs(model, 1, 1, 16, 16);
  for (auto _ : state) {
    benchmark::DoNotOptimize(red::forward(model, inputs.front()));
  }
}
BENCHMARK(BM_Forward);

void BM_Pipeline(benchmark::State& state) {
  red::ConvNetSpec spec;
  spec.channels = {8, 8, 16, 16, 16};
  spec.residual_after = {1, 3};
  spec.batchnorm = true;
  spec.style = red::WeightStyle::Multimodal;
  const auto model = red::gen_conv_net(spec);
  red::PipelineConfig cfg;
  cfg.merge.alpha = 0.1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(red::run_pipeline(model, cfg));
  }
}
BENCHMARK(BM_Pipeline)->Unit(benchmark::kMillisecond);

void BM_SerializeRoundTrip(benchmark::State& state) {
  red::ConvNetSpec spec;
  spec.channels = {16, 32, 32};
  const auto model = red::gen_conv_net(spec);
  for (auto _ : state) {
    benchmark::DoNotOptimize(red::deserialize_model(red::serialize_model(model)));
  }
}
BENCHMARK(BM_SerializeRoundTrip);

}  // namespace

BENCHMARK_MAIN();
