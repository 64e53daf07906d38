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

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "red/model.hpp"

namespace red {

// All generators are seed-deterministic and round every value to f32 so a
// generated model survives save/load unchanged.

// `k` mode centres, `separation` apart and centred on zero.
std::vector<double> spaced_modes(std::size_t k, double separation);

struct MultimodalSpec {
  std::uint64_t seed = 0;
  std::string name = "dense";
  std::vector<double> modes{-1.0, 1.0};
  double noise = 0.01;  // standard deviation around each mode
  std::size_t n_in = 32;
  std::size_t n_out = 32;
};

struct PlantedLayer {
  Layer layer;
  std::vector<std::size_t> assignment;  // mode index of every weight, in storage order
};

// Dense layer without bias whose weights are mode + N(0, noise^2); modes are
// used round-robin over a seeded permutation so every mode is populated.
PlantedLayer gen_multimodal_layer(const MultimodalSpec& spec);

// Dense ReLU network built from multimodal layers; widths[0] is the input.
Model gen_multimodal_model(std::uint64_t seed, const std::vector<std::size_t>& widths,
                           const std::vector<double>& modes, double noise);

struct DuplicateSpec {
  std::uint64_t seed = 0;
  std::vector<std::size_t> widths{16, 32, 32, 10};  // input, then each layer's outputs
  std::vector<std::size_t> planted{0};              // layers receiving duplicate outputs
  double duplicate_fraction = 0.5;  // fraction of outputs removed by an exact merge
  bool bias = true;
};

struct TruthEntry {
  std::string layer;
  std::vector<std::vector<std::size_t>> components;  // ordered by smallest member
};

struct PlantedModel {
  Model model;
  std::vector<TruthEntry> truth;  // every mergeable layer except the classifier
};

// Dense ReLU network (weights on a 1/64 grid) whose planted layers carry round(fraction * n_out)
// duplicated output neurons (weights and bias), paired at seeded positions.
PlantedModel gen_model_with_duplicates(const DuplicateSpec& spec);

// Conv stem, one residual block [conv, relu, conv] and a dense head. The stem
// and the block's tail share `pairs` duplicated output channels so only a
// joint merge can remove them.
PlantedModel gen_residual_with_duplicates(std::uint64_t seed, std::size_t channels,
                                          std::size_t pairs);

struct SeparableSpec {
  std::uint64_t seed = 0;
  std::string name = "conv";
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t n_in = 4;
  std::size_t n_out = 16;
  std::size_t full_rank_channels = 0;  // trailing channels filled with generic kernels
  bool bias = false;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// W[y, x, i, j] = D[y, x, i] * P[i, j] on dyadic grids, so the products and
// their ratios are exact.
Layer gen_separable_conv(const SeparableSpec& spec);

enum class WeightStyle { Gaussian, Separable, Multimodal };

struct ConvNetSpec {
  std::uint64_t seed = 0;
  std::size_t in_channels = 3;
  std::vector<std::size_t> channels{8, 8, 16};  // one plain conv per entry
  std::vector<std::size_t> residual_after;      // stage indices followed by a residual block
  bool depthwise_after_stem = false;
  bool batchnorm = false;
  double duplicate_fraction = 0.25;
  WeightStyle style = WeightStyle::Separable;
  std::size_t modes = 8;  // Multimodal style
  double noise = 0.002;   // Multimodal style
  std::size_t classes = 10;
};

// 3x3 padded convolutions with ReLU (and optional BatchNorm), residual
// blocks sharing the stage's duplicate pattern, and a dense classifier.
Model gen_conv_net(const ConvNetSpec& spec);

struct MergeProfileSpec {
  std::uint64_t seed = 0;
  double gamma = 1.0;  // proportion of unique output neurons
  double alpha = 0.0;  // merge percentile the layer is built for
  bool mixed_ranks = false;
  std::size_t n_in = 4;  // minimum; raised to clusters + unique neurons
  std::size_t kernel = 3;
  std::size_t classes = 4;
};

struct MergeProfile {
  Model model;  // planted conv, relu, dense head
  std::string layer;
  std::size_t n_out = 0;
  std::size_t unique = 0;
  std::size_t clusters = 0;          // outputs left after merging at alpha
  std::vector<std::size_t> ranks;    // per input channel, before and after merging
};

// Conv layer whose outputs form round(gamma * (1 - alpha) * n_out) clusters
// holding gamma * n_out distinct neurons. Clusters are mutually equidistant,
// so the alpha percentile of the pairwise distances lands on the
// inter-cluster distance and only intra-cluster pairs fall below it. Searches
// n_out in [8, 64]; throws ValidationError when no width admits such a
// layout.
MergeProfile gen_merge_profile(const MergeProfileSpec& spec);

}  // namespace red
