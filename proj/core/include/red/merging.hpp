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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "red/model.hpp"
#include "red/strategy.hpp"

namespace red {

struct MergeConfig {
  double alpha = 0.0;  // mean merge percentile over merge groups, in [0, 1)
  Strategy alpha_strategy = Strategy::Block;
  bool fold_bn = true;
  bool distance_bias = true;  // include the bias entry in neuron distances
  double rel_tol = 1e-6;      // re-separation tolerance for uneven layers touched by a merge
};

std::vector<double> allocate_alphas(double alpha, std::size_t layers, Strategy strategy);

// Absorbs every BatchNorm into the preceding Dense / Conv2D / depthwise layer
// and removes it. Throws StructureError when a BatchNorm has no directly
// preceding affine layer.
Model fold_batchnorm(const Model& model);

// Output neuron j as a flat vector: the weights producing output j followed
// by its bias (when present and `with_bias`). Uneven depthwise layers use
// their reconstructed kernel. nullopt for layers whose outputs cannot be
// merged (depthwise, batch norm, activation).
std::optional<std::vector<double>> neuron_vector(const Layer& layer, std::size_t j,
                                                 bool with_bias = true);

// Layers whose outputs share one channel space. Residual shortcuts tie the
// producer of a block's input to the tail of the block's main path, so they
// are merged jointly with concatenated neuron vectors; consumers have the
// matching input slices summed.
struct MergeGroup {
  std::vector<LayerRef> producers;
  std::vector<LayerRef> consumers;
  std::optional<std::string> skip_reason;
};

// Merge groups in front-to-back order, including skipped ones with the
// reason they cannot be merged.
std::vector<MergeGroup> find_merge_groups(const Model& model);

std::vector<double> group_neuron_vector(const Model& model, const MergeGroup& group,
                                        std::size_t j, bool with_bias = true);

struct ComponentPlan {
  std::vector<std::vector<std::size_t>> components;  // ordered by smallest member
  double threshold = 0.0;                            // percentile distance d
  std::size_t unique = 0;                            // distinct neuron vectors

  std::size_t outputs() const;
  bool is_identity() const { return components.size() == outputs(); }
};

// Linear-interpolation percentile (q in [0, 1]) of `values`; 0 when empty.
double percentile(std::vector<double> values, double q);

// Euclidean distances between all neuron pairs, thresholded at the alpha_l
// percentile of the off-diagonal distances. Pairs closer than the threshold,
// or at distance zero, are connected; components come from union-find.
ComponentPlan build_components(std::span<const std::vector<double>> neurons, double alpha_l);
ComponentPlan build_components(const Layer& layer, double alpha_l, bool with_bias = true);

// Replaces each component of the group's producers by the mean of its
// members and sums the corresponding input slices of the consumers.
Model apply_merge(const Model& model, const MergeGroup& group, const ComponentPlan& plan,
                  double rel_tol = 1e-6);

struct MergeEntry {
  std::vector<std::string> producers;
  std::vector<std::string> consumers;
  std::size_t outputs_before = 0;
  std::size_t outputs_after = 0;
  std::size_t unique = 0;
  double alpha = 0.0;
  double threshold = 0.0;
  std::vector<std::vector<std::size_t>> components;
  std::optional<std::string> skipped;

  // Proportion of unique neurons (gamma^l).
  double gamma() const;
  // Fraction of unique neurons removed beyond exact duplicates.
  double realized_alpha() const;
};

struct MergePlan {
  std::vector<MergeEntry> entries;
};

struct MergeResult {
  Model model;
  MergePlan plan;
};

// Folds batch norm (if configured), then merges each group front to back
// with its allocated alpha^l. Groups feeding the model output are exempt.
MergeResult merge_model(const Model& model, const MergeConfig& cfg);

std::string merge_plan_to_json(const MergePlan& plan);

}  // namespace red
