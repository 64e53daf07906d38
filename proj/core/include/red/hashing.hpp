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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "red/model.hpp"
#include "red/strategy.hpp"

namespace red {

// Gaussian KDE of a weight distribution sampled on an ascending grid.
struct DensityEstimate {
  std::vector<double> grid;
  std::vector<double> values;
  double bandwidth = 0.0;
};

// Codebook of a layer. `minima` carries -inf/+inf sentinels, so
// minima.size() == maxima.size() + 1 and minima[k] < maxima[k] < minima[k+1].
// `heights[k]` is the density at maxima[k]; collapsing uses it to pick the
// dominant mode.
struct ModeSet {
  std::vector<double> minima;
  std::vector<double> maxima;
  std::vector<double> heights;

  bool well_formed() const;
};

inline constexpr std::size_t kDefaultGridSize = 2048;

struct HashConfig {
  double tau = 0.0;  // mean contrast, fraction of each layer's weight range
  Strategy tau_strategy = Strategy::Constant;
  std::size_t grid_size = kDefaultGridSize;
  bool hash_bias = true;
  std::optional<double> bandwidth;                 // overrides the median rule everywhere
  std::map<std::string, double> layer_bandwidth;   // per layer name, wins over `bandwidth`
};

// Median of the gaps between consecutive sorted distinct values (mean of the
// two middle gaps for an even count). nullopt when fewer than two distinct
// values exist.
std::optional<double> bandwidth(std::span<const double> weights);

// Evaluates the KDE on `grid_size` equally spaced points spanning
// [min - 3*bandwidth, max + 3*bandwidth].
DensityEstimate estimate_density(std::span<const double> weights, double bandwidth,
                                 std::size_t grid_size = kDefaultGridSize);

// Strict local extrema of the sampled density; flat runs resolve to their
// midpoint. Throws EstimationError if no maximum exists.
ModeSet extract_extrema(const DensityEstimate& density);

// Modes taken directly from the distinct values of an already-discrete
// distribution: maxima are the values, minima the midpoints, heights the
// relative frequencies.
ModeSet atomic_modes(std::span<const double> weights);

// Repeatedly merges the closest adjacent pair of maxima while their distance
// is below tau * range, keeping the higher mode (smaller abscissa on ties)
// and dropping the minimum between them.
ModeSet collapse_modes(const ModeSet& modes, double tau, double range);

// Replaces each value with the maximum of its enclosing minima interval.
std::vector<double> hash_values(std::span<const double> weights, const ModeSet& modes);
Tensor hash_layer(const Tensor& weights, const ModeSet& modes);

enum class HashPath { Kde, Atomic, Degenerate };

struct DistributionHash {
  std::vector<double> values;
  ModeSet modes;
  HashPath path = HashPath::Kde;
  double bandwidth = 0.0;
  std::size_t distinct_before = 0;
  std::size_t distinct_after = 0;
};

// Full per-distribution pipeline: bandwidth, density, extrema, collapse,
// assignment. Distributions with at most half as many distinct values as
// entries skip the KDE and use atomic_modes.
DistributionHash hash_distribution(std::span<const double> weights, double tau,
                                   std::size_t grid_size = kDefaultGridSize,
                                   std::optional<double> bandwidth_override = std::nullopt);

std::vector<double> allocate_taus(double tau, std::size_t layers, Strategy strategy);

struct HashedGroup {
  std::string layer;
  std::string tensors;  // e.g. "weight+bias", "gamma"
  double tau = 0.0;
  HashPath path = HashPath::Kde;
  double bandwidth = 0.0;
  std::size_t modes = 0;
  std::size_t distinct_before = 0;
  std::size_t distinct_after = 0;
};

struct HashReport {
  std::vector<HashedGroup> groups;
};

std::string_view to_string(HashPath path);

// Hashes every Dense, Conv2D and DepthwiseConv2D weight tensor (jointly with
// its bias when cfg.hash_bias) and each BatchNorm tensor separately, with
// per-layer tau from allocate_taus. ReLU and uneven depthwise layers are left
// untouched. Layers are processed concurrently.
Model hash_model(const Model& model, const HashConfig& cfg, HashReport* report = nullptr);

std::size_t count_distinct(std::span<const double> values);

}  // namespace red
