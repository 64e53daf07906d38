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

#include "red/hashing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>

#include "red/error.hpp"
#include "red/parallel.hpp"

namespace red {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Kernel terms beyond this many bandwidths are below 1e-17 of the peak.
constexpr double kKernelCutoff = 9.0;

struct Atoms {
  std::vector<double> values;
  std::vector<std::size_t> counts;
};

Atoms atoms_of(std::span<const double> weights) {
  std::vector<double> sorted(weights.begin(), weights.end());
  std::sort(sorted.begin(), sorted.end());
  Atoms atoms;
  for (double v : sorted) {
    if (atoms.values.empty() || atoms.values.back() != v) {
      atoms.values.push_back(v);
      atoms.counts.push_back(1);
    } else {
      ++atoms.counts.back();
    }
  }
  return atoms;
}

}  // namespace

bool ModeSet::well_formed() const {
  if (maxima.empty() || minima.size() != maxima.size() + 1 || heights.size() != maxima.size()) {
    return false;
  }
  if (minima.front() != -kInf || minima.back() != kInf) return false;
  for (std::size_t k = 0; k < maxima.size(); ++k) {
    if (!(minima[k] < maxima[k] && maxima[k] < minima[k + 1])) return false;
  }
  return true;
}

std::size_t count_distinct(std::span<const double> values) {
  return atoms_of(values).values.size();
}

std::optional<double> bandwidth(std::span<const double> weights) {
  const Atoms atoms = atoms_of(weights);
  if (atoms.values.size() < 2) return std::nullopt;
  std::vector<double> gaps(atoms.values.size() - 1);
  for (std::size_t i = 0; i + 1 < atoms.values.size(); ++i) {
    gaps[i] = atoms.values[i + 1] - atoms.values[i];
  }
  std::sort(gaps.begin(), gaps.end());
  const std::size_t n = gaps.size();
  if (n % 2 == 1) return gaps[n / 2];
  return 0.5 * (gaps[n / 2 - 1] + gaps[n / 2]);
}

DensityEstimate estimate_density(std::span<const double> weights, double bandwidth,
                                 std::size_t grid_size) {
  if (!(bandwidth > 0.0)) throw EstimationError("bandwidth must be positive");
  if (grid_size < 16) throw EstimationError("grid size must be at least 16");
  if (weights.empty()) throw EstimationError("cannot estimate the density of no weights");

  const Atoms atoms = atoms_of(weights);
  const double lo = atoms.values.front() - 3.0 * bandwidth;
  const double hi = atoms.values.back() + 3.0 * bandwidth;
  const double norm = 1.0 / (static_cast<double>(weights.size()) * bandwidth *
                             std::sqrt(2.0 * std::numbers::pi));

  DensityEstimate d;
  d.bandwidth = bandwidth;
  d.grid.resize(grid_size);
  d.values.resize(grid_size);
  const double span = hi - lo;
  const auto last = static_cast<double>(grid_size - 1);
  for (std::size_t g = 0; g < grid_size; ++g) {
    const double omega = lo + span * (static_cast<double>(g) / last);
    d.grid[g] = omega;
    const auto first = std::lower_bound(atoms.values.begin(), atoms.values.end(),
                                        omega - kKernelCutoff * bandwidth);
    const auto end = std::upper_bound(first, atoms.values.end(), omega + kKernelCutoff * bandwidth);
    double acc = 0.0;
    for (auto it = first; it != end; ++it) {
      const double u = (omega - *it) / bandwidth;
      acc += static_cast<double>(atoms.counts[static_cast<std::size_t>(it - atoms.values.begin())]) *
             std::exp(-0.5 * u * u);
    }
    d.values[g] = acc * norm;
  }
  return d;
}

ModeSet extract_extrema(const DensityEstimate& density) {
  const auto& v = density.values;
  const auto& x = density.grid;
  // Runs of equal values.
  struct Run {
    std::size_t first, last;
    double value;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (runs.empty() || runs.back().value != v[i]) {
      runs.push_back({i, i, v[i]});
    } else {
      runs.back().last = i;
    }
  }

  enum class Kind { Min, Max };
  std::vector<std::pair<Kind, std::size_t>> extrema;  // run index
  for (std::size_t r = 1; r + 1 < runs.size(); ++r) {
    const double prev = runs[r - 1].value;
    const double next = runs[r + 1].value;
    if (runs[r].value > prev && runs[r].value > next) {
      extrema.emplace_back(Kind::Max, r);
    } else if (runs[r].value < prev && runs[r].value < next) {
      extrema.emplace_back(Kind::Min, r);
    }
  }
  while (!extrema.empty() && extrema.front().first == Kind::Min) extrema.erase(extrema.begin());
  while (!extrema.empty() && extrema.back().first == Kind::Min) extrema.pop_back();
  if (extrema.empty()) throw EstimationError("density has no interior local maximum");

  ModeSet modes;
  modes.minima.push_back(-kInf);
  for (const auto& [kind, r] : extrema) {
    const double at = 0.5 * (x[runs[r].first] + x[runs[r].last]);
    if (kind == Kind::Max) {
      modes.maxima.push_back(at);
      modes.heights.push_back(runs[r].value);
    } else {
      modes.minima.push_back(at);
    }
  }
  modes.minima.push_back(kInf);
  if (modes.minima.size() != modes.maxima.size() + 1) {
    throw EstimationError("extrema do not interleave");
  }
  return modes;
}

ModeSet atomic_modes(std::span<const double> weights) {
  const Atoms atoms = atoms_of(weights);
  if (atoms.values.empty()) throw EstimationError("cannot build modes of no weights");
  ModeSet modes;
  modes.minima.push_back(-kInf);
  const auto total = static_cast<double>(weights.size());
  for (std::size_t k = 0; k < atoms.values.size(); ++k) {
    if (k > 0) {
      const double a = atoms.values[k - 1];
      const double b = atoms.values[k];
      double mid = a + 0.5 * (b - a);
      if (mid <= a) mid = b;  // adjacent doubles
      modes.minima.push_back(mid);
    }
    modes.maxima.push_back(atoms.values[k]);
    modes.heights.push_back(static_cast<double>(atoms.counts[k]) / total);
  }
  modes.minima.push_back(kInf);
  return modes;
}

ModeSet collapse_modes(const ModeSet& modes, double tau, double range) {
  ModeSet out = modes;
  const double threshold = tau * range;
  while (out.maxima.size() > 1) {
    std::size_t best = 0;
    double best_gap = kInf;
    for (std::size_t k = 0; k + 1 < out.maxima.size(); ++k) {
      const double gap = out.maxima[k + 1] - out.maxima[k];
      if (gap < best_gap) {
        best_gap = gap;
        best = k;
      }
    }
    if (!(best_gap < threshold)) break;
    const std::size_t dominated = out.heights[best] >= out.heights[best + 1] ? best + 1 : best;
    out.maxima.erase(out.maxima.begin() + static_cast<std::ptrdiff_t>(dominated));
    out.heights.erase(out.heights.begin() + static_cast<std::ptrdiff_t>(dominated));
    out.minima.erase(out.minima.begin() + static_cast<std::ptrdiff_t>(best + 1));
  }
  return out;
}

std::vector<double> hash_values(std::span<const double> weights, const ModeSet& modes) {
  std::vector<double> out(weights.size());
  // Interior minima only; interval k is [minima[k], minima[k+1]).
  const auto first = modes.minima.begin() + 1;
  const auto last = modes.minima.end() - 1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto k = static_cast<std::size_t>(std::upper_bound(first, last, weights[i]) - first);
    out[i] = modes.maxima[k];
  }
  return out;
}

Tensor hash_layer(const Tensor& weights, const ModeSet& modes) {
  return Tensor(weights.shape(), hash_values(weights.values(), modes));
}

DistributionHash hash_distribution(std::span<const double> weights, double tau,
                                   std::size_t grid_size,
                                   std::optional<double> bandwidth_override) {
  DistributionHash out;
  out.distinct_before = count_distinct(weights);
  if (weights.empty()) return out;

  const auto [lo, hi] = std::minmax_element(weights.begin(), weights.end());
  const double range = *hi - *lo;
  if (out.distinct_before == 1) {
    out.path = HashPath::Degenerate;
    out.modes = atomic_modes(weights);
  } else if (!bandwidth_override && 2 * out.distinct_before <= weights.size()) {
    out.path = HashPath::Atomic;
    out.modes = collapse_modes(atomic_modes(weights), tau, range);
  } else {
    out.path = HashPath::Kde;
    out.bandwidth = bandwidth_override ? *bandwidth_override : *bandwidth(weights);
    const DensityEstimate d = estimate_density(weights, out.bandwidth, grid_size);
    out.modes = collapse_modes(extract_extrema(d), tau, range);
  }
  out.values = hash_values(weights, out.modes);
  out.distinct_after = count_distinct(out.values);
  return out;
}

std::vector<double> allocate_taus(double tau, std::size_t layers, Strategy strategy) {
  return allocate_layer_values(tau, layers, strategy);
}

std::string_view to_string(HashPath path) {
  switch (path) {
    case HashPath::Kde:
      return "kde";
    case HashPath::Atomic:
      return "atomic";
    case HashPath::Degenerate:
      return "degenerate";
  }
  return "kde";
}

namespace {

bool hashable(const Layer& layer) {
  return layer.kind == LayerKind::Dense || layer.kind == LayerKind::Conv2D ||
         layer.kind == LayerKind::DepthwiseConv2D || layer.kind == LayerKind::BatchNorm;
}

std::vector<HashedGroup> hash_one_layer(Layer& layer, double tau, const HashConfig& cfg) {
  std::optional<double> override_bw = cfg.bandwidth;
  if (auto it = cfg.layer_bandwidth.find(layer.name); it != cfg.layer_bandwidth.end()) {
    override_bw = it->second;
  }
  std::vector<HashedGroup> groups;
  auto record = [&](const std::string& tensors, const DistributionHash& h) {
    groups.push_back({layer.name, tensors, tau, h.path, h.bandwidth, h.modes.maxima.size(),
                      h.distinct_before, h.distinct_after});
  };

  if (layer.kind == LayerKind::BatchNorm) {
    for (const char* name : {"gamma", "beta", "mean", "var"}) {
      Tensor& t = layer.tensor(name);
      DistributionHash h = hash_distribution(t.values(), tau, cfg.grid_size, override_bw);
      t.storage() = std::move(h.values);
      record(name, h);
    }
    return groups;
  }

  Tensor& weight = layer.tensor("weight");
  const bool with_bias = cfg.hash_bias && layer.has_bias();
  std::vector<double> joint = weight.storage();
  if (with_bias) {
    const auto& b = layer.tensor("bias").storage();
    joint.insert(joint.end(), b.begin(), b.end());
  }
  DistributionHash h = hash_distribution(joint, tau, cfg.grid_size, override_bw);
  const std::size_t nw = weight.numel();
  std::copy(h.values.begin(), h.values.begin() + static_cast<std::ptrdiff_t>(nw),
            weight.storage().begin());
  if (with_bias) {
    std::copy(h.values.begin() + static_cast<std::ptrdiff_t>(nw), h.values.end(),
              layer.tensor("bias").storage().begin());
  }
  record(with_bias ? "weight+bias" : "weight", h);
  return groups;
}

}  // namespace

Model hash_model(const Model& model, const HashConfig& cfg, HashReport* report) {
  if (cfg.tau < 0.0 || cfg.tau >= 1.0) throw EstimationError("tau must lie in [0, 1)");
  Model out = model;
  std::vector<Layer*> targets;
  for_each_layer(out, [&](Layer& layer) {
    if (hashable(layer)) targets.push_back(&layer);
  });
  const std::vector<double> taus = allocate_taus(cfg.tau, targets.size(), cfg.tau_strategy);
  std::vector<std::vector<HashedGroup>> groups(targets.size());
  parallel_for(targets.size(),
               [&](std::size_t i) { groups[i] = hash_one_layer(*targets[i], taus[i], cfg); });
  if (report) {
    report->groups.clear();
    for (auto& g : groups) report->groups.insert(report->groups.end(), g.begin(), g.end());
  }
  return out;
}

}  // namespace red
