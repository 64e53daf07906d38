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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "red/inference.hpp"
#include "red/model.hpp"

namespace red {

struct LayerParams {
  std::string layer;
  LayerKind kind = LayerKind::ReLU;
  std::size_t params = 0;
};

// Dense: n_out*n_in; Conv2D: kh*kw*n_in*n_out; depthwise: kh*kw*n;
// uneven depthwise: sum_i r_i*(kh*kw + n_out); BatchNorm: 4n. Bias adds n_out.
std::vector<LayerParams> count_params(const Model& model);
std::size_t total_params(const Model& model);

struct LayerFlops {
  std::string layer;
  LayerKind kind = LayerKind::ReLU;
  std::uint64_t flops = 0;        // 2 per multiply-accumulate
  std::uint64_t elementwise = 0;  // BN, ReLU, pooling, residual adds: 1 per element
};

// Per-layer counts for an input of the given spatial resolution (ignored by
// dense-input models). Residual additions are charged to the tail layer of
// the block's main path.
std::vector<LayerFlops> count_flops(const Model& model, std::size_t height, std::size_t width);

struct FlopTotals {
  std::uint64_t flops = 0;
  std::uint64_t elementwise = 0;
};
FlopTotals total_flops(const Model& model, std::size_t height, std::size_t width);

// Kept-output fraction of a merged layer: gamma * (1 - alpha).
double expected_merge_ratio(double gamma, double alpha);

// Parameter ratio of a merged and separated kh x kw conv layer against the
// original: (kh*kw + r_merge*n_out) / (kh*kw*n_out), scaled by mean(ranks)
// when ranks are given and not all 1.
double expected_red_ratio(std::size_t kernel_w, std::size_t kernel_h, std::size_t n_in,
                          std::size_t n_out, double r_merge, std::span<const std::size_t> ranks);

// Raw DEFLATE (level 6) size of a byte buffer.
std::size_t deflate_size(std::span<const std::uint8_t> bytes);

// Compressed REDM size of `original` divided by that of `processed`.
double zip_ratio(const Model& original, const Model& processed);

struct LayerReport {
  std::string layer;
  std::string kind;
  std::size_t params_before = 0;
  std::size_t params_after = 0;
  std::uint64_t flops_before = 0;
  std::uint64_t flops_after = 0;
  bool present_before = false;
  bool present_after = false;
};

struct StageReport {
  std::string stage;
  std::size_t params = 0;
  std::uint64_t flops = 0;
};

struct MergeStat {
  std::string layer;
  double gamma = 1.0;
  double alpha = 0.0;
  double realized_alpha = 0.0;
};

struct CompressionReport {
  std::string model;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t params_after = 0;
  std::uint64_t flops_after = 0;
  std::uint64_t elementwise_after = 0;
  // Set only when a baseline is given.
  std::optional<std::size_t> params_before;
  std::optional<std::uint64_t> flops_before;
  std::optional<std::uint64_t> elementwise_before;
  std::optional<double> zip;
  std::optional<LogitDelta> delta;
  std::vector<LayerReport> layers;
  std::vector<StageReport> stages;
  std::vector<MergeStat> merges;

  std::optional<double> removed_params_pct() const;
  std::optional<double> removed_flops_pct() const;
};

double removed_pct(double before, double after);

// Builds the report for `processed`, compared to `baseline` when given.
// Layers are matched by name.
CompressionReport make_report(const Model& processed, const Model* baseline, std::size_t height,
                              std::size_t width);

std::string report_to_json(const CompressionReport& report);
std::string report_to_text(const CompressionReport& report);

}  // namespace red
