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
#include <string>
#include <utility>
#include <vector>

#include "red/model.hpp"

namespace red {

inline constexpr double kDefaultRelTol = 1e-6;

// Filters of a Conv2D restricted to one input channel: row j is
// flatten(W[:, :, channel, j]) in (y, x) row-major order.
struct ChannelMatrix {
  std::size_t channel = 0;
  std::size_t rows = 0;  // n_out
  std::size_t cols = 0;  // kh * kw
  std::vector<double> data;

  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

ChannelMatrix channel_matrix(const Layer& conv, std::size_t channel);

// Number of singular values above rel_tol times the largest one (0 for a
// zero matrix).
std::size_t numerical_rank(const ChannelMatrix& m, double rel_tol = kDefaultRelTol);

// Greedy first-occurrence basis of the rows: a row seeds a new basis kernel
// when its residual against the current span exceeds rel_tol of its norm.
// Each kernel is divided by its last entry above rel_tol of its peak, with
// later entries zeroed. Pointwise coefficients are the least-squares weights
// of every row on the basis. Throws
// InseparableError if more than `rank` kernels would be needed or a row
// cannot be reconstructed within rel_tol.
ChannelFactors extract_basis(const ChannelMatrix& m, std::size_t rank,
                             double rel_tol = kDefaultRelTol);

struct SeparationPlan {
  std::string layer;
  std::vector<std::size_t> ranks;
  std::size_t original_params = 0;   // kh*kw*n_in*n_out
  std::size_t predicted_params = 0;  // sum_i r_i * (kh*kw + n_out)
  std::size_t actual_params = 0;     // weight parameters after the decision
  bool applied = false;
  std::string reason;
};

// Replaces a Conv2D by its uneven depthwise factorisation when that strictly
// reduces the weight count; otherwise returns the layer unchanged with the
// reason ("no benefit", "inseparable channel i", "not a Conv2D").
std::pair<Layer, SeparationPlan> separate_layer(const Layer& layer,
                                                double rel_tol = kDefaultRelTol);

struct SeparationResult {
  Model model;
  std::vector<SeparationPlan> plans;
};

SeparationResult separate_model(const Model& model, double rel_tol = kDefaultRelTol);

// Dense Conv2D kernel equivalent to an uneven depthwise layer.
Layer expand_to_conv(const Layer& uneven);

std::string separation_plans_to_json(const std::vector<SeparationPlan>& plans);

}  // namespace red
