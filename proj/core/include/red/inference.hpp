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
#include <span>
#include <vector>

#include "red/model.hpp"

namespace red {

// Activations are tensors: [channels, height, width] between spatial layers,
// [features] after a dense layer. A dense layer fed a spatial activation
// averages each channel over height and width first.
using Activation = Tensor;

Activation apply_layer(const Layer& layer, const Activation& x);

// Evaluates the model. Deterministic: same model and input give bit-identical
// results. Throws EvaluationError naming the offending layer.
Activation forward(const Model& model, const Activation& input);

// Shape of the first layer's input for a given spatial resolution
// (ignored for dense-input models).
Shape input_shape(const Model& model, std::size_t height, std::size_t width);

// Seeded standard-normal inputs shaped for the model.
std::vector<Activation> random_inputs(const Model& model, std::size_t count, std::uint64_t seed,
                                      std::size_t height = 8, std::size_t width = 8);

std::vector<Activation> forward_batch(const Model& model, std::span<const Activation> inputs);

struct LogitDelta {
  double mean_abs_delta = 0.0;  // E|f(x) - g(x)| over all logits and inputs
  double max_abs_delta = 0.0;
  double gap_mean = 0.0;        // E[top1 - top2] of the first model
  double gap_stddev = 0.0;
  std::size_t inputs = 0;
};

// Compares two models on the same inputs. Throws EvaluationError when the
// output sizes differ or `inputs` is empty.
LogitDelta logit_delta(const Model& a, const Model& b, std::span<const Activation> inputs);

}  // namespace red
