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
#include <string_view>
#include <vector>

namespace red {

// How a global hyperparameter (merge fraction alpha or contrast tau) is
// spread over L layers. Every strategy returns values in [0, 1].
enum class Strategy { Constant, Block, LinearAscending, LinearDescending };

std::string_view to_string(Strategy s);
std::optional<Strategy> strategy_from_string(std::string_view name);

// constant:   v_l = mean
// block:      thirds of the network get max(2m-1, 0), m, min(2m, 1)
// linear_*:   affine ramp centred on `mean` with half-span min(m, 1-m),
//             ascending or descending with the layer index
// The average of the result equals `mean` exactly for constant and the
// linear ramps, and for block whenever L is a multiple of three.
std::vector<double> allocate_layer_values(double mean, std::size_t layers, Strategy strategy);

}  // namespace red
