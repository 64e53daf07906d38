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

#include "red/strategy.hpp"

#include <algorithm>

namespace red {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Constant:
      return "constant";
    case Strategy::Block:
      return "block";
    case Strategy::LinearAscending:
      return "linear_ascending";
    case Strategy::LinearDescending:
      return "linear_descending";
  }
  return "constant";
}

std::optional<Strategy> strategy_from_string(std::string_view name) {
  for (Strategy s : {Strategy::Constant, Strategy::Block, Strategy::LinearAscending,
                     Strategy::LinearDescending}) {
    if (to_string(s) == name) return s;
  }
  if (name == "linear-ascending") return Strategy::LinearAscending;
  if (name == "linear-descending") return Strategy::LinearDescending;
  return std::nullopt;
}

std::vector<double> allocate_layer_values(double mean, std::size_t layers, Strategy strategy) {
  std::vector<double> out(layers, mean);
  if (layers == 0) return out;
  const double low = std::max(2.0 * mean - 1.0, 0.0);
  const double high = std::min(2.0 * mean, 1.0);
  const auto count = static_cast<double>(layers);
  switch (strategy) {
    case Strategy::Constant:
      break;
    case Strategy::Block:
      for (std::size_t l = 0; l < layers; ++l) {
        const auto pos = static_cast<double>(l);
        if (pos < count / 3.0) {
          out[l] = low;
        } else if (pos < 2.0 * count / 3.0) {
          out[l] = mean;
        } else {
          out[l] = high;
        }
      }
      break;
    case Strategy::LinearAscending:
    case Strategy::LinearDescending: {
      if (layers == 1) break;
      const double half_span = std::min(mean, 1.0 - mean);
      for (std::size_t l = 0; l < layers; ++l) {
        // t runs from -1 to 1 across the layers
        double t = 2.0 * static_cast<double>(l) / (count - 1.0) - 1.0;
        if (strategy == Strategy::LinearDescending) t = -t;
        out[l] = std::clamp(mean + half_span * t, 0.0, 1.0);
      }
      break;
    }
  }
  return out;
}

}  // namespace red
