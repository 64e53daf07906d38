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

#include <doctest.h>

#include <numeric>

#include "red/merging.hpp"
#include "red/strategy.hpp"

using namespace red;

namespace {

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TEST_SUITE("strategy") {
  TEST_CASE("block thirds") {
    const auto v = allocate_alphas(0.6, 9, Strategy::Block);
    const std::vector<double> expect{0.2, 0.2, 0.2, 0.6, 0.6, 0.6, 1.0, 1.0, 1.0};
    REQUIRE(v.size() == 9);
    for (std::size_t i = 0; i < 9; ++i) CHECK(v[i] == doctest::Approx(expect[i]).epsilon(1e-15));
  }

  TEST_CASE("zero stays zero") {
    for (auto s : {Strategy::Constant, Strategy::Block, Strategy::LinearAscending,
                   Strategy::LinearDescending}) {
      for (double v : allocate_alphas(0.0, 7, s)) CHECK(v == 0.0);
    }
  }

  TEST_CASE("linear ramps average to the mean") {
    const auto up = allocate_alphas(0.3, 3, Strategy::LinearAscending);
    CHECK(up[0] == doctest::Approx(0.0));
    CHECK(up[1] == doctest::Approx(0.3));
    CHECK(up[2] == doctest::Approx(0.6));
    const auto down = allocate_alphas(0.3, 3, Strategy::LinearDescending);
    CHECK(down[0] == doctest::Approx(0.6));
    CHECK(down[2] == doctest::Approx(0.0));
    for (double a = 0.1; a < 0.95; a += 0.1) {
      for (std::size_t L : {1u, 2u, 5u, 9u, 10u}) {
        for (auto s : {Strategy::Constant, Strategy::LinearAscending, Strategy::LinearDescending}) {
          const auto v = allocate_alphas(a, L, s);
          CHECK(std::abs(mean(v) - a) < 1e-12);
          for (double x : v) {
            CHECK(x >= 0.0);
            CHECK(x <= 1.0);
          }
        }
      }
    }
  }

  TEST_CASE("ascending is non-decreasing") {
    const auto v = allocate_alphas(0.7, 6, Strategy::LinearAscending);
    for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i] >= v[i - 1]);
  }

  TEST_CASE("names") {
    CHECK(strategy_from_string("block") == Strategy::Block);
    CHECK(strategy_from_string("linear_ascending") == Strategy::LinearAscending);
    CHECK(strategy_from_string("linear-descending") == Strategy::LinearDescending);
    CHECK_FALSE(strategy_from_string("cubic").has_value());
    CHECK(to_string(Strategy::Constant) == "constant");
  }

  TEST_CASE("empty allocation") { CHECK(allocate_alphas(0.5, 0, Strategy::Block).empty()); }
}
