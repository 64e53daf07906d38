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

#include <random>

#include "../support/oracles.hpp"
#include "red/error.hpp"
#include "red/inference.hpp"
#include "red/separation.hpp"
#include "red/synth.hpp"

using namespace red;

namespace {

Tensor random_tensor(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Tensor t(std::move(s));
  for (double& v : t.values()) v = n(rng);
  return t;
}

}  // namespace

TEST_SUITE("inference") {
  TEST_CASE("dense identity") {
    Model m;
    m.blocks.push_back(Block::plain(make_dense("fc", Tensor(Shape{2, 2}, {1, 0, 0, 1}), Tensor({2}))));
    const auto y = forward(m, Tensor(Shape{2}, {3, 5}));
    CHECK(y.storage() == std::vector<double>{3, 5});
  }

  TEST_CASE("1x1 conv scales the plane") {
    Model m;
    m.blocks.push_back(Block::plain(make_conv2d("c", Tensor::filled({1, 1, 1, 1}, 2.0))));
    const auto y = forward(m, Tensor::filled({1, 3, 3}, 1.0));
    CHECK(y.shape() == Shape{1, 3, 3});
    for (double v : y.values()) CHECK(v == 2.0);
  }

  TEST_CASE("conv matches the direct oracle") {
    for (std::size_t stride : {1u, 2u}) {
      for (std::size_t pad : {0u, 1u}) {
        const Tensor w = random_tensor({3, 3, 2, 3}, 11 + stride + pad);
        const Tensor b = random_tensor({3}, 12);
        const Tensor x = random_tensor({2, 7, 6}, 13);
        Model m;
        m.blocks.push_back(Block::plain(make_conv2d("c", w, b, stride, pad)));
        const auto y = forward(m, x);
        const auto ref = oracle::conv2d(w, b.storage(), x.storage(), 2, 7, 6, stride, pad);
        REQUIRE(y.numel() == ref.size());
        CHECK(oracle::max_abs_diff(y.storage(), ref) < 1e-12);
      }
    }
  }

  TEST_CASE("depthwise equals conv with a diagonal kernel") {
    const Tensor dw = random_tensor({3, 3, 3, 1}, 21);
    Tensor full(Shape{3, 3, 3, 3});
    for (std::size_t y = 0; y < 3; ++y) {
      for (std::size_t x = 0; x < 3; ++x) {
        for (std::size_t c = 0; c < 3; ++c) full.at({y, x, c, c}) = dw.at({y, x, c, 0});
      }
    }
    Model a, b;
    a.blocks.push_back(Block::plain(make_depthwise("d", dw, std::nullopt, 1, 1)));
    b.blocks.push_back(Block::plain(make_conv2d("c", full, std::nullopt, 1, 1)));
    const Tensor x = random_tensor({3, 5, 5}, 22);
    CHECK(oracle::max_abs_diff(forward(a, x).storage(), forward(b, x).storage()) < 1e-12);
  }

  TEST_CASE("batch norm and relu") {
    Model m;
    m.blocks.push_back(Block::plain(make_batchnorm("bn", Tensor::filled({1}, 3.0),
                                                   Tensor::filled({1}, 1.0), Tensor({1}),
                                                   Tensor::filled({1}, 1.0 - kBatchNormEpsilon))));
    m.blocks.push_back(Block::plain(make_relu()));
    const auto y = forward(m, Tensor(Shape{1, 1, 2}, {2.0, -1.0}));
    CHECK(y[0] == doctest::Approx(7.0).epsilon(1e-12));
    CHECK(y[1] == 0.0);
  }

  TEST_CASE("residual adds the shortcut") {
    Model m;
    m.blocks.push_back(Block::residual({make_conv2d("c", Tensor::filled({1, 1, 1, 1}, 2.0))}));
    const auto y = forward(m, Tensor::filled({1, 2, 2}, 1.5));
    for (double v : y.values()) CHECK(v == 4.5);
  }

  TEST_CASE("dense after conv pools globally") {
    Model m;
    m.blocks.push_back(Block::plain(make_dense("fc", Tensor(Shape{1, 2}, {1.0, 10.0}))));
    const auto y = forward(m, Tensor(Shape{2, 1, 2}, {1, 3, 5, 7}));
    CHECK(y[0] == doctest::Approx(2.0 + 60.0));
  }

  TEST_CASE("uneven depthwise equals its expanded conv") {
    SeparableSpec spec;
    spec.seed = 31;
    spec.padding = 1;
    spec.bias = true;
    spec.full_rank_channels = 1;
    const Layer conv = gen_separable_conv(spec);
    const Layer uneven = separate_layer(conv).first;
    REQUIRE(uneven.kind == LayerKind::UnevenDepthwiseConv2D);
    Model a, b;
    a.blocks.push_back(Block::plain(conv));
    b.blocks.push_back(Block::plain(uneven));
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Tensor x = random_tensor({4, 6, 6}, 100 + s);
      CHECK(oracle::max_abs_diff(forward(a, x).storage(), forward(b, x).storage()) <= 1e-9);
    }
  }

  TEST_CASE("shape mismatch names the layer") {
    Model m;
    m.blocks.push_back(Block::plain(make_dense("head", Tensor::filled({2, 3}, 1.0))));
    CHECK_THROWS_WITH_AS(forward(m, Tensor({4})), doctest::Contains("head"), EvaluationError);
  }

  TEST_CASE("forward is deterministic and linear without bias") {
    DuplicateSpec spec;
    spec.bias = false;
    spec.widths = {8, 16, 4};
    Model m = gen_model_with_duplicates(spec).model;
    m.blocks.erase(m.blocks.begin() + 1);  // drop the relu
    const auto xs = random_inputs(m, 3, 9);
    for (const auto& x : xs) {
      CHECK(forward(m, x) == forward(m, x));
      Tensor scaled = x;
      for (double& v : scaled.values()) v *= 2.5;
      const auto y = forward(m, x);
      const auto ys = forward(m, scaled);
      for (std::size_t i = 0; i < y.numel(); ++i) CHECK(std::abs(ys[i] - 2.5 * y[i]) < 1e-12);
    }
  }

  TEST_CASE("random inputs follow the model") {
    ConvNetSpec spec;
    spec.in_channels = 3;
    const Model m = gen_conv_net(spec);
    const auto xs = random_inputs(m, 4, 1, 5, 6);
    REQUIRE(xs.size() == 4);
    CHECK(xs[0].shape() == Shape{3, 5, 6});
    CHECK(random_inputs(m, 4, 1, 5, 6) == xs);
    CHECK(forward_batch(m, xs).size() == 4);
  }

  TEST_CASE("logit delta") {
    Model m;
    m.blocks.push_back(Block::plain(make_dense("fc", Tensor(Shape{2, 1}, {10.0, 2.0}))));
    const std::vector<Tensor> one{Tensor(Shape{1}, {1.0})};
    const LogitDelta same = logit_delta(m, m, one);
    CHECK(same.mean_abs_delta == 0.0);
    CHECK(same.gap_mean == doctest::Approx(8.0));
    Model other;
    other.blocks.push_back(Block::plain(make_dense("fc", Tensor(Shape{3, 1}, {1, 2, 3}))));
    CHECK_THROWS_AS(logit_delta(m, other, one), EvaluationError);
    CHECK_THROWS_AS(logit_delta(m, m, {}), EvaluationError);
  }
}
