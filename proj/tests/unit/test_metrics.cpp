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

#include "json.hpp"
#include "red/hashing.hpp"
#include "red/merging.hpp"
#include "red/metrics.hpp"
#include "red/separation.hpp"
#include "red/synth.hpp"

using namespace red;

namespace {

Model single(Layer l) {
  Model m;
  m.name = "single";
  m.blocks.push_back(Block::plain(std::move(l)));
  return m;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("parameter counts") {
    CHECK(total_params(single(make_dense("d", Tensor({4, 3}), Tensor({4})))) == 16);
    CHECK(total_params(single(make_conv2d("c", Tensor({3, 3, 2, 4})))) == 72);
    CHECK(total_params(single(make_depthwise("dw", Tensor({3, 3, 5, 1})))) == 45);
    CHECK(total_params(single(make_batchnorm("bn", Tensor::filled({6}, 1.0), Tensor({6}),
                                             Tensor({6}), Tensor::filled({6}, 1.0)))) == 24);
    CHECK(total_params(single(make_relu())) == 0);
    SeparableSpec spec;
    const Layer u = separate_layer(gen_separable_conv(spec)).first;
    CHECK(total_params(single(u)) == 100);
  }

  TEST_CASE("flop counts") {
    const auto conv = count_flops(single(make_conv2d("c", Tensor({3, 3, 2, 4}), {}, 1, 1)), 8, 8);
    REQUIRE(conv.size() == 1);
    CHECK(conv[0].flops == 2ull * 9 * 2 * 4 * 64);
    CHECK(conv[0].flops == 9216);
    CHECK(count_flops(single(make_dense("d", Tensor({10, 10}))), 1, 1)[0].flops == 200);

    Model m;
    m.blocks.push_back(Block::plain(make_conv2d("c", Tensor({3, 3, 2, 4}), {}, 2, 0)));
    m.blocks.push_back(Block::plain(make_relu()));
    m.blocks.push_back(Block::residual({make_conv2d("r", Tensor({1, 1, 4, 4}))}));
    m.blocks.push_back(Block::plain(make_dense("head", Tensor({3, 4}))));
    const auto f = count_flops(m, 9, 9);
    // 9x9 -> 4x4 after a stride-2 3x3 conv.
    CHECK(f[0].flops == 2ull * 9 * 2 * 4 * 16);
    CHECK(f[1].elementwise == 4 * 16);
    CHECK(f[2].flops == 2ull * 4 * 4 * 16);
    CHECK(f[2].elementwise == 4 * 16);
    CHECK(f[3].flops == 2ull * 4 * 3);
    CHECK(f[3].elementwise == 4 * 16);
    const auto t = total_flops(m, 9, 9);
    CHECK(t.flops == f[0].flops + f[2].flops + f[3].flops);
  }

  TEST_CASE("uneven flops follow the parameter ratio") {
    SeparableSpec spec;
    spec.padding = 1;
    const Layer conv = gen_separable_conv(spec);
    const Layer u = separate_layer(conv).first;
    const auto a = count_flops(single(conv), 8, 8)[0].flops;
    const auto b = count_flops(single(u), 8, 8)[0].flops;
    CHECK(b == 2ull * 100 * 64);
    CHECK(a == 2ull * 576 * 64);
  }

  TEST_CASE("expected ratios") {
    CHECK(expected_merge_ratio(0.5, 0.0) == 0.5);
    CHECK(expected_merge_ratio(1.0, 0.25) == 0.75);
    const std::vector<std::size_t> ones(4, 1);
    CHECK(expected_red_ratio(3, 3, 4, 16, 0.5, ones) == doctest::Approx(17.0 / 144.0));
    CHECK(expected_red_ratio(3, 3, 4, 16, 0.5, {}) == doctest::Approx(17.0 / 144.0));
    const std::vector<std::size_t> full(4, 16);
    CHECK(expected_red_ratio(3, 3, 4, 16, 1.0, full) >= 1.0);
    const std::vector<std::size_t> mixed{1, 1, 2, 4};
    CHECK(expected_red_ratio(3, 3, 4, 16, 1.0, mixed) == doctest::Approx(25.0 / 144.0 * 2.0));
  }

  TEST_CASE("zip ratio") {
    const Model m = gen_multimodal_model(1, {16, 32, 8}, spaced_modes(8, 0.1), 0.01);
    CHECK(zip_ratio(m, m) == 1.0);
    HashConfig cfg;
    cfg.bandwidth = 0.01;
    CHECK(zip_ratio(m, hash_model(m, cfg)) > 3.0);
    DuplicateSpec spec;
    spec.planted = {0, 1};
    const auto planted = gen_model_with_duplicates(spec);
    CHECK(zip_ratio(planted.model, merge_model(planted.model, MergeConfig{}).model) > 1.0);
    CHECK(deflate_size(std::vector<std::uint8_t>(4096, 0)) < 64);
  }

  TEST_CASE("report against itself") {
    ConvNetSpec spec;
    const Model m = gen_conv_net(spec);
    const auto r = make_report(m, &m, 8, 8);
    CHECK(*r.removed_params_pct() == 0.0);
    CHECK(*r.removed_flops_pct() == 0.0);
    CHECK(*r.zip == 1.0);
    std::size_t sum = 0;
    for (const auto& l : r.layers) sum += l.params_after;
    CHECK(sum == r.params_after);
    const auto j = nlohmann::json::parse(report_to_json(r));
    CHECK(j["params"]["removed_pct"] == 0.0);
    CHECK(j["zip_ratio"] == 1.0);
    CHECK(report_to_text(r).find("removed params 0.00%") != std::string::npos);
  }

  TEST_CASE("report without baseline") {
    ConvNetSpec spec;
    const auto r = make_report(gen_conv_net(spec), nullptr, 8, 8);
    CHECK_FALSE(r.removed_params_pct().has_value());
    CHECK_FALSE(r.zip.has_value());
    const auto j = nlohmann::json::parse(report_to_json(r));
    CHECK_FALSE(j["params"].contains("removed_pct"));
    CHECK(report_to_text(r).find("removed") == std::string::npos);
  }

  TEST_CASE("removed percentages follow the layers") {
    DuplicateSpec spec;
    spec.planted = {0};
    const auto planted = gen_model_with_duplicates(spec);
    const Model merged = merge_model(planted.model, MergeConfig{}).model;
    const auto r = make_report(merged, &planted.model, 1, 1);
    CHECK(*r.params_before == total_params(planted.model));
    CHECK(r.params_after == total_params(merged));
    CHECK(*r.removed_params_pct() ==
          doctest::Approx(removed_pct(static_cast<double>(total_params(planted.model)),
                                      static_cast<double>(total_params(merged)))));
    CHECK(*r.removed_params_pct() > 0.0);
  }
}
