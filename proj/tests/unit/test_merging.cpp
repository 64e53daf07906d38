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
#include "json.hpp"
#include "red/error.hpp"
#include "red/inference.hpp"
#include "red/merging.hpp"
#include "red/metrics.hpp"
#include "red/separation.hpp"
#include "red/synth.hpp"

using namespace red;

namespace {

double max_delta(const Model& a, const Model& b, std::size_t n = 100, std::size_t hw = 6) {
  const auto xs = random_inputs(a, n, 17, hw, hw);
  return logit_delta(a, b, xs).max_abs_delta;
}

Model fig2() {
  // Layer l rows 0 and 1 identical; layer l+1 consumes them.
  Model m;
  m.blocks.push_back(Block::plain(
      make_dense("l", Tensor(Shape{3, 2}, {1, 2, 1, 2, -1, 0.5}), Tensor(Shape{3}, {0.1, 0.1, 0}))));
  m.blocks.push_back(Block::plain(make_relu()));
  m.blocks.push_back(Block::plain(make_dense("l1", Tensor(Shape{2, 3}, {1, 2, 3, 4, 5, 6}))));
  return m;
}

}  // namespace

TEST_SUITE("merging") {
  TEST_CASE("neuron vectors") {
    const Layer d = make_dense("d", Tensor(Shape{2, 2}, {1, 2, 3, 4}), Tensor(Shape{2}, {5, 6}));
    CHECK(*neuron_vector(d, 0) == std::vector<double>{1, 2, 5});
    CHECK(*neuron_vector(d, 1, false) == std::vector<double>{3, 4});
    const Layer c = make_conv2d("c", Tensor(Shape{1, 1, 2, 2}, {1, 2, 3, 4}));
    CHECK(*neuron_vector(c, 1) == std::vector<double>{2, 4});
    CHECK_FALSE(neuron_vector(make_depthwise("dw", Tensor({3, 3, 2, 1})), 0).has_value());
    CHECK_FALSE(neuron_vector(make_relu(), 0).has_value());
  }

  TEST_CASE("residual vectors concatenate both addends") {
    Model m;
    m.blocks.push_back(Block::plain(make_conv2d("p", Tensor(Shape{1, 1, 1, 2}, {1, 0}))));
    m.blocks.push_back(Block::residual({make_conv2d("t", Tensor(Shape{1, 1, 2, 2}, {0, 0, 2, 0}))}));
    m.blocks.push_back(Block::plain(make_dense("head", Tensor::filled({3, 2}, 1.0))));
    MergeGroup g;
    g.producers = {{0, 0}, {1, 0}};
    CHECK(group_neuron_vector(m, g, 0) == std::vector<double>{1, 0, 2});
  }

  TEST_CASE("percentile interpolates") {
    CHECK(percentile({1, 2, 3, 4}, 0.0) == 1.0);
    CHECK(percentile({1, 2, 3, 4}, 1.0) == 4.0);
    CHECK(percentile({4, 1, 3, 2}, 0.5) == doctest::Approx(2.5));
    CHECK(percentile({}, 0.5) == 0.0);
  }

  TEST_CASE("components at alpha zero") {
    const std::vector<std::vector<double>> n{{1, 1}, {1, 1}, {0, 3}};
    const auto p = build_components(n, 0.0);
    CHECK(p.components == std::vector<std::vector<std::size_t>>{{0, 1}, {2}});
    CHECK(p.unique == 2);
    const std::vector<std::vector<double>> distinct{{0}, {1}, {3}};
    CHECK(build_components(distinct, 0.0).is_identity());
  }

  TEST_CASE("components at a threshold") {
    // Distances 1, 10, 9: the 0.5 percentile is 9, so only 0-1 connects.
    const std::vector<std::vector<double>> n{{0}, {1}, {10}};
    const auto p = build_components(n, 0.5);
    CHECK(p.threshold == doctest::Approx(9.0));
    CHECK(p.components == std::vector<std::vector<std::size_t>>{{0, 1}, {2}});
    CHECK(build_components(n, 1.0).components.size() == 1);
  }

  TEST_CASE("fig 2 merge preserves the function") {
    const Model m = fig2();
    const auto groups = find_merge_groups(m);
    REQUIRE(groups.size() == 2);
    CHECK_FALSE(groups[0].skip_reason.has_value());
    CHECK(groups[1].skip_reason.has_value());
    const auto plan = build_components(layer_at(m, {0, 0}), 0.0);
    REQUIRE(plan.components.size() == 2);
    const Model merged = apply_merge(m, groups[0], plan);
    CHECK(layer_at(merged, {0, 0}).n_out == 2);
    CHECK(layer_at(merged, {2, 0}).n_in == 2);
    CHECK(layer_at(merged, {2, 0}).tensor("weight").storage() == std::vector<double>{3, 3, 9, 6});
    CHECK(max_delta(m, merged) <= 1e-9);
    CHECK(apply_merge(m, groups[0], build_components(std::vector<std::vector<double>>{{0}, {1}, {2}}, 0.0)) == m);
  }

  TEST_CASE("near duplicates average with a bounded error") {
    Model m = fig2();
    m.blocks[0].layers[0].tensor("weight")[2] += 1e-3;
    const auto groups = find_merge_groups(m);
    ComponentPlan p;
    p.components = {{0, 1}, {2}};
    const Model merged = apply_merge(m, groups[0], p);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    for (int i = 0; i < 20; ++i) {
      Tensor x(Shape{2}, {n(rng), n(rng)});
      const double norm = std::hypot(x[0], x[1]);
      x[0] /= norm;
      x[1] /= norm;
      CHECK(oracle::max_abs_diff(forward(m, x).storage(), forward(merged, x).storage()) < 1e-2);
    }
  }

  TEST_CASE("bn folding") {
    SUBCASE("identity batch norm") {
      Model m;
      m.blocks.push_back(Block::plain(make_conv2d("c", Tensor::filled({1, 1, 1, 2}, 0.75))));
      m.blocks.push_back(Block::plain(make_batchnorm("bn", Tensor::filled({2}, 1.0), Tensor({2}),
                                                     Tensor({2}),
                                                     Tensor::filled({2}, 1.0 - kBatchNormEpsilon))));
      const Model f = fold_batchnorm(m);
      REQUIRE(f.blocks.size() == 1);
      for (double v : f.blocks[0].layers[0].tensor("weight").values()) {
        CHECK(std::abs(v - 0.75) < 1e-12);
      }
    }
    SUBCASE("worked example") {
      Model m;
      m.blocks.push_back(Block::plain(make_conv2d("c", Tensor::filled({1, 1, 1, 1}, 2.0))));
      m.blocks.push_back(Block::plain(make_batchnorm("bn", Tensor::filled({1}, 3.0),
                                                     Tensor::filled({1}, 1.0), Tensor({1}),
                                                     Tensor::filled({1}, 1.0 - kBatchNormEpsilon))));
      const Tensor x = Tensor::filled({1, 1, 1}, 1.0);
      CHECK(forward(m, x)[0] == doctest::Approx(7.0));
      CHECK(forward(fold_batchnorm(m), x)[0] == doctest::Approx(7.0));
    }
    SUBCASE("random stacks, dense, depthwise and residual") {
      ConvNetSpec spec;
      spec.seed = 9;
      spec.batchnorm = true;
      spec.depthwise_after_stem = true;
      spec.residual_after = {1};
      spec.style = WeightStyle::Gaussian;
      const Model m = gen_conv_net(spec);
      const Model f = fold_batchnorm(m);
      bool bn = false;
      for_each_layer(f, [&](const Layer& l) { bn |= l.kind == LayerKind::BatchNorm; });
      CHECK_FALSE(bn);
      CHECK(max_delta(m, f) <= 1e-6);
    }
    SUBCASE("orphan batch norm") {
      Model m;
      m.blocks.push_back(Block::plain(make_batchnorm("bn", Tensor::filled({1}, 1.0), Tensor({1}),
                                                     Tensor({1}), Tensor::filled({1}, 1.0))));
      CHECK_THROWS_AS(fold_batchnorm(m), StructureError);
      Model r;
      r.blocks.push_back(Block::plain(make_conv2d("c", Tensor::filled({1, 1, 1, 1}, 1.0))));
      r.blocks.push_back(Block::plain(make_relu()));
      r.blocks.push_back(Block::plain(make_batchnorm("bn", Tensor::filled({1}, 1.0), Tensor({1}),
                                                     Tensor({1}), Tensor::filled({1}, 1.0))));
      CHECK_THROWS_AS(fold_batchnorm(r), StructureError);
    }
  }

  TEST_CASE("planted duplicates are recovered exactly") {
    DuplicateSpec spec;
    spec.seed = 4;
    spec.widths = {8, 8, 12, 6};
    spec.planted = {0, 1};
    const auto planted = gen_model_with_duplicates(spec);
    MergeConfig cfg;
    const auto r = merge_model(planted.model, cfg);
    std::size_t k = 0;
    for (const auto& e : r.plan.entries) {
      if (e.skipped) continue;
      REQUIRE(k < planted.truth.size());
      CHECK(e.producers.front() == planted.truth[k].layer);
      CHECK(e.components == planted.truth[k].components);
      ++k;
    }
    CHECK(k == planted.truth.size());
    CHECK(layer_at(r.model, {0, 0}).n_out == 4);
    CHECK(max_delta(planted.model, r.model) <= 1e-9);
    CHECK(validate_model(r.model).empty());
  }

  TEST_CASE("no duplicates means identity at alpha zero") {
    DuplicateSpec spec;
    spec.planted = {};
    const auto planted = gen_model_with_duplicates(spec);
    CHECK(merge_model(planted.model, MergeConfig{}).model == planted.model);
  }

  TEST_CASE("classifier and depthwise consumers are exempt") {
    ConvNetSpec spec;
    spec.depthwise_after_stem = true;
    spec.channels = {4, 4};
    const Model m = gen_conv_net(spec);
    const auto groups = find_merge_groups(m);
    REQUIRE(groups.size() == 3);
    REQUIRE(groups[0].skip_reason.has_value());
    CHECK(groups[0].skip_reason->find("depthwise") != std::string::npos);
    CHECK_FALSE(groups[1].skip_reason.has_value());
    REQUIRE(groups[2].skip_reason.has_value());
    CHECK(*groups[2].skip_reason == "feeds the model output");
    MergeConfig cfg;
    cfg.alpha = 0.9;
    cfg.alpha_strategy = Strategy::Constant;
    const auto r = merge_model(m, cfg);
    CHECK(layer_at(r.model, layer_refs(r.model).back()).n_out == spec.classes);
  }

  TEST_CASE("residual duplicates merge jointly") {
    const auto planted = gen_residual_with_duplicates(12, 6, 2);
    const auto groups = find_merge_groups(planted.model);
    REQUIRE(groups.size() == 3);
    CHECK(groups[0].producers.size() == 2);
    CHECK(groups[0].consumers.size() == 2);
    const auto r = merge_model(planted.model, MergeConfig{});
    CHECK(r.plan.entries[0].components == planted.truth[0].components);
    CHECK(layer_at(r.model, {0, 0}).n_out == 4);
    CHECK(max_delta(planted.model, r.model) <= 1e-9);
  }

  TEST_CASE("duplicates on one addend only stay") {
    auto planted = gen_residual_with_duplicates(12, 6, 2);
    Layer& tail = planted.model.blocks[2].layers[2];
    Tensor& bias = tail.tensor("bias");
    for (std::size_t j = 0; j < bias.numel(); ++j) bias[j] += static_cast<double>(j);
    const auto r = merge_model(planted.model, MergeConfig{});
    CHECK(r.plan.entries[0].outputs_after == r.plan.entries[0].outputs_before);
  }

  TEST_CASE("merging through uneven layers") {
    ConvNetSpec spec;
    spec.seed = 2;
    spec.channels = {6, 6, 6};
    spec.duplicate_fraction = 0.5;
    const Model m = gen_conv_net(spec);
    const Model sep = separate_model(m).model;
    const auto r = merge_model(sep, MergeConfig{});
    CHECK(total_params(r.model) < total_params(sep));
    CHECK(max_delta(m, r.model) <= 1e-6);
  }

  TEST_CASE("parameters shrink as alpha grows") {
    ConvNetSpec spec;
    spec.seed = 8;
    spec.style = WeightStyle::Gaussian;
    spec.channels = {8, 8, 8, 8};
    const Model m = gen_conv_net(spec);
    std::size_t last = total_params(m);
    for (double a : {0.0, 0.1, 0.2, 0.4, 0.6, 0.8}) {
      MergeConfig cfg;
      cfg.alpha = a;
      cfg.alpha_strategy = Strategy::Constant;
      const std::size_t p = total_params(merge_model(m, cfg).model);
      CHECK(p <= last);
      last = p;
    }
  }

  TEST_CASE("plan json") {
    const auto r = merge_model(fig2(), MergeConfig{});
    const auto j = nlohmann::json::parse(merge_plan_to_json(r.plan));
    REQUIRE(j.size() == 2);
    CHECK(j[0]["layer"] == "l");
    CHECK(j[0]["components"].size() == 2);
    CHECK(j[0].contains("threshold"));
    CHECK(j[1]["skipped"] == "feeds the model output");
    CHECK(r.plan.entries[0].gamma() == doctest::Approx(2.0 / 3.0));
  }

  TEST_CASE("alpha out of range") {
    MergeConfig cfg;
    cfg.alpha = 1.0;
    CHECK_THROWS(merge_model(fig2(), cfg));
  }
}
