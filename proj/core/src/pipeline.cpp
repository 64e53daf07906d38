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

#include "red/pipeline.hpp"

#include <algorithm>

#include "red/error.hpp"
#include "red/metrics.hpp"

namespace red {

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Hash:
      return "hash";
    case Stage::Merge:
      return "merge";
    case Stage::Separate:
      return "separate";
  }
  return "hash";
}

std::optional<Stage> stage_from_string(std::string_view name) {
  for (Stage s : {Stage::Hash, Stage::Merge, Stage::Separate}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

std::string_view to_string(StageOrder o) {
  return o == StageOrder::MergeFirst ? "merge-first" : "separate-first";
}

std::optional<StageOrder> stage_order_from_string(std::string_view name) {
  if (name == "merge-first") return StageOrder::MergeFirst;
  if (name == "separate-first") return StageOrder::SeparateFirst;
  return std::nullopt;
}

std::vector<Stage> parse_stages(std::string_view list) {
  if (list == "all") return {Stage::Hash, Stage::Merge, Stage::Separate};
  std::vector<Stage> out;
  while (!list.empty()) {
    const std::size_t comma = list.find(',');
    const std::string_view item = list.substr(0, comma);
    const auto s = stage_from_string(item);
    if (!s) throw ValidationError("unknown stage '" + std::string(item) + "'");
    if (std::find(out.begin(), out.end(), *s) == out.end()) out.push_back(*s);
    if (comma == std::string_view::npos) break;
    list.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ValidationError("no stages selected");
  return out;
}

PipelineResult run_pipeline(const Model& model, const PipelineConfig& cfg) {
  require_valid(model);
  PipelineResult r;
  r.model = model;
  auto snap = [&](std::string stage) {
    require_valid(r.model);
    r.snapshots.push_back({std::move(stage), total_params(r.model), r.model});
  };
  snap("input");

  auto wants = [&](Stage s) {
    return std::find(cfg.stages.begin(), cfg.stages.end(), s) != cfg.stages.end();
  };
  const bool merging = wants(Stage::Merge);
  if (merging && cfg.merge.fold_bn) {
    bool has_bn = false;
    for_each_layer(r.model, [&](const Layer& l) { has_bn |= l.kind == LayerKind::BatchNorm; });
    if (has_bn) {
      r.model = fold_batchnorm(r.model);
      snap("fold");
    }
  }
  if (wants(Stage::Hash)) {
    r.model = hash_model(r.model, cfg.hash, &r.hash_report);
    snap("hash");
  }
  auto merge = [&] {
    MergeResult m = merge_model(r.model, cfg.merge);
    r.model = std::move(m.model);
    r.merge_plan = std::move(m.plan);
    snap("merge");
  };
  auto separate = [&] {
    SeparationResult s = separate_model(r.model, cfg.rel_tol);
    r.model = std::move(s.model);
    r.separation_plans = std::move(s.plans);
    snap("separate");
  };
  if (cfg.order == StageOrder::MergeFirst) {
    if (merging) merge();
    if (wants(Stage::Separate)) separate();
  } else {
    if (wants(Stage::Separate)) separate();
    if (merging) merge();
  }
  return r;
}

}  // namespace red
