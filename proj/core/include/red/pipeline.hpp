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
#include <string>
#include <string_view>
#include <vector>

#include "red/hashing.hpp"
#include "red/merging.hpp"
#include "red/model.hpp"
#include "red/separation.hpp"

namespace red {

enum class Stage { Hash, Merge, Separate };
enum class StageOrder { MergeFirst, SeparateFirst };

std::string_view to_string(Stage s);
std::optional<Stage> stage_from_string(std::string_view name);
std::string_view to_string(StageOrder o);
std::optional<StageOrder> stage_order_from_string(std::string_view name);

// Parses "hash,merge,separate" (any subset, any order, "all" for every stage).
std::vector<Stage> parse_stages(std::string_view list);

struct PipelineConfig {
  HashConfig hash;
  MergeConfig merge;
  double rel_tol = kDefaultRelTol;
  std::vector<Stage> stages{Stage::Hash, Stage::Merge, Stage::Separate};
  StageOrder order = StageOrder::MergeFirst;
  std::uint64_t seed = 0;
};

struct StageSnapshot {
  std::string stage;  // "input", "fold", "hash", "merge", "separate"
  std::size_t params = 0;
  Model model;
};

struct PipelineResult {
  Model model;
  std::vector<StageSnapshot> snapshots;
  HashReport hash_report;
  MergePlan merge_plan;
  std::vector<SeparationPlan> separation_plans;
};

// Runs the selected stages as hash -> merge -> separate (merge and separate
// swapped under SeparateFirst). With merge.fold_bn, batch norms are folded
// before hashing. The model is validated after every stage.
PipelineResult run_pipeline(const Model& model, const PipelineConfig& cfg);

}  // namespace red
