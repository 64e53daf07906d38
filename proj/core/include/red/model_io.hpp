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

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "red/model.hpp"

namespace red {

// REDM v1 layout (all integers little-endian):
//   bytes 0-3    magic "REDM"
//   bytes 4-7    u32 version (= 1)
//   bytes 8-15   u64 manifest byte length
//   manifest     UTF-8 JSON: name, metadata, blocks -> layers with kind,
//                attrs and tensor descriptors {name, dtype "f32", shape,
//                offset, nbytes}
//   payload      tensors as IEEE-754 f32, each starting on an 8-byte
//                boundary; offsets are relative to the payload start and
//                the payload ends at the padded end of the last tensor
inline constexpr std::uint32_t kRedmVersion = 1;

std::vector<std::uint8_t> serialize_model(const Model& model);
Model deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

// Rounds every payload value to f32 precision, i.e. what a save/load cycle
// would produce.
Model round_to_storage_precision(Model model);

}  // namespace red
