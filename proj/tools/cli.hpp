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

#include <iosfwd>
#include <string>
#include <vector>

namespace red::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kMismatch = 1;  // verify: outputs differ beyond tolerance
inline constexpr int kError = 2;     // any library, I/O or usage error

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace red::cli
