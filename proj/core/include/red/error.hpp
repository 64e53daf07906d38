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

#include <stdexcept>
#include <string>

namespace red {

// Base class for every error raised by the library. The CLI maps the
// concrete type to an exit code and a one-line message.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad magic, unsupported version, unparsable manifest.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Structural invariant broken (shape/offset mismatch, incompatible layers).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Non-finite payload values.
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Forward pass could not run (shape mismatch, output-dimension mismatch).
class EvaluationError : public Error {
 public:
  using Error::Error;
};

// Model topology unsupported by a transform (e.g. BatchNorm with no
// preceding affine layer).
class StructureError : public Error {
 public:
  using Error::Error;
};

// Density estimation produced no usable mode (guards grid bugs).
class EstimationError : public Error {
 public:
  using Error::Error;
};

// A channel matrix whose rows cannot be expressed with r_i basis kernels.
class InseparableError : public Error {
 public:
  using Error::Error;
};

}  // namespace red
