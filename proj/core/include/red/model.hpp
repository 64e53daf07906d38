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
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "red/tensor.hpp"

namespace red {

enum class LayerKind {
  Dense,
  Conv2D,
  DepthwiseConv2D,
  UnevenDepthwiseConv2D,
  BatchNorm,
  ReLU,
};

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> layer_kind_from_string(std::string_view name);

// Factorisation of one input channel of an uneven depthwise convolution:
// `rank` basis kernels of shape [kernel_h, kernel_w] (row-major, each scaled
// so its last nonzero element is 1) and a [rank, n_out] pointwise block.
struct ChannelFactors {
  std::size_t rank = 0;
  std::vector<double> bases;
  std::vector<double> coeffs;

  friend bool operator==(const ChannelFactors&, const ChannelFactors&) = default;
};

inline constexpr double kBatchNormEpsilon = 1e-5;

// One layer of the network.
//
// Weight layouts:
//   Dense            weight [n_out, n_in]
//   Conv2D           weight [kh, kw, n_in, n_out]
//   DepthwiseConv2D  weight [kh, kw, n_in, 1]   (n_out == n_in)
//   BatchNorm        gamma/beta/mean/var [n]   (n_in == n_out == n)
// An optional "bias" tensor has length n_out. ReLU carries no tensors and
// leaves n_in/n_out at zero.
struct Layer {
  LayerKind kind = LayerKind::ReLU;
  std::string name;
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::map<std::string, Tensor> tensors;
  std::vector<ChannelFactors> factors;  // UnevenDepthwiseConv2D only

  bool has(const std::string& tensor) const { return tensors.count(tensor) != 0; }
  bool has_bias() const { return has("bias"); }
  const Tensor& tensor(const std::string& name) const;
  Tensor& tensor(const std::string& name);

  bool is_conv_like() const;  // consumes a [C, H, W] activation spatially
  bool is_parametric() const { return kind != LayerKind::ReLU; }

  friend bool operator==(const Layer&, const Layer&) = default;
};

Layer make_dense(std::string name, Tensor weight, std::optional<Tensor> bias = {});
Layer make_conv2d(std::string name, Tensor weight, std::optional<Tensor> bias = {},
                  std::size_t stride = 1, std::size_t padding = 0);
Layer make_depthwise(std::string name, Tensor weight, std::optional<Tensor> bias = {},
                     std::size_t stride = 1, std::size_t padding = 0);
Layer make_batchnorm(std::string name, Tensor gamma, Tensor beta, Tensor mean, Tensor var);
Layer make_relu(std::string name = "relu");

enum class BlockKind { Plain, Residual };

// Plain blocks hold exactly one layer. Residual blocks hold the main path and
// compute main(x) + x through an identity shortcut.
struct Block {
  BlockKind kind = BlockKind::Plain;
  std::vector<Layer> layers;

  static Block plain(Layer layer);
  static Block residual(std::vector<Layer> main_path);

  friend bool operator==(const Block&, const Block&) = default;
};

struct Model {
  std::string name;
  std::map<std::string, std::string> metadata;
  std::vector<Block> blocks;

  friend bool operator==(const Model&, const Model&) = default;
};

// Position of a layer inside a model.
struct LayerRef {
  std::size_t block = 0;
  std::size_t index = 0;

  friend bool operator==(const LayerRef&, const LayerRef&) = default;
  friend auto operator<=>(const LayerRef&, const LayerRef&) = default;
};

const Layer& layer_at(const Model& model, LayerRef ref);
Layer& layer_at(Model& model, LayerRef ref);

// All layers in execution order.
std::vector<LayerRef> layer_refs(const Model& model);

void for_each_layer(const Model& model, const std::function<void(const Layer&)>& fn);
void for_each_layer(Model& model, const std::function<void(Layer&)>& fn);

// Input channel count expected by the first parametric layer, if any.
std::optional<std::size_t> input_channels(const Model& model);
// True when the first parametric layer is convolution-like.
bool takes_spatial_input(const Model& model);

struct Violation {
  enum class Kind { Shape, Data, Incompatible, Structure };
  Kind kind;
  std::string where;
  std::string message;
};

std::string_view to_string(Violation::Kind kind);

// Checks every type invariant and inter-layer compatibility. Never throws;
// an empty result means the model is valid.
std::vector<Violation> validate_model(const Model& model);

// Throws ValidationError (or DataError for non-finite payloads) summarising
// the violations, if any.
void require_valid(const Model& model);

}  // namespace red
