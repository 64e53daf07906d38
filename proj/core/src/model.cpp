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

#include "red/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

#include "red/error.hpp"

namespace red {

namespace {

constexpr std::pair<LayerKind, std::string_view> kKindNames[] = {
    {LayerKind::Dense, "Dense"},
    {LayerKind::Conv2D, "Conv2D"},
    {LayerKind::DepthwiseConv2D, "DepthwiseConv2D"},
    {LayerKind::UnevenDepthwiseConv2D, "UnevenDepthwiseConv2D"},
    {LayerKind::BatchNorm, "BatchNorm"},
    {LayerKind::ReLU, "ReLU"},
};

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

class Checker {
 public:
  explicit Checker(std::vector<Violation>& out) : out_(out) {}

  void add(Violation::Kind kind, const std::string& where, std::string message) {
    out_.push_back({kind, where, std::move(message)});
  }

  // Returns false when the tensor is unusable for further checks.
  bool tensor(const Layer& layer, const std::string& where, const std::string& name,
              const Shape& expected) {
    auto it = layer.tensors.find(name);
    if (it == layer.tensors.end()) {
      add(Violation::Kind::Structure, where, "missing tensor '" + name + "'");
      return false;
    }
    const Tensor& t = it->second;
    if (!t.consistent()) {
      add(Violation::Kind::Shape, where,
          "tensor '" + name + "' has " + std::to_string(t.numel()) +
              " values for shape " + shape_str(t.shape()));
      return false;
    }
    if (t.shape() != expected) {
      add(Violation::Kind::Shape, where,
          "tensor '" + name + "' has shape " + shape_str(t.shape()) + ", expected " +
              shape_str(expected));
      return false;
    }
    if (!t.all_finite()) {
      add(Violation::Kind::Data, where, "tensor '" + name + "' contains non-finite values");
      return false;
    }
    return true;
  }

  void unexpected_tensors(const Layer& layer, const std::string& where,
                          std::initializer_list<std::string_view> allowed) {
    for (const auto& [name, t] : layer.tensors) {
      if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
        add(Violation::Kind::Structure, where, "unexpected tensor '" + name + "'");
      }
    }
  }

  void layer(const Layer& layer, const std::string& where) {
    if (layer.kind != LayerKind::ReLU && (layer.n_in == 0 || layer.n_out == 0)) {
      add(Violation::Kind::Shape, where, "channel counts must be positive");
      return;
    }
    if (layer.is_conv_like() || layer.kind == LayerKind::UnevenDepthwiseConv2D) {
      if (layer.kernel_h == 0 || layer.kernel_w == 0 || layer.stride == 0) {
        add(Violation::Kind::Shape, where, "kernel extents and stride must be positive");
        return;
      }
    }
    const bool may_have_bias = layer.kind != LayerKind::BatchNorm &&
                               layer.kind != LayerKind::ReLU;
    if (may_have_bias && layer.has_bias()) {
      tensor(layer, where, "bias", {layer.n_out});
    }
    switch (layer.kind) {
      case LayerKind::Dense:
        tensor(layer, where, "weight", {layer.n_out, layer.n_in});
        unexpected_tensors(layer, where, {"weight", "bias"});
        break;
      case LayerKind::Conv2D:
        tensor(layer, where, "weight",
               {layer.kernel_h, layer.kernel_w, layer.n_in, layer.n_out});
        unexpected_tensors(layer, where, {"weight", "bias"});
        break;
      case LayerKind::DepthwiseConv2D:
        if (layer.n_out != layer.n_in) {
          add(Violation::Kind::Shape, where, "depthwise layer must keep the channel count");
        }
        tensor(layer, where, "weight", {layer.kernel_h, layer.kernel_w, layer.n_in, 1});
        unexpected_tensors(layer, where, {"weight", "bias"});
        break;
      case LayerKind::BatchNorm: {
        if (layer.n_out != layer.n_in) {
          add(Violation::Kind::Shape, where, "batch norm must keep the channel count");
        }
        for (const char* name : {"gamma", "beta", "mean"}) {
          tensor(layer, where, name, {layer.n_in});
        }
        if (tensor(layer, where, "var", {layer.n_in})) {
          for (double v : layer.tensor("var").values()) {
            if (!(v > 0.0)) {
              add(Violation::Kind::Data, where, "batch norm variance must be positive");
              break;
            }
          }
        }
        unexpected_tensors(layer, where, {"gamma", "beta", "mean", "var"});
        break;
      }
      case LayerKind::ReLU:
        unexpected_tensors(layer, where, {});
        break;
      case LayerKind::UnevenDepthwiseConv2D:
        uneven(layer, where);
        unexpected_tensors(layer, where, {"bias"});
        break;
    }
    if (layer.kind != LayerKind::UnevenDepthwiseConv2D && !layer.factors.empty()) {
      add(Violation::Kind::Structure, where, "only uneven depthwise layers carry factors");
    }
  }

  void uneven(const Layer& layer, const std::string& where) {
    if (layer.factors.size() != layer.n_in) {
      add(Violation::Kind::Structure, where,
          "expected factors for " + std::to_string(layer.n_in) + " input channels, got " +
              std::to_string(layer.factors.size()));
      return;
    }
    const std::size_t area = layer.kernel_h * layer.kernel_w;
    for (std::size_t i = 0; i < layer.factors.size(); ++i) {
      const ChannelFactors& f = layer.factors[i];
      const std::string at = where + " channel " + std::to_string(i);
      if (f.rank > std::min(area, layer.n_out)) {
        add(Violation::Kind::Shape, at, "rank exceeds min(kh*kw, n_out)");
      }
      if (f.bases.size() != f.rank * area || f.coeffs.size() != f.rank * layer.n_out) {
        add(Violation::Kind::Shape, at, "basis/coefficient sizes do not match the rank");
        continue;
      }
      const bool finite =
          std::all_of(f.bases.begin(), f.bases.end(), [](double v) { return std::isfinite(v); }) &&
          std::all_of(f.coeffs.begin(), f.coeffs.end(), [](double v) { return std::isfinite(v); });
      if (!finite) {
        add(Violation::Kind::Data, at, "non-finite factor values");
        continue;
      }
      for (std::size_t k = 0; k < f.rank; ++k) {
        const double* basis = f.bases.data() + k * area;
        std::size_t last = area;
        for (std::size_t e = area; e-- > 0;) {
          if (basis[e] != 0.0) {
            last = e;
            break;
          }
        }
        if (last == area || basis[last] != 1.0) {
          add(Violation::Kind::Data, at,
              "basis " + std::to_string(k) + " is not normalised (last nonzero != 1)");
        }
      }
    }
  }

 private:
  std::vector<Violation>& out_;
};

// Channel-flow state threaded through the layer sequence.
struct Flow {
  std::optional<std::size_t> channels;
  bool spatial = true;  // unknown until the first layer decides
  bool decided = false;
};

void flow_through(const Layer& layer, const std::string& where, Flow& flow, Checker& check) {
  if (layer.kind == LayerKind::ReLU) return;
  if (layer.n_in == 0 || layer.n_out == 0) return;
  if (flow.channels && *flow.channels != layer.n_in) {
    check.add(Violation::Kind::Incompatible, where,
              "expects " + std::to_string(layer.n_in) + " input channels but receives " +
                  std::to_string(*flow.channels));
  }
  const bool spatial_layer = layer.kind != LayerKind::Dense;
  if (flow.decided && !flow.spatial && spatial_layer) {
    check.add(Violation::Kind::Incompatible, where,
              "spatial layer follows a dense (feature-vector) activation");
  }
  if (!flow.decided || layer.kind == LayerKind::Dense) {
    flow.spatial = spatial_layer;
    flow.decided = true;
  }
  flow.channels = layer.n_out;
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "Unknown";
}

std::optional<LayerKind> layer_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

std::string_view to_string(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::Shape:
      return "shape";
    case Violation::Kind::Data:
      return "data";
    case Violation::Kind::Incompatible:
      return "incompatible";
    case Violation::Kind::Structure:
      return "structure";
  }
  return "unknown";
}

const Tensor& Layer::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) {
    throw StructureError("layer '" + this->name + "' has no tensor '" + name + "'");
  }
  return it->second;
}

Tensor& Layer::tensor(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) {
    throw StructureError("layer '" + this->name + "' has no tensor '" + name + "'");
  }
  return it->second;
}

bool Layer::is_conv_like() const {
  return kind == LayerKind::Conv2D || kind == LayerKind::DepthwiseConv2D ||
         kind == LayerKind::UnevenDepthwiseConv2D;
}

Layer make_dense(std::string name, Tensor weight, std::optional<Tensor> bias) {
  Layer layer;
  layer.kind = LayerKind::Dense;
  layer.name = std::move(name);
  if (weight.rank() == 2) {
    layer.n_out = weight.dim(0);
    layer.n_in = weight.dim(1);
  }
  layer.tensors.emplace("weight", std::move(weight));
  if (bias) layer.tensors.emplace("bias", std::move(*bias));
  return layer;
}

Layer make_conv2d(std::string name, Tensor weight, std::optional<Tensor> bias,
                  std::size_t stride, std::size_t padding) {
  Layer layer;
  layer.kind = LayerKind::Conv2D;
  layer.name = std::move(name);
  if (weight.rank() == 4) {
    layer.kernel_h = weight.dim(0);
    layer.kernel_w = weight.dim(1);
    layer.n_in = weight.dim(2);
    layer.n_out = weight.dim(3);
  }
  layer.stride = stride;
  layer.padding = padding;
  layer.tensors.emplace("weight", std::move(weight));
  if (bias) layer.tensors.emplace("bias", std::move(*bias));
  return layer;
}

Layer make_depthwise(std::string name, Tensor weight, std::optional<Tensor> bias,
                     std::size_t stride, std::size_t padding) {
  Layer layer = make_conv2d(std::move(name), std::move(weight), std::move(bias), stride, padding);
  layer.kind = LayerKind::DepthwiseConv2D;
  layer.n_out = layer.n_in;
  return layer;
}

Layer make_batchnorm(std::string name, Tensor gamma, Tensor beta, Tensor mean, Tensor var) {
  Layer layer;
  layer.kind = LayerKind::BatchNorm;
  layer.name = std::move(name);
  layer.n_in = layer.n_out = gamma.numel();
  layer.tensors.emplace("gamma", std::move(gamma));
  layer.tensors.emplace("beta", std::move(beta));
  layer.tensors.emplace("mean", std::move(mean));
  layer.tensors.emplace("var", std::move(var));
  return layer;
}

Layer make_relu(std::string name) {
  Layer layer;
  layer.kind = LayerKind::ReLU;
  layer.name = std::move(name);
  return layer;
}

Block Block::plain(Layer layer) {
  Block b;
  b.kind = BlockKind::Plain;
  b.layers.push_back(std::move(layer));
  return b;
}

Block Block::residual(std::vector<Layer> main_path) {
  Block b;
  b.kind = BlockKind::Residual;
  b.layers = std::move(main_path);
  return b;
}

const Layer& layer_at(const Model& model, LayerRef ref) {
  return model.blocks.at(ref.block).layers.at(ref.index);
}

Layer& layer_at(Model& model, LayerRef ref) {
  return model.blocks.at(ref.block).layers.at(ref.index);
}

std::vector<LayerRef> layer_refs(const Model& model) {
  std::vector<LayerRef> refs;
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    for (std::size_t i = 0; i < model.blocks[b].layers.size(); ++i) {
      refs.push_back({b, i});
    }
  }
  return refs;
}

void for_each_layer(const Model& model, const std::function<void(const Layer&)>& fn) {
  for (const Block& block : model.blocks) {
    for (const Layer& layer : block.layers) fn(layer);
  }
}

void for_each_layer(Model& model, const std::function<void(Layer&)>& fn) {
  for (Block& block : model.blocks) {
    for (Layer& layer : block.layers) fn(layer);
  }
}

std::optional<std::size_t> input_channels(const Model& model) {
  for (const Block& block : model.blocks) {
    for (const Layer& layer : block.layers) {
      if (layer.is_parametric()) return layer.n_in;
    }
  }
  return std::nullopt;
}

bool takes_spatial_input(const Model& model) {
  for (const Block& block : model.blocks) {
    for (const Layer& layer : block.layers) {
      if (layer.is_parametric()) return layer.kind != LayerKind::Dense;
    }
  }
  return false;
}

std::vector<Violation> validate_model(const Model& model) {
  std::vector<Violation> out;
  Checker check(out);
  Flow flow;
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const Block& block = model.blocks[b];
    const std::string block_where = "block " + std::to_string(b);
    if (block.kind == BlockKind::Plain && block.layers.size() != 1) {
      check.add(Violation::Kind::Structure, block_where, "plain block must hold exactly one layer");
    }
    if (block.kind == BlockKind::Residual && block.layers.empty()) {
      check.add(Violation::Kind::Structure, block_where, "residual block has an empty main path");
    }
    const Flow entry = flow;
    for (std::size_t i = 0; i < block.layers.size(); ++i) {
      const Layer& layer = block.layers[i];
      const std::string where = block_where + " layer " + std::to_string(i) + " (" +
                                (layer.name.empty() ? std::string(to_string(layer.kind))
                                                    : layer.name) +
                                ")";
      check.layer(layer, where);
      flow_through(layer, where, flow, check);
    }
    if (block.kind == BlockKind::Residual && !block.layers.empty()) {
      std::optional<std::size_t> in = entry.channels;
      if (!in) {
        for (const Layer& layer : block.layers) {
          if (layer.is_parametric() && layer.n_in) {
            in = layer.n_in;
            break;
          }
        }
      }
      if (in && flow.channels && *in != *flow.channels) {
        check.add(Violation::Kind::Incompatible, block_where,
                  "residual main path maps " + std::to_string(*in) + " channels to " +
                      std::to_string(*flow.channels));
      }
      if (entry.decided && flow.spatial != entry.spatial) {
        check.add(Violation::Kind::Incompatible, block_where,
                  "residual main path changes the activation layout");
      }
    }
  }
  return out;
}

void require_valid(const Model& model) {
  const auto violations = validate_model(model);
  if (violations.empty()) return;
  std::ostringstream os;
  os << violations.size() << " violation(s): ";
  bool data_only = true;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i].where << ": " << violations[i].message;
    data_only = data_only && violations[i].kind == Violation::Kind::Data;
  }
  if (data_only) throw DataError(os.str());
  throw ValidationError(os.str());
}

}  // namespace red
