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

#include "red/merging.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "json.hpp"
#include "red/error.hpp"
#include "red/parallel.hpp"
#include "red/separation.hpp"
#include "red/union_find.hpp"

namespace red {

std::vector<double> allocate_alphas(double alpha, std::size_t layers, Strategy strategy) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw EstimationError("alpha must lie in [0, 1), got " + std::to_string(alpha));
  }
  return allocate_layer_values(alpha, layers, strategy);
}

namespace {

bool affine(const Layer& layer) {
  switch (layer.kind) {
    case LayerKind::Dense:
    case LayerKind::Conv2D:
    case LayerKind::DepthwiseConv2D:
    case LayerKind::UnevenDepthwiseConv2D:
      return true;
    default:
      return false;
  }
}

bool mergeable(const Layer& layer) {
  return layer.kind == LayerKind::Dense || layer.kind == LayerKind::Conv2D ||
         layer.kind == LayerKind::UnevenDepthwiseConv2D;
}

void fold_into(Layer& target, const Layer& bn) {
  const std::size_t n = bn.n_out;
  if (target.n_out != n) {
    throw StructureError("batch norm " + bn.name + " does not match " + target.name);
  }
  const auto& gamma = bn.tensor("gamma");
  const auto& beta = bn.tensor("beta");
  const auto& mean = bn.tensor("mean");
  const auto& var = bn.tensor("var");
  std::vector<double> scale(n);
  for (std::size_t c = 0; c < n; ++c) scale[c] = gamma[c] / std::sqrt(var[c] + kBatchNormEpsilon);

  switch (target.kind) {
    case LayerKind::Dense: {
      Tensor& w = target.tensor("weight");
      for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t i = 0; i < target.n_in; ++i) w[c * target.n_in + i] *= scale[c];
      }
      break;
    }
    case LayerKind::Conv2D:
    case LayerKind::DepthwiseConv2D: {
      Tensor& w = target.tensor("weight");
      const std::size_t period =
          target.kind == LayerKind::DepthwiseConv2D ? w.dim(2) : w.dim(3);
      for (std::size_t e = 0; e < w.numel(); ++e) {
        const std::size_t c = e % period;
        w[e] *= scale[c];
      }
      break;
    }
    case LayerKind::UnevenDepthwiseConv2D:
      for (ChannelFactors& f : target.factors) {
        for (std::size_t k = 0; k < f.rank; ++k) {
          for (std::size_t c = 0; c < n; ++c) f.coeffs[k * n + c] *= scale[c];
        }
      }
      break;
    default:
      throw StructureError("batch norm " + bn.name + " has no preceding affine layer");
  }
  Tensor bias(Shape{n});
  for (std::size_t c = 0; c < n; ++c) {
    const double b = target.has_bias() ? target.tensor("bias")[c] : 0.0;
    bias[c] = scale[c] * (b - mean[c]) + beta[c];
  }
  target.tensors.insert_or_assign("bias", std::move(bias));
}

}  // namespace

Model fold_batchnorm(const Model& model) {
  Model out = model;
  std::vector<Block> blocks;
  for (Block& block : out.blocks) {
    if (block.kind == BlockKind::Plain) {
      const Layer& layer = block.layers.front();
      if (layer.kind == LayerKind::BatchNorm) {
        if (blocks.empty() || blocks.back().kind != BlockKind::Plain ||
            !affine(blocks.back().layers.front())) {
          throw StructureError("batch norm " + layer.name + " has no preceding affine layer");
        }
        fold_into(blocks.back().layers.front(), layer);
        continue;
      }
      blocks.push_back(std::move(block));
      continue;
    }
    std::vector<Layer> path;
    for (Layer& layer : block.layers) {
      if (layer.kind == LayerKind::BatchNorm) {
        if (path.empty() || !affine(path.back())) {
          throw StructureError("batch norm " + layer.name + " has no preceding affine layer");
        }
        fold_into(path.back(), layer);
        continue;
      }
      path.push_back(std::move(layer));
    }
    block.layers = std::move(path);
    blocks.push_back(std::move(block));
  }
  out.blocks = std::move(blocks);
  return out;
}

std::optional<std::vector<double>> neuron_vector(const Layer& layer, std::size_t j,
                                                 bool with_bias) {
  if (!mergeable(layer)) return std::nullopt;
  if (j >= layer.n_out) throw StructureError("neuron index out of range in " + layer.name);
  if (layer.kind == LayerKind::UnevenDepthwiseConv2D) {
    return neuron_vector(expand_to_conv(layer), j, with_bias);
  }
  std::vector<double> v;
  const Tensor& w = layer.tensor("weight");
  if (layer.kind == LayerKind::Dense) {
    const auto row = w.values().subspan(j * layer.n_in, layer.n_in);
    v.assign(row.begin(), row.end());
  } else {
    v.reserve(w.numel() / layer.n_out + 1);
    for (std::size_t e = j; e < w.numel(); e += layer.n_out) v.push_back(w[e]);
  }
  if (with_bias && layer.has_bias()) v.push_back(layer.tensor("bias")[j]);
  return v;
}

namespace {

// First parametric layer at or after `from` in a residual main path, or the
// path length when there is none.
std::size_t next_parametric(const std::vector<Layer>& path, std::size_t from) {
  while (from < path.size() && !path[from].is_parametric()) ++from;
  return from;
}

std::optional<std::string> consumer_problem(const Layer& layer) {
  if (layer.kind == LayerKind::BatchNorm) return "feeds batch norm " + layer.name;
  if (layer.kind == LayerKind::DepthwiseConv2D) return "feeds depthwise layer " + layer.name;
  return std::nullopt;
}

}  // namespace

std::vector<MergeGroup> find_merge_groups(const Model& model) {
  std::vector<MergeGroup> groups;
  const auto& blocks = model.blocks;

  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const Block& block = blocks[b];
    if (block.kind == BlockKind::Residual) {
      const auto& path = block.layers;
      std::size_t tail = path.size();
      for (std::size_t i = path.size(); i-- > 0;) {
        if (path[i].is_parametric()) {
          tail = i;
          break;
        }
      }
      for (std::size_t i = 0; i < tail; ++i) {
        if (!mergeable(path[i])) continue;
        MergeGroup g;
        g.producers.push_back({b, i});
        const std::size_t c = next_parametric(path, i + 1);
        g.consumers.push_back({b, c});
        g.skip_reason = consumer_problem(path[c]);
        groups.push_back(std::move(g));
      }
      continue;
    }

    const Layer& layer = block.layers.front();
    if (!mergeable(layer)) continue;
    MergeGroup g;
    g.producers.push_back({b, 0});
    std::size_t k = b + 1;
    for (; k < blocks.size() && !g.skip_reason; ++k) {
      const Block& next = blocks[k];
      if (next.kind == BlockKind::Plain) {
        const Layer& l = next.layers.front();
        if (!l.is_parametric()) continue;
        g.consumers.push_back({k, 0});
        g.skip_reason = consumer_problem(l);
        break;
      }
      const auto& path = next.layers;
      const std::size_t first = next_parametric(path, 0);
      if (first == path.size()) continue;
      g.consumers.push_back({k, first});
      g.skip_reason = consumer_problem(path[first]);
      if (g.skip_reason) break;
      std::size_t tail = first;
      for (std::size_t i = path.size(); i-- > first;) {
        if (path[i].is_parametric()) {
          tail = i;
          break;
        }
      }
      if (!mergeable(path[tail])) {
        g.skip_reason = "residual tail " + path[tail].name + " is not mergeable";
        break;
      }
      g.producers.push_back({k, tail});
    }
    if (k >= blocks.size() && !g.skip_reason) g.skip_reason = "feeds the model output";
    groups.push_back(std::move(g));
  }

  std::sort(groups.begin(), groups.end(), [](const MergeGroup& a, const MergeGroup& b) {
    return a.producers.front() < b.producers.front();
  });
  return groups;
}

std::vector<double> group_neuron_vector(const Model& model, const MergeGroup& group,
                                        std::size_t j, bool with_bias) {
  std::vector<double> v;
  for (const LayerRef& ref : group.producers) {
    const Layer& layer = layer_at(model, ref);
    auto part = neuron_vector(layer, j, with_bias);
    if (!part) throw StructureError("layer " + layer.name + " has no mergeable neurons");
    v.insert(v.end(), part->begin(), part->end());
  }
  return v;
}

std::size_t ComponentPlan::outputs() const {
  std::size_t n = 0;
  for (const auto& c : components) n += c.size();
  return n;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

ComponentPlan build_components(std::span<const std::vector<double>> neurons, double alpha_l) {
  const std::size_t n = neurons.size();
  std::vector<double> dist(n * n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t e = 0; e < neurons[i].size(); ++e) {
        const double d = neurons[i][e] - neurons[j][e];
        s += d * d;
      }
      dist[i * n + j] = std::sqrt(s);
    }
  });

  std::vector<double> upper;
  upper.reserve(n * (n - (n > 0 ? 1 : 0)) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) upper.push_back(dist[i * n + j]);
  }

  ComponentPlan plan;
  plan.threshold = percentile(upper, alpha_l);
  UnionFind exact(n);
  UnionFind uf(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = dist[i * n + j];
      if (d == 0.0) exact.unite(i, j);
      if (d < plan.threshold || d == 0.0) uf.unite(i, j);
    }
  }
  plan.components = uf.components();
  plan.unique = exact.components().size();
  return plan;
}

ComponentPlan build_components(const Layer& layer, double alpha_l, bool with_bias) {
  if (!mergeable(layer)) {
    throw StructureError("layer " + layer.name + " (" + std::string(to_string(layer.kind)) +
                         ") cannot be merged");
  }
  std::vector<std::vector<double>> neurons;
  neurons.reserve(layer.n_out);
  for (std::size_t j = 0; j < layer.n_out; ++j) neurons.push_back(*neuron_vector(layer, j, with_bias));
  return build_components(neurons, alpha_l);
}

namespace {

void merge_outputs(Layer& layer, const ComponentPlan& plan) {
  const std::size_t n = layer.n_out;
  const std::size_t m = plan.components.size();
  if (plan.outputs() != n) {
    throw StructureError("merge plan covers " + std::to_string(plan.outputs()) + " outputs but " +
                         layer.name + " has " + std::to_string(n));
  }
  Tensor& w = layer.tensor("weight");
  if (layer.kind == LayerKind::Dense) {
    Tensor nw(Shape{m, layer.n_in});
    for (std::size_t c = 0; c < m; ++c) {
      const auto& members = plan.components[c];
      for (std::size_t i = 0; i < layer.n_in; ++i) {
        double s = 0.0;
        for (std::size_t j : members) s += w[j * layer.n_in + i];
        nw[c * layer.n_in + i] = s / static_cast<double>(members.size());
      }
    }
    w = std::move(nw);
  } else {
    Shape shape = w.shape();
    shape[3] = m;
    Tensor nw(shape);
    const std::size_t cells = w.numel() / n;
    for (std::size_t e = 0; e < cells; ++e) {
      for (std::size_t c = 0; c < m; ++c) {
        const auto& members = plan.components[c];
        double s = 0.0;
        for (std::size_t j : members) s += w[e * n + j];
        nw[e * m + c] = s / static_cast<double>(members.size());
      }
    }
    w = std::move(nw);
  }
  if (layer.has_bias()) {
    const Tensor& b = layer.tensor("bias");
    Tensor nb(Shape{m});
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (std::size_t j : plan.components[c]) s += b[j];
      nb[c] = s / static_cast<double>(plan.components[c].size());
    }
    layer.tensors.insert_or_assign("bias", std::move(nb));
  }
  layer.n_out = m;
}

void sum_inputs(Layer& layer, const ComponentPlan& plan) {
  const std::size_t n = layer.n_in;
  const std::size_t m = plan.components.size();
  if (plan.outputs() != n) {
    throw StructureError("merge plan covers " + std::to_string(plan.outputs()) +
                         " channels but " + layer.name + " takes " + std::to_string(n));
  }
  Tensor& w = layer.tensor("weight");
  if (layer.kind == LayerKind::Dense) {
    Tensor nw(Shape{layer.n_out, m});
    for (std::size_t o = 0; o < layer.n_out; ++o) {
      for (std::size_t c = 0; c < m; ++c) {
        double s = 0.0;
        for (std::size_t i : plan.components[c]) s += w[o * n + i];
        nw[o * m + c] = s;
      }
    }
    w = std::move(nw);
  } else if (layer.kind == LayerKind::Conv2D) {
    Shape shape = w.shape();
    shape[2] = m;
    Tensor nw(shape);
    const std::size_t area = shape[0] * shape[1];
    const std::size_t outs = shape[3];
    for (std::size_t e = 0; e < area; ++e) {
      for (std::size_t c = 0; c < m; ++c) {
        for (std::size_t o = 0; o < outs; ++o) {
          double s = 0.0;
          for (std::size_t i : plan.components[c]) s += w[(e * n + i) * outs + o];
          nw[(e * m + c) * outs + o] = s;
        }
      }
    }
    w = std::move(nw);
  } else {
    throw StructureError("layer " + layer.name + " cannot absorb merged inputs");
  }
  layer.n_in = m;
}

}  // namespace

Model apply_merge(const Model& model, const MergeGroup& group, const ComponentPlan& plan,
                  double rel_tol) {
  if (group.skip_reason) {
    throw StructureError("merge group is not mergeable: " + *group.skip_reason);
  }
  Model out = model;
  if (plan.is_identity()) return out;

  std::set<LayerRef> touched(group.producers.begin(), group.producers.end());
  touched.insert(group.consumers.begin(), group.consumers.end());
  std::set<LayerRef> expanded;
  for (const LayerRef& ref : touched) {
    Layer& layer = layer_at(out, ref);
    if (layer.kind == LayerKind::UnevenDepthwiseConv2D) {
      layer = expand_to_conv(layer);
      expanded.insert(ref);
    }
  }
  for (const LayerRef& ref : group.producers) merge_outputs(layer_at(out, ref), plan);
  for (const LayerRef& ref : group.consumers) sum_inputs(layer_at(out, ref), plan);
  for (const LayerRef& ref : expanded) {
    Layer& layer = layer_at(out, ref);
    layer = separate_layer(layer, rel_tol).first;
  }
  require_valid(out);
  return out;
}

double MergeEntry::gamma() const {
  return outputs_before == 0 ? 1.0
                             : static_cast<double>(unique) / static_cast<double>(outputs_before);
}

double MergeEntry::realized_alpha() const {
  if (unique == 0) return 0.0;
  return static_cast<double>(unique - std::min(unique, outputs_after)) /
         static_cast<double>(unique);
}

MergeResult merge_model(const Model& model, const MergeConfig& cfg) {
  MergeResult result;
  result.model = cfg.fold_bn ? fold_batchnorm(model) : model;
  const std::vector<MergeGroup> groups = find_merge_groups(result.model);
  const auto active = static_cast<std::size_t>(std::count_if(
      groups.begin(), groups.end(), [](const MergeGroup& g) { return !g.skip_reason; }));
  const std::vector<double> alphas = allocate_alphas(cfg.alpha, active, cfg.alpha_strategy);

  std::size_t slot = 0;
  for (const MergeGroup& group : groups) {
    MergeEntry entry;
    for (const LayerRef& r : group.producers) entry.producers.push_back(layer_at(result.model, r).name);
    for (const LayerRef& r : group.consumers) entry.consumers.push_back(layer_at(result.model, r).name);
    entry.outputs_before = layer_at(result.model, group.producers.front()).n_out;
    if (group.skip_reason) {
      entry.skipped = group.skip_reason;
      entry.outputs_after = entry.outputs_before;
      result.plan.entries.push_back(std::move(entry));
      continue;
    }
    entry.alpha = alphas[slot++];
    std::vector<std::vector<double>> neurons;
    neurons.reserve(entry.outputs_before);
    for (std::size_t j = 0; j < entry.outputs_before; ++j) {
      neurons.push_back(group_neuron_vector(result.model, group, j, cfg.distance_bias));
    }
    const ComponentPlan plan = build_components(neurons, entry.alpha);
    result.model = apply_merge(result.model, group, plan, cfg.rel_tol);
    entry.outputs_after = plan.components.size();
    entry.unique = plan.unique;
    entry.threshold = plan.threshold;
    entry.components = plan.components;
    result.plan.entries.push_back(std::move(entry));
  }
  return result;
}

std::string merge_plan_to_json(const MergePlan& plan) {
  nlohmann::json out = nlohmann::json::array();
  for (const MergeEntry& e : plan.entries) {
    nlohmann::json j = {{"layer", e.producers.front()},
                        {"producers", e.producers},
                        {"consumers", e.consumers},
                        {"outputs_before", e.outputs_before},
                        {"outputs_after", e.outputs_after},
                        {"unique", e.unique},
                        {"alpha", e.alpha},
                        {"threshold", e.threshold},
                        {"components", e.components}};
    if (e.skipped) j["skipped"] = *e.skipped;
    out.push_back(std::move(j));
  }
  return out.dump(2);
}

}  // namespace red
