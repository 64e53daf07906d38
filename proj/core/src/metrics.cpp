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

#include "red/metrics.hpp"

#include <zlib.h>

#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "red/error.hpp"
#include "red/model_io.hpp"

namespace red {

namespace {

std::size_t layer_params(const Layer& layer) {
  std::size_t n = 0;
  switch (layer.kind) {
    case LayerKind::Dense:
    case LayerKind::Conv2D:
    case LayerKind::DepthwiseConv2D:
      n = layer.tensor("weight").numel();
      break;
    case LayerKind::UnevenDepthwiseConv2D:
      for (const ChannelFactors& f : layer.factors) {
        n += f.rank * (layer.kernel_h * layer.kernel_w + layer.n_out);
      }
      break;
    case LayerKind::BatchNorm:
      n = 4 * layer.n_out;
      break;
    case LayerKind::ReLU:
      break;
  }
  if (layer.has_bias()) n += layer.tensor("bias").numel();
  return n;
}

struct ActShape {
  bool spatial = false;
  std::size_t c = 0;
  std::size_t h = 1;
  std::size_t w = 1;

  std::uint64_t elements() const { return static_cast<std::uint64_t>(c) * h * w; }
};

ActShape initial_shape(const Model& model, std::size_t height, std::size_t width) {
  const Shape s = input_shape(model, height, width);
  if (s.size() == 3) return {true, s[0], s[1], s[2]};
  return {false, s.empty() ? 0 : s[0], 1, 1};
}

LayerFlops layer_flops(const Layer& layer, ActShape& a) {
  LayerFlops f{layer.name, layer.kind, 0, 0};
  auto conv_out = [&](ActShape& s) {
    const std::size_t pad = 2 * layer.padding;
    if (s.h + pad < layer.kernel_h || s.w + pad < layer.kernel_w) {
      throw EvaluationError("layer " + layer.name + ": resolution too small for the kernel");
    }
    s.h = (s.h + pad - layer.kernel_h) / layer.stride + 1;
    s.w = (s.w + pad - layer.kernel_w) / layer.stride + 1;
  };
  const std::uint64_t area = layer.kernel_h * layer.kernel_w;
  switch (layer.kind) {
    case LayerKind::Dense:
      if (a.spatial) f.elementwise += a.elements();
      f.flops = 2ull * layer.n_in * layer.n_out;
      a = {false, layer.n_out, 1, 1};
      break;
    case LayerKind::Conv2D:
      conv_out(a);
      f.flops = 2ull * area * layer.n_in * layer.n_out * a.h * a.w;
      a.c = layer.n_out;
      break;
    case LayerKind::DepthwiseConv2D:
      conv_out(a);
      f.flops = 2ull * area * layer.n_in * a.h * a.w;
      a.c = layer.n_out;
      break;
    case LayerKind::UnevenDepthwiseConv2D: {
      conv_out(a);
      std::uint64_t ranks = 0;
      for (const ChannelFactors& cf : layer.factors) ranks += cf.rank;
      f.flops = 2ull * ranks * (area + layer.n_out) * a.h * a.w;
      a.c = layer.n_out;
      break;
    }
    case LayerKind::BatchNorm:
    case LayerKind::ReLU:
      f.elementwise = a.elements();
      break;
  }
  return f;
}

}  // namespace

std::vector<LayerParams> count_params(const Model& model) {
  std::vector<LayerParams> out;
  for_each_layer(model, [&](const Layer& layer) {
    out.push_back({layer.name, layer.kind, layer_params(layer)});
  });
  return out;
}

std::size_t total_params(const Model& model) {
  std::size_t n = 0;
  for_each_layer(model, [&](const Layer& layer) { n += layer_params(layer); });
  return n;
}

std::vector<LayerFlops> count_flops(const Model& model, std::size_t height, std::size_t width) {
  std::vector<LayerFlops> out;
  ActShape a = initial_shape(model, height, width);
  for (const Block& block : model.blocks) {
    if (block.kind == BlockKind::Plain) {
      out.push_back(layer_flops(block.layers.front(), a));
      continue;
    }
    const std::size_t first = out.size();
    for (const Layer& layer : block.layers) out.push_back(layer_flops(layer, a));
    if (out.size() > first) out.back().elementwise += a.elements();
  }
  return out;
}

FlopTotals total_flops(const Model& model, std::size_t height, std::size_t width) {
  FlopTotals t;
  for (const LayerFlops& f : count_flops(model, height, width)) {
    t.flops += f.flops;
    t.elementwise += f.elementwise;
  }
  return t;
}

double expected_merge_ratio(double gamma, double alpha) { return gamma * (1.0 - alpha); }

double expected_red_ratio(std::size_t kernel_w, std::size_t kernel_h, std::size_t n_in,
                          std::size_t n_out, double r_merge, std::span<const std::size_t> ranks) {
  const double wh = static_cast<double>(kernel_w * kernel_h);
  const double n = static_cast<double>(n_out);
  double ratio = (wh + r_merge * n) / (wh * n);
  if (!ranks.empty()) {
    if (ranks.size() != n_in) throw ValidationError("expected one rank per input channel");
    const std::size_t sum = std::accumulate(ranks.begin(), ranks.end(), std::size_t{0});
    ratio *= static_cast<double>(sum) / static_cast<double>(n_in);
  }
  return ratio;
}

std::size_t deflate_size(std::span<const std::uint8_t> bytes) {
  z_stream zs{};
  if (deflateInit2(&zs, 6, Z_DEFLATED, -15, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
    throw IoError("deflateInit2 failed");
  }
  std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(bytes.size())));
  zs.next_in = const_cast<Bytef*>(bytes.data());
  zs.avail_in = static_cast<uInt>(bytes.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  const std::size_t n = zs.total_out;
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw IoError("deflate did not finish");
  return n;
}

double zip_ratio(const Model& original, const Model& processed) {
  const std::size_t a = deflate_size(serialize_model(original));
  const std::size_t b = deflate_size(serialize_model(processed));
  return static_cast<double>(a) / static_cast<double>(b);
}

double removed_pct(double before, double after) {
  return before == 0.0 ? 0.0 : 100.0 * (1.0 - after / before);
}

std::optional<double> CompressionReport::removed_params_pct() const {
  if (!params_before) return std::nullopt;
  return removed_pct(static_cast<double>(*params_before), static_cast<double>(params_after));
}

std::optional<double> CompressionReport::removed_flops_pct() const {
  if (!flops_before) return std::nullopt;
  return removed_pct(static_cast<double>(*flops_before), static_cast<double>(flops_after));
}

CompressionReport make_report(const Model& processed, const Model* baseline, std::size_t height,
                              std::size_t width) {
  CompressionReport r;
  r.model = processed.name;
  r.height = height;
  r.width = width;

  const auto params = count_params(processed);
  const auto flops = count_flops(processed, height, width);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < params.size(); ++i) {
    LayerReport lr;
    lr.layer = params[i].layer;
    lr.kind = std::string(to_string(params[i].kind));
    lr.params_after = params[i].params;
    lr.flops_after = flops[i].flops;
    lr.present_after = true;
    r.params_after += params[i].params;
    r.flops_after += flops[i].flops;
    r.elementwise_after += flops[i].elementwise;
    index.emplace(lr.layer, r.layers.size());
    r.layers.push_back(std::move(lr));
  }

  if (baseline) {
    const auto bp = count_params(*baseline);
    const auto bf = count_flops(*baseline, height, width);
    r.params_before = 0;
    r.flops_before = 0;
    r.elementwise_before = 0;
    for (std::size_t i = 0; i < bp.size(); ++i) {
      *r.params_before += bp[i].params;
      *r.flops_before += bf[i].flops;
      *r.elementwise_before += bf[i].elementwise;
      auto it = index.find(bp[i].layer);
      LayerReport* lr = nullptr;
      if (it == index.end()) {
        LayerReport fresh;
        fresh.layer = bp[i].layer;
        fresh.kind = std::string(to_string(bp[i].kind));
        index.emplace(fresh.layer, r.layers.size());
        r.layers.push_back(std::move(fresh));
        lr = &r.layers.back();
      } else {
        lr = &r.layers[it->second];
      }
      lr->params_before = bp[i].params;
      lr->flops_before = bf[i].flops;
      lr->present_before = true;
    }
    r.zip = zip_ratio(*baseline, processed);
  }
  return r;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

std::string report_to_json(const CompressionReport& r) {
  nlohmann::json j;
  j["model"] = r.model;
  j["resolution"] = {r.height, r.width};
  j["params"] = {{"after", r.params_after}};
  j["flops"] = {{"after", r.flops_after}, {"elementwise_after", r.elementwise_after}};
  if (r.params_before) {
    j["params"]["before"] = *r.params_before;
    j["params"]["removed_pct"] = *r.removed_params_pct();
    j["flops"]["before"] = *r.flops_before;
    j["flops"]["elementwise_before"] = *r.elementwise_before;
    j["flops"]["removed_pct"] = *r.removed_flops_pct();
  }
  j["zip_ratio"] = opt(r.zip);
  if (r.delta) {
    j["logit_delta"] = {{"mean_abs_delta", r.delta->mean_abs_delta},
                        {"max_abs_delta", r.delta->max_abs_delta},
                        {"gap_mean", r.delta->gap_mean},
                        {"gap_stddev", r.delta->gap_stddev},
                        {"inputs", r.delta->inputs}};
  }
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerReport& l : r.layers) {
    nlohmann::json e = {{"layer", l.layer}, {"kind", l.kind}};
    if (l.present_after) {
      e["params_after"] = l.params_after;
      e["flops_after"] = l.flops_after;
    }
    if (l.present_before) {
      e["params_before"] = l.params_before;
      e["flops_before"] = l.flops_before;
      e["removed_params_pct"] = removed_pct(static_cast<double>(l.params_before),
                                            static_cast<double>(l.params_after));
    }
    layers.push_back(std::move(e));
  }
  j["layers"] = std::move(layers);
  nlohmann::json stages = nlohmann::json::array();
  for (const StageReport& s : r.stages) {
    stages.push_back({{"stage", s.stage}, {"params", s.params}, {"flops", s.flops}});
  }
  j["stages"] = std::move(stages);
  nlohmann::json merges = nlohmann::json::array();
  for (const MergeStat& m : r.merges) {
    merges.push_back({{"layer", m.layer},
                      {"gamma", m.gamma},
                      {"alpha", m.alpha},
                      {"realized_alpha", m.realized_alpha}});
  }
  j["merges"] = std::move(merges);
  return j.dump(2);
}

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

}  // namespace

std::string report_to_text(const CompressionReport& r) {
  std::ostringstream os;
  const bool base = r.params_before.has_value();
  os << "model " << r.model << "  resolution " << r.height << "x" << r.width << "\n";
  os << pad("layer", 24) << pad("kind", 24) << pad("params", 12) << pad("flops", 14);
  if (base) os << pad("params0", 12) << pad("flops0", 14) << pad("removed%", 10);
  os << "\n";
  for (const LayerReport& l : r.layers) {
    os << pad(l.layer, 24) << pad(l.kind, 24);
    os << pad(l.present_after ? std::to_string(l.params_after) : "-", 12);
    os << pad(l.present_after ? std::to_string(l.flops_after) : "-", 14);
    if (base) {
      os << pad(l.present_before ? std::to_string(l.params_before) : "-", 12);
      os << pad(l.present_before ? std::to_string(l.flops_before) : "-", 14);
      os << pad(l.present_before ? fmt("%.2f", removed_pct(static_cast<double>(l.params_before),
                                                           static_cast<double>(l.params_after)))
                                 : "-",
                10);
    }
    os << "\n";
  }
  os << pad("total", 48) << pad(std::to_string(r.params_after), 12)
     << pad(std::to_string(r.flops_after), 14);
  if (base) {
    os << pad(std::to_string(*r.params_before), 12) << pad(std::to_string(*r.flops_before), 14)
       << pad(fmt("%.2f", *r.removed_params_pct()), 10);
  }
  os << "\n";
  os << "elementwise ops " << r.elementwise_after;
  if (base) os << " (baseline " << *r.elementwise_before << ")";
  os << "\n";
  if (base) {
    os << "removed params " << fmt("%.2f", *r.removed_params_pct()) << "%  removed flops "
       << fmt("%.2f", *r.removed_flops_pct()) << "%\n";
  }
  if (r.zip) os << "zip ratio " << fmt("%.3f", *r.zip) << "\n";
  for (const StageReport& s : r.stages) {
    os << "stage " << s.stage << ": params " << s.params << "  flops " << s.flops << "\n";
  }
  for (const MergeStat& m : r.merges) {
    os << "merge " << m.layer << ": gamma " << fmt("%.4f", m.gamma) << "  alpha "
       << fmt("%.4f", m.alpha) << "  realized " << fmt("%.4f", m.realized_alpha) << "\n";
  }
  if (r.delta) {
    os << "logit delta: mean " << fmt("%.6g", r.delta->mean_abs_delta) << "  max "
       << fmt("%.6g", r.delta->max_abs_delta) << "  gap " << fmt("%.6g", r.delta->gap_mean)
       << " +- " << fmt("%.6g", r.delta->gap_stddev) << "\n";
  }
  return os.str();
}

}  // namespace red
