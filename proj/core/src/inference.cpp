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

#include "red/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "red/error.hpp"
#include "red/parallel.hpp"

namespace red {

namespace {

[[noreturn]] void fail(const Layer& layer, const std::string& what) {
  throw EvaluationError("layer '" + layer.name + "' (" + std::string(to_string(layer.kind)) +
                        "): " + what);
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

struct Geometry {
  std::size_t channels, height, width, out_h, out_w;
};

Geometry conv_geometry(const Layer& layer, const Activation& x) {
  if (x.rank() != 3) fail(layer, "expects a [C, H, W] activation, got " + shape_str(x.shape()));
  if (x.dim(0) != layer.n_in) {
    fail(layer, "expects " + std::to_string(layer.n_in) + " channels, got " +
                    std::to_string(x.dim(0)));
  }
  const std::size_t h = x.dim(1) + 2 * layer.padding;
  const std::size_t w = x.dim(2) + 2 * layer.padding;
  if (h < layer.kernel_h || w < layer.kernel_w) fail(layer, "input smaller than the kernel");
  return {x.dim(0), x.dim(1), x.dim(2), (h - layer.kernel_h) / layer.stride + 1,
          (w - layer.kernel_w) / layer.stride + 1};
}

// Cross-correlates one input plane with one [kh, kw] kernel and accumulates
// scale * result into `out` (out_h * out_w values).
void correlate_plane(const double* plane, const Geometry& g, const Layer& layer,
                     const double* kernel, std::size_t kernel_row_stride,
                     std::size_t kernel_col_stride, double scale, double* out) {
  const auto pad = static_cast<std::ptrdiff_t>(layer.padding);
  for (std::size_t oy = 0; oy < g.out_h; ++oy) {
    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
      double acc = 0.0;
      for (std::size_t ky = 0; ky < layer.kernel_h; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * layer.stride + ky) - pad;
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
        for (std::size_t kx = 0; kx < layer.kernel_w; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * layer.stride + kx) - pad;
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
          acc += kernel[ky * kernel_row_stride + kx * kernel_col_stride] *
                 plane[static_cast<std::size_t>(iy) * g.width + static_cast<std::size_t>(ix)];
        }
      }
      out[oy * g.out_w + ox] += scale * acc;
    }
  }
}

void add_bias(const Layer& layer, Activation& y, std::size_t plane) {
  if (!layer.has_bias()) return;
  const Tensor& b = layer.tensor("bias");
  for (std::size_t c = 0; c < layer.n_out; ++c) {
    for (std::size_t p = 0; p < plane; ++p) y[c * plane + p] += b[c];
  }
}

Activation dense(const Layer& layer, const Activation& x) {
  std::vector<double> features;
  if (x.rank() == 3) {
    // Global average pooling over the spatial extent.
    const std::size_t plane = x.dim(1) * x.dim(2);
    features.assign(x.dim(0), 0.0);
    for (std::size_t c = 0; c < x.dim(0); ++c) {
      double s = 0.0;
      for (std::size_t p = 0; p < plane; ++p) s += x[c * plane + p];
      features[c] = s / static_cast<double>(plane);
    }
  } else if (x.rank() == 1) {
    features = x.storage();
  } else {
    fail(layer, "unsupported activation shape " + shape_str(x.shape()));
  }
  if (features.size() != layer.n_in) {
    fail(layer, "expects " + std::to_string(layer.n_in) + " features, got " +
                    std::to_string(features.size()));
  }
  const Tensor& w = layer.tensor("weight");
  Activation y(Shape{layer.n_out});
  for (std::size_t o = 0; o < layer.n_out; ++o) {
    double acc = 0.0;
    for (std::size_t i = 0; i < layer.n_in; ++i) acc += w[o * layer.n_in + i] * features[i];
    y[o] = acc;
  }
  add_bias(layer, y, 1);
  return y;
}

Activation conv2d(const Layer& layer, const Activation& x) {
  const Geometry g = conv_geometry(layer, x);
  const Tensor& w = layer.tensor("weight");
  const std::size_t plane_in = g.height * g.width;
  const std::size_t plane_out = g.out_h * g.out_w;
  Activation y(Shape{layer.n_out, g.out_h, g.out_w});
  // weight[ky, kx, i, o] -> row stride kw*n_in*n_out, column stride n_in*n_out
  const std::size_t col_stride = layer.n_in * layer.n_out;
  const std::size_t row_stride = layer.kernel_w * col_stride;
  for (std::size_t o = 0; o < layer.n_out; ++o) {
    for (std::size_t i = 0; i < layer.n_in; ++i) {
      correlate_plane(x.storage().data() + i * plane_in, g, layer,
                      w.storage().data() + i * layer.n_out + o, row_stride, col_stride, 1.0,
                      y.storage().data() + o * plane_out);
    }
  }
  add_bias(layer, y, plane_out);
  return y;
}

Activation depthwise(const Layer& layer, const Activation& x) {
  const Geometry g = conv_geometry(layer, x);
  const Tensor& w = layer.tensor("weight");
  const std::size_t plane_in = g.height * g.width;
  const std::size_t plane_out = g.out_h * g.out_w;
  Activation y(Shape{layer.n_out, g.out_h, g.out_w});
  for (std::size_t c = 0; c < layer.n_in; ++c) {
    correlate_plane(x.storage().data() + c * plane_in, g, layer, w.storage().data() + c,
                    layer.kernel_w * layer.n_in, layer.n_in, 1.0,
                    y.storage().data() + c * plane_out);
  }
  add_bias(layer, y, plane_out);
  return y;
}

Activation uneven_depthwise(const Layer& layer, const Activation& x) {
  const Geometry g = conv_geometry(layer, x);
  if (layer.factors.size() != layer.n_in) fail(layer, "factor count does not match n_in");
  const std::size_t plane_in = g.height * g.width;
  const std::size_t plane_out = g.out_h * g.out_w;
  const std::size_t area = layer.kernel_h * layer.kernel_w;
  Activation y(Shape{layer.n_out, g.out_h, g.out_w});
  std::vector<double> response(plane_out);
  for (std::size_t i = 0; i < layer.n_in; ++i) {
    const ChannelFactors& f = layer.factors[i];
    for (std::size_t k = 0; k < f.rank; ++k) {
      std::fill(response.begin(), response.end(), 0.0);
      correlate_plane(x.storage().data() + i * plane_in, g, layer, f.bases.data() + k * area,
                      layer.kernel_w, 1, 1.0, response.data());
      for (std::size_t o = 0; o < layer.n_out; ++o) {
        const double mu = f.coeffs[k * layer.n_out + o];
        if (mu == 0.0) continue;
        double* out = y.storage().data() + o * plane_out;
        for (std::size_t p = 0; p < plane_out; ++p) out[p] += mu * response[p];
      }
    }
  }
  add_bias(layer, y, plane_out);
  return y;
}

Activation batchnorm(const Layer& layer, const Activation& x) {
  const std::size_t channels = x.rank() == 0 ? 0 : x.dim(0);
  if (channels != layer.n_in) {
    fail(layer, "expects " + std::to_string(layer.n_in) + " channels, got " +
                    std::to_string(channels));
  }
  const std::size_t plane = x.numel() / channels;
  const Tensor& gamma = layer.tensor("gamma");
  const Tensor& beta = layer.tensor("beta");
  const Tensor& mean = layer.tensor("mean");
  const Tensor& var = layer.tensor("var");
  Activation y = x;
  for (std::size_t c = 0; c < channels; ++c) {
    const double scale = gamma[c] / std::sqrt(var[c] + kBatchNormEpsilon);
    for (std::size_t p = 0; p < plane; ++p) {
      double& v = y[c * plane + p];
      v = scale * (v - mean[c]) + beta[c];
    }
  }
  return y;
}

Activation run_path(const std::vector<Layer>& layers, Activation x) {
  for (const Layer& layer : layers) x = apply_layer(layer, x);
  return x;
}

}  // namespace

Activation apply_layer(const Layer& layer, const Activation& x) {
  switch (layer.kind) {
    case LayerKind::Dense:
      return dense(layer, x);
    case LayerKind::Conv2D:
      return conv2d(layer, x);
    case LayerKind::DepthwiseConv2D:
      return depthwise(layer, x);
    case LayerKind::UnevenDepthwiseConv2D:
      return uneven_depthwise(layer, x);
    case LayerKind::BatchNorm:
      return batchnorm(layer, x);
    case LayerKind::ReLU: {
      Activation y = x;
      for (double& v : y.storage()) v = std::max(v, 0.0);
      return y;
    }
  }
  fail(layer, "unknown layer kind");
}

Activation forward(const Model& model, const Activation& input) {
  Activation x = input;
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const Block& block = model.blocks[b];
    if (block.kind == BlockKind::Plain) {
      x = run_path(block.layers, std::move(x));
      continue;
    }
    Activation main = run_path(block.layers, x);
    if (main.shape() != x.shape()) {
      throw EvaluationError("residual block " + std::to_string(b) + ": main path output " +
                            shape_str(main.shape()) + " does not match shortcut " +
                            shape_str(x.shape()));
    }
    for (std::size_t i = 0; i < main.numel(); ++i) main[i] += x[i];
    x = std::move(main);
  }
  return x;
}

Shape input_shape(const Model& model, std::size_t height, std::size_t width) {
  const auto channels = input_channels(model);
  if (!channels) throw EvaluationError("model has no parametric layer");
  if (takes_spatial_input(model)) return {*channels, height, width};
  return {*channels};
}

std::vector<Activation> random_inputs(const Model& model, std::size_t count, std::uint64_t seed,
                                      std::size_t height, std::size_t width) {
  const Shape shape = input_shape(model, height, width);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Activation> inputs;
  inputs.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    Activation x(shape);
    for (double& v : x.storage()) v = normal(rng);
    inputs.push_back(std::move(x));
  }
  return inputs;
}

std::vector<Activation> forward_batch(const Model& model, std::span<const Activation> inputs) {
  std::vector<Activation> outputs(inputs.size());
  parallel_for(inputs.size(), [&](std::size_t i) { outputs[i] = forward(model, inputs[i]); });
  return outputs;
}

LogitDelta logit_delta(const Model& a, const Model& b, std::span<const Activation> inputs) {
  if (inputs.empty()) throw EvaluationError("logit_delta needs at least one input");
  const auto out_a = forward_batch(a, inputs);
  const auto out_b = forward_batch(b, inputs);
  LogitDelta result;
  result.inputs = inputs.size();
  double abs_sum = 0.0;
  std::size_t abs_count = 0;
  std::vector<double> gaps;
  gaps.reserve(inputs.size());
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    const Tensor& fa = out_a[n];
    const Tensor& fb = out_b[n];
    if (fa.numel() != fb.numel()) {
      throw EvaluationError("output dimension mismatch: " + std::to_string(fa.numel()) + " vs " +
                            std::to_string(fb.numel()));
    }
    for (std::size_t i = 0; i < fa.numel(); ++i) {
      const double d = std::fabs(fa[i] - fb[i]);
      abs_sum += d;
      result.max_abs_delta = std::max(result.max_abs_delta, d);
    }
    abs_count += fa.numel();
    double top1 = -std::numeric_limits<double>::infinity();
    double top2 = -std::numeric_limits<double>::infinity();
    for (double v : fa.values()) {
      if (v > top1) {
        top2 = top1;
        top1 = v;
      } else if (v > top2) {
        top2 = v;
      }
    }
    gaps.push_back(fa.numel() >= 2 ? top1 - top2 : 0.0);
  }
  result.mean_abs_delta = abs_count ? abs_sum / static_cast<double>(abs_count) : 0.0;
  double gap_sum = 0.0;
  for (double g : gaps) gap_sum += g;
  result.gap_mean = gap_sum / static_cast<double>(gaps.size());
  double var = 0.0;
  for (double g : gaps) var += (g - result.gap_mean) * (g - result.gap_mean);
  result.gap_stddev = std::sqrt(var / static_cast<double>(gaps.size()));
  return result;
}

}  // namespace red
