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

#include "red/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "red/error.hpp"

namespace red {

namespace {

using Rng = std::mt19937_64;

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

double gaussian(Rng& rng, double stddev) {
  std::normal_distribution<double> n(0.0, stddev);
  return n(rng);
}

// Normal sample resampled until it lies within 4 standard deviations.
double truncated_gaussian(Rng& rng, double stddev) {
  std::normal_distribution<double> n(0.0, 1.0);
  double z = n(rng);
  while (std::abs(z) > 4.0) z = n(rng);
  return z * stddev;
}

// Nonzero k / denom with |k| <= span.
double dyadic(Rng& rng, int span, double denom) {
  std::uniform_int_distribution<int> d(1, span);
  std::bernoulli_distribution sign(0.5);
  const int k = d(rng);
  return (sign(rng) ? k : -k) / denom;
}

double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return u(rng);
}

std::vector<std::size_t> permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

// Seeded disjoint pairs (a, b), a < b, among n outputs.
std::vector<std::pair<std::size_t, std::size_t>> pick_pairs(Rng& rng, std::size_t n,
                                                            std::size_t pairs) {
  if (2 * pairs > n) {
    throw ValidationError("cannot plant " + std::to_string(pairs) + " duplicate pairs among " +
                          std::to_string(n) + " outputs");
  }
  const auto p = permutation(rng, n);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t t = 0; t < pairs; ++t) {
    out.emplace_back(std::min(p[2 * t], p[2 * t + 1]), std::max(p[2 * t], p[2 * t + 1]));
  }
  return out;
}

std::vector<std::vector<std::size_t>> pair_components(
    std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  std::vector<std::size_t> partner(n, n);
  for (auto [a, b] : pairs) partner[b] = a;
  std::vector<std::vector<std::size_t>> comps;
  std::vector<std::size_t> slot(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    if (partner[j] != n) {
      comps[slot[partner[j]]].push_back(j);
      continue;
    }
    slot[j] = comps.size();
    comps.push_back({j});
  }
  return comps;
}

std::size_t pair_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

void copy_dense_row(Layer& layer, std::size_t from, std::size_t to) {
  Tensor& w = layer.tensor("weight");
  for (std::size_t i = 0; i < layer.n_in; ++i) w[to * layer.n_in + i] = w[from * layer.n_in + i];
  if (layer.has_bias()) layer.tensor("bias")[to] = layer.tensor("bias")[from];
}

// Copies output channel `from` to `to` in a Conv2D and its bias.
void copy_conv_output(Layer& layer, std::size_t from, std::size_t to) {
  Tensor& w = layer.tensor("weight");
  for (std::size_t e = 0; e < w.numel(); e += layer.n_out) w[e + to] = w[e + from];
  if (layer.has_bias()) layer.tensor("bias")[to] = layer.tensor("bias")[from];
}

void copy_bn_channel(Layer& bn, std::size_t from, std::size_t to) {
  for (const char* t : {"gamma", "beta", "mean", "var"}) bn.tensor(t)[to] = bn.tensor(t)[from];
}

Layer random_dense(Rng& rng, std::string name, std::size_t n_in, std::size_t n_out, bool bias) {
  Tensor w(Shape{n_out, n_in});
  const double s = 1.0 / std::sqrt(static_cast<double>(n_in));
  // Gaussian draws snapped to multiples of 1/64: few distinct values, so a
  // tau = 0 hash leaves the layer untouched.
  for (double& v : w.values()) v = std::round(gaussian(rng, s) * 64.0) / 64.0;
  std::optional<Tensor> b;
  if (bias) {
    b = Tensor(Shape{n_out});
    for (double& v : b->values()) v = std::round(gaussian(rng, 0.1) * 64.0) / 64.0;
  }
  return make_dense(std::move(name), std::move(w), std::move(b));
}

Layer random_batchnorm(Rng& rng, std::string name, std::size_t n) {
  Tensor g(Shape{n}), b(Shape{n}), m(Shape{n}), v(Shape{n});
  for (std::size_t c = 0; c < n; ++c) {
    g[c] = f32(uniform(rng, 0.5, 1.5));
    b[c] = f32(uniform(rng, -0.1, 0.1));
    m[c] = f32(uniform(rng, -0.1, 0.1));
    v[c] = f32(uniform(rng, 0.5, 1.5));
  }
  return make_batchnorm(std::move(name), std::move(g), std::move(b), std::move(m), std::move(v));
}

}  // namespace

std::vector<double> spaced_modes(std::size_t k, double separation) {
  std::vector<double> modes(k);
  const double centre = 0.5 * static_cast<double>(k - 1);
  for (std::size_t i = 0; i < k; ++i) {
    modes[i] = f32((static_cast<double>(i) - centre) * separation);
  }
  return modes;
}

PlantedLayer gen_multimodal_layer(const MultimodalSpec& spec) {
  if (spec.modes.empty()) throw ValidationError("a multimodal layer needs at least one mode");
  if (spec.noise < 0.0) throw ValidationError("noise must be non-negative");
  Rng rng(spec.seed);
  const std::size_t n = spec.n_in * spec.n_out;
  const auto perm = permutation(rng, n);
  PlantedLayer out;
  out.assignment.resize(n);
  Tensor w(Shape{spec.n_out, spec.n_in});
  for (std::size_t t = 0; t < n; ++t) out.assignment[perm[t]] = t % spec.modes.size();
  for (std::size_t e = 0; e < n; ++e) {
    const double noise = spec.noise > 0.0 ? truncated_gaussian(rng, spec.noise) : 0.0;
    w[e] = f32(spec.modes[out.assignment[e]] + noise);
  }
  out.layer = make_dense(spec.name, std::move(w));
  return out;
}

Model gen_multimodal_model(std::uint64_t seed, const std::vector<std::size_t>& widths,
                           const std::vector<double>& modes, double noise) {
  if (widths.size() < 2) throw ValidationError("need an input width and at least one layer");
  Model m;
  m.name = "multimodal";
  m.metadata["generator"] = "multimodal";
  m.metadata["seed"] = std::to_string(seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    MultimodalSpec spec;
    spec.seed = seed * 1000003 + l;
    spec.name = "fc" + std::to_string(l);
    spec.modes = modes;
    spec.noise = noise;
    spec.n_in = widths[l];
    spec.n_out = widths[l + 1];
    m.blocks.push_back(Block::plain(gen_multimodal_layer(spec).layer));
    if (l + 2 < widths.size()) m.blocks.push_back(Block::plain(make_relu("relu" + std::to_string(l))));
  }
  return m;
}

PlantedModel gen_model_with_duplicates(const DuplicateSpec& spec) {
  if (spec.widths.size() < 2) throw ValidationError("need an input width and at least one layer");
  if (spec.duplicate_fraction < 0.0 || spec.duplicate_fraction > 0.5) {
    throw ValidationError("duplicate fraction must lie in [0, 0.5]");
  }
  Rng rng(spec.seed);
  PlantedModel out;
  out.model.name = "duplicates";
  out.model.metadata["generator"] = "duplicates";
  out.model.metadata["seed"] = std::to_string(spec.seed);
  const std::size_t layers = spec.widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t n_out = spec.widths[l + 1];
    Layer layer = random_dense(rng, "fc" + std::to_string(l), spec.widths[l], n_out, spec.bias);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    if (std::find(spec.planted.begin(), spec.planted.end(), l) != spec.planted.end()) {
      pairs = pick_pairs(rng, n_out, pair_count(n_out, spec.duplicate_fraction));
      for (auto [a, b] : pairs) copy_dense_row(layer, a, b);
    }
    if (l + 1 < layers) out.truth.push_back({layer.name, pair_components(n_out, pairs)});
    out.model.blocks.push_back(Block::plain(std::move(layer)));
    if (l + 1 < layers) {
      out.model.blocks.push_back(Block::plain(make_relu("relu" + std::to_string(l))));
    }
  }
  return out;
}

namespace {

Layer random_conv(Rng& rng, std::string name, std::size_t n_in, std::size_t n_out,
                  WeightStyle style, const std::vector<double>& modes, double noise) {
  const std::size_t fan_in = 9 * n_in;
  Tensor w(Shape{3, 3, n_in, n_out});
  Tensor b(Shape{n_out});
  switch (style) {
    case WeightStyle::Gaussian: {
      const double s = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (double& v : w.values()) v = f32(gaussian(rng, s));
      for (double& v : b.values()) v = f32(gaussian(rng, 0.05));
      break;
    }
    case WeightStyle::Separable: {
      std::vector<double> d(9 * n_in);
      std::vector<double> p(n_in * n_out);
      for (double& v : d) v = dyadic(rng, 16, 8.0);
      for (double& v : p) v = dyadic(rng, 8, 64.0);
      for (std::size_t e = 0; e < 9; ++e) {
        for (std::size_t i = 0; i < n_in; ++i) {
          for (std::size_t j = 0; j < n_out; ++j) {
            w[(e * n_in + i) * n_out + j] = d[e * n_in + i] * p[i * n_out + j];
          }
        }
      }
      for (double& v : b.values()) v = dyadic(rng, 8, 64.0);
      break;
    }
    case WeightStyle::Multimodal: {
      std::uniform_int_distribution<std::size_t> pick(0, modes.size() - 1);
      for (double& v : w.values()) v = f32(modes[pick(rng)] + truncated_gaussian(rng, noise));
      for (double& v : b.values()) v = f32(modes[pick(rng)] + truncated_gaussian(rng, noise));
      break;
    }
  }
  return make_conv2d(std::move(name), std::move(w), std::move(b), 1, 1);
}

}  // namespace

PlantedModel gen_residual_with_duplicates(std::uint64_t seed, std::size_t channels,
                                          std::size_t pairs) {
  Rng rng(seed);
  const auto dup = pick_pairs(rng, channels, pairs);
  Layer stem = random_conv(rng, "stem", 3, channels, WeightStyle::Gaussian, {}, 0.0);
  Layer a = random_conv(rng, "block.conv_a", channels, channels, WeightStyle::Gaussian, {}, 0.0);
  Layer b = random_conv(rng, "block.conv_b", channels, channels, WeightStyle::Gaussian, {}, 0.0);
  for (auto [x, y] : dup) {
    copy_conv_output(stem, x, y);
    copy_conv_output(b, x, y);
  }
  PlantedModel out;
  out.model.name = "residual-duplicates";
  out.model.metadata["generator"] = "residual-duplicates";
  out.model.metadata["seed"] = std::to_string(seed);
  out.model.blocks.push_back(Block::plain(std::move(stem)));
  out.model.blocks.push_back(Block::plain(make_relu("stem.relu")));
  out.model.blocks.push_back(Block::residual({std::move(a), make_relu("block.relu"), std::move(b)}));
  out.model.blocks.push_back(Block::plain(make_relu("block.out_relu")));
  out.model.blocks.push_back(Block::plain(random_dense(rng, "head", channels, 10, true)));
  out.truth.push_back({"stem", pair_components(channels, dup)});
  out.truth.push_back({"block.conv_a", pair_components(channels, {})});
  return out;
}

Layer gen_separable_conv(const SeparableSpec& spec) {
  if (spec.full_rank_channels > spec.n_in) {
    throw ValidationError("more full-rank channels than input channels");
  }
  Rng rng(spec.seed);
  const std::size_t area = spec.kernel_h * spec.kernel_w;
  Tensor w(Shape{spec.kernel_h, spec.kernel_w, spec.n_in, spec.n_out});
  const std::size_t separable = spec.n_in - spec.full_rank_channels;
  for (std::size_t i = 0; i < spec.n_in; ++i) {
    std::vector<double> d(area);
    std::vector<double> p(spec.n_out);
    for (double& v : d) v = dyadic(rng, 16, 8.0);
    for (double& v : p) v = dyadic(rng, 32, 16.0);
    for (std::size_t e = 0; e < area; ++e) {
      for (std::size_t j = 0; j < spec.n_out; ++j) {
        w[(e * spec.n_in + i) * spec.n_out + j] =
            i < separable ? d[e] * p[j] : dyadic(rng, 32, 16.0);
      }
    }
  }
  std::optional<Tensor> bias;
  if (spec.bias) {
    bias = Tensor(Shape{spec.n_out});
    for (double& v : bias->values()) v = dyadic(rng, 32, 16.0);
  }
  return make_conv2d(spec.name, std::move(w), std::move(bias), spec.stride, spec.padding);
}

Model gen_conv_net(const ConvNetSpec& spec) {
  if (spec.channels.empty()) throw ValidationError("a conv net needs at least one stage");
  Rng rng(spec.seed);
  Model m;
  m.name = "convnet";
  m.metadata["generator"] = "convnet";
  m.metadata["seed"] = std::to_string(spec.seed);

  std::vector<double> modes;
  std::size_t n_in = spec.in_channels;
  auto conv = [&](const std::string& name, std::size_t in, std::size_t out) {
    if (spec.style == WeightStyle::Multimodal) {
      const double half = 1.5 / std::sqrt(9.0 * static_cast<double>(in));
      const std::size_t k = std::max<std::size_t>(spec.modes, 1);
      modes = spaced_modes(k, k > 1 ? 2.0 * half / static_cast<double>(k - 1) : 0.0);
    }
    return random_conv(rng, name, in, out, spec.style, modes, spec.noise);
  };
  auto push = [&](std::vector<Layer>& seq, Layer layer,
                  const std::vector<std::pair<std::size_t, std::size_t>>& dup) {
    for (auto [a, b] : dup) copy_conv_output(layer, a, b);
    const std::size_t n = layer.n_out;
    const std::string name = layer.name;
    seq.push_back(std::move(layer));
    if (spec.batchnorm) {
      Layer bn = random_batchnorm(rng, name + ".bn", n);
      for (auto [a, b] : dup) copy_bn_channel(bn, a, b);
      seq.push_back(std::move(bn));
    }
  };

  for (std::size_t s = 0; s < spec.channels.size(); ++s) {
    const std::size_t c = spec.channels[s];
    const std::string tag = "conv" + std::to_string(s);
    const auto dup = pick_pairs(rng, c, pair_count(c, spec.duplicate_fraction));
    std::vector<Layer> seq;
    push(seq, conv(tag, n_in, c), dup);
    seq.push_back(make_relu(tag + ".relu"));
    if (s == 0 && spec.depthwise_after_stem) {
      Tensor w(Shape{3, 3, c, 1});
      for (double& v : w.values()) v = f32(gaussian(rng, 1.0 / 3.0));
      push(seq, make_depthwise("dw0", std::move(w), std::nullopt, 1, 1), {});
      seq.push_back(make_relu("dw0.relu"));
    }
    for (Layer& l : seq) m.blocks.push_back(Block::plain(std::move(l)));
    n_in = c;

    if (std::find(spec.residual_after.begin(), spec.residual_after.end(), s) !=
        spec.residual_after.end()) {
      const std::string res = "res" + std::to_string(s);
      const auto inner = pick_pairs(rng, c, pair_count(c, spec.duplicate_fraction));
      std::vector<Layer> path;
      push(path, conv(res + ".a", c, c), inner);
      path.push_back(make_relu(res + ".relu"));
      push(path, conv(res + ".b", c, c), dup);
      m.blocks.push_back(Block::residual(std::move(path)));
      m.blocks.push_back(Block::plain(make_relu(res + ".out_relu")));
    }
  }
  m.blocks.push_back(Block::plain(random_dense(rng, "head", n_in, spec.classes, true)));
  return m;
}

namespace {

std::size_t choose2(std::size_t s) { return s * (s - 1) / 2; }

// Signed permutation of `base`.
std::vector<double> signed_permutation(Rng& rng, const std::vector<double>& base) {
  const auto perm = permutation(rng, base.size());
  std::vector<double> out(base.size());
  for (std::size_t e = 0; e < base.size(); ++e) {
    out[e] = (rng() % 2 == 0 ? 1.0 : -1.0) * base[perm[e]];
  }
  return out;
}

}  // namespace

MergeProfile gen_merge_profile(const MergeProfileSpec& spec) {
  if (spec.gamma <= 0.0 || spec.gamma > 1.0) throw ValidationError("gamma must lie in (0, 1]");
  if (spec.alpha < 0.0 || spec.alpha >= 1.0) throw ValidationError("alpha must lie in [0, 1)");
  if (spec.mixed_ranks && spec.kernel < 2) throw ValidationError("mixed ranks need kernel >= 2");
  const std::size_t need_clusters = spec.mixed_ranks ? 2 : 1;
  constexpr double kSpread = 4.0;
  constexpr double kJitter = 0.25;

  for (std::size_t n = 8; n <= 64; ++n) {
    const double un = spec.gamma * static_cast<double>(n);
    if (std::abs(un - std::round(un)) > 1e-9) continue;
    const auto unique = static_cast<std::size_t>(std::llround(un));
    const auto k = static_cast<std::size_t>(std::llround(un * (1.0 - spec.alpha)));
    if (k < need_clusters || k > unique) continue;

    std::vector<std::size_t> sizes(k, n / k);
    for (std::size_t c = 0; c < n % k; ++c) ++sizes[c];
    std::vector<std::size_t> uniq(k, 1);
    std::size_t extra = unique - k;
    for (std::size_t c = 0; c < k && extra > 0; ++c) {
      const std::size_t add = std::min(extra, sizes[c] - 1);
      uniq[c] += add;
      extra -= add;
    }
    if (extra > 0) continue;

    // Intra-cluster pairs must all fall below the percentile threshold while
    // the equidistant inter-cluster pairs stay at or above it.
    std::size_t intra = 0;
    bool jitter = false;
    for (std::size_t c = 0; c < k; ++c) {
      intra += choose2(sizes[c]);
      jitter = jitter || uniq[c] > 1;
    }
    const double pos = spec.alpha * static_cast<double>(choose2(n) - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const bool frac = pos > static_cast<double>(lo);
    if (jitter && lo < intra && !(lo + 1 == intra && frac)) continue;

    // Neuron j has per-channel scales mu[j][i]: 1 everywhere, plus kSpread on
    // its cluster's channel and kJitter on a channel owned by its unique
    // value. With mixed ranks the cluster channel switches to the second
    // pattern. Every inter-cluster distance is therefore identical.
    const std::size_t n_in = std::max(spec.n_in, k + unique);
    Rng rng(spec.seed);
    const std::size_t area = spec.kernel * spec.kernel;
    std::vector<double> base(area);
    for (double& v : base) v = static_cast<double>(1 + rng() % 16) / 8.0;
    std::vector<std::vector<double>> pat_d(n_in), pat_e(n_in);
    for (std::size_t i = 0; i < n_in; ++i) {
      pat_d[i] = signed_permutation(rng, base);
      pat_e[i] = pat_d[i];
      for (double& v : pat_e[i]) {
        if (std::abs(v) == base[0]) {
          v = -v;
          break;
        }
      }
    }

    // Output slot -> (cluster, unique value id).
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    std::size_t next_id = 0;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t t = 0; t < sizes[c]; ++t) slots.emplace_back(c, next_id + t % uniq[c]);
      next_id += uniq[c];
    }
    const auto perm = permutation(rng, n);
    Tensor w(Shape{spec.kernel, spec.kernel, n_in, n});
    for (std::size_t j = 0; j < n; ++j) {
      const auto [c, id] = slots[perm[j]];
      for (std::size_t i = 0; i < n_in; ++i) {
        double mu = 1.0;
        if (i == c) mu += kSpread;
        if (i == k + id) mu += kJitter;
        const auto& pat = (spec.mixed_ranks && i == c) ? pat_e[i] : pat_d[i];
        for (std::size_t e = 0; e < area; ++e) w[(e * n_in + i) * n + j] = mu * pat[e];
      }
    }

    MergeProfile out;
    out.layer = "planted";
    out.n_out = n;
    out.unique = unique;
    out.clusters = k;
    for (std::size_t i = 0; i < n_in; ++i) out.ranks.push_back(spec.mixed_ranks && i < k ? 2 : 1);
    out.model.name = "merge-profile";
    out.model.metadata["generator"] = "merge-profile";
    out.model.metadata["seed"] = std::to_string(spec.seed);
    out.model.blocks.push_back(Block::plain(make_conv2d(out.layer, std::move(w))));
    out.model.blocks.push_back(Block::plain(make_relu("relu")));
    out.model.blocks.push_back(Block::plain(random_dense(rng, "head", n, spec.classes, true)));
    return out;
  }
  throw ValidationError("no layer width in [8, 64] realises gamma and alpha exactly");
}

}  // namespace red
