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

// Reference computations written independently of the library, used to
// check it. Plain loops, no shared helpers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "red/model.hpp"

namespace oracle {

// Direct cross-correlation of a [C, H, W] input with a Conv2D weight
// [kh, kw, C, O], zero padding, stride s. Returns [O, Ho, Wo] flattened.
inline std::vector<double> conv2d(const red::Tensor& w, const std::vector<double>& bias,
                                  const std::vector<double>& x, std::size_t c, std::size_t h,
                                  std::size_t wd, std::size_t stride, std::size_t pad) {
  const std::size_t kh = w.dim(0), kw = w.dim(1), o = w.dim(3);
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> y(o * ho * wo, 0.0);
  for (std::size_t oc = 0; oc < o; ++oc) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = bias.empty() ? 0.0 : bias[oc];
        for (std::size_t ic = 0; ic < c; ++ic) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) {
                continue;
              }
              acc += w.at({ky, kx, ic, oc}) *
                     x[(ic * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)];
            }
          }
        }
        y[(oc * ho + oy) * wo + ox] = acc;
      }
    }
  }
  return y;
}

// Rank by Gaussian elimination with partial pivoting; entries below
// tol * max|a| count as zero.
inline std::size_t gauss_rank(std::vector<std::vector<double>> a, double tol = 1e-9) {
  if (a.empty()) return 0;
  double scale = 0.0;
  for (const auto& r : a) {
    for (double v : r) scale = std::max(scale, std::abs(v));
  }
  if (scale == 0.0) return 0;
  const std::size_t rows = a.size(), cols = a[0].size();
  std::size_t rank = 0;
  for (std::size_t col = 0; col < cols && rank < rows; ++col) {
    std::size_t piv = rank;
    for (std::size_t r = rank + 1; r < rows; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    if (std::abs(a[piv][col]) <= tol * scale) continue;
    std::swap(a[piv], a[rank]);
    for (std::size_t r = rank + 1; r < rows; ++r) {
      const double f = a[r][col] / a[rank][col];
      for (std::size_t k = col; k < cols; ++k) a[r][k] -= f * a[rank][k];
    }
    ++rank;
  }
  return rank;
}

inline double trapezoid(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return s;
}

// Gaussian KDE evaluated directly at one abscissa.
inline double kde(const std::vector<double>& w, double bandwidth, double at) {
  const double pi = 3.14159265358979323846;
  double s = 0.0;
  for (double v : w) {
    const double z = (at - v) / bandwidth;
    s += std::exp(-0.5 * z * z) / std::sqrt(2.0 * pi);
  }
  return s / (static_cast<double>(w.size()) * bandwidth);
}

// y = relu?(W x + b) for a [n_out, n_in] weight.
inline std::vector<double> dense(const red::Layer& l, const std::vector<double>& x) {
  const auto& w = l.tensor("weight");
  std::vector<double> y(l.n_out, 0.0);
  for (std::size_t o = 0; o < l.n_out; ++o) {
    double acc = l.has_bias() ? l.tensor("bias")[o] : 0.0;
    for (std::size_t i = 0; i < l.n_in; ++i) acc += w[o * l.n_in + i] * x[i];
    y[o] = acc;
  }
  return y;
}

inline std::vector<double> relu(std::vector<double> v) {
  for (double& x : v) x = std::max(x, 0.0);
  return v;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace oracle
