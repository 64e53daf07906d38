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

#include "red/separation.hpp"

#include <algorithm>

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>

#include "json.hpp"
#include "red/error.hpp"
#include "red/parallel.hpp"

namespace red {

namespace {

double norm(const double* v, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += v[i] * v[i];
  return std::sqrt(s);
}

}  // namespace

ChannelMatrix channel_matrix(const Layer& conv, std::size_t channel) {
  if (conv.kind != LayerKind::Conv2D) {
    throw StructureError("channel_matrix needs a Conv2D layer, got " +
                         std::string(to_string(conv.kind)));
  }
  if (channel >= conv.n_in) throw StructureError("channel index out of range");
  const Tensor& w = conv.tensor("weight");
  ChannelMatrix m;
  m.channel = channel;
  m.rows = conv.n_out;
  m.cols = conv.kernel_h * conv.kernel_w;
  m.data.resize(m.rows * m.cols);
  for (std::size_t j = 0; j < conv.n_out; ++j) {
    for (std::size_t y = 0; y < conv.kernel_h; ++y) {
      for (std::size_t x = 0; x < conv.kernel_w; ++x) {
        m.data[j * m.cols + y * conv.kernel_w + x] = w.at({y, x, channel, j});
      }
    }
  }
  return m;
}

std::size_t numerical_rank(const ChannelMatrix& m, double rel_tol) {
  if (m.rows == 0 || m.cols == 0) return 0;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> mat(
      m.data.data(), static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(mat);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * s(0)) ++r;
  }
  return r;
}

ChannelFactors extract_basis(const ChannelMatrix& m, std::size_t rank, double rel_tol) {
  const std::size_t n = m.cols;
  std::vector<std::vector<double>> bases;
  std::vector<std::vector<double>> ortho;  // orthonormal span of `bases`

  for (std::size_t j = 0; j < m.rows; ++j) {
    const double* row = m.data.data() + j * n;
    const double row_norm = norm(row, n);
    if (row_norm == 0.0) continue;
    std::vector<double> residual(row, row + n);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& q : ortho) {
        double dot = 0.0;
        for (std::size_t e = 0; e < n; ++e) dot += q[e] * residual[e];
        for (std::size_t e = 0; e < n; ++e) residual[e] -= dot * q[e];
      }
    }
    const double res_norm = norm(residual.data(), n);
    if (res_norm <= rel_tol * row_norm) continue;
    if (bases.size() == rank) {
      throw InseparableError("channel " + std::to_string(m.channel) + " needs more than " +
                             std::to_string(rank) + " basis kernels");
    }
    double peak = 0.0;
    for (std::size_t e = 0; e < n; ++e) peak = std::max(peak, std::abs(row[e]));
    std::size_t last = n;
    while (last-- > 0 && std::abs(row[last]) <= rel_tol * peak) {
    }
    std::vector<double> basis(row, row + n);
    const double pivot = row[last];
    for (double& v : basis) v /= pivot;
    basis[last] = 1.0;
    std::fill(basis.begin() + static_cast<std::ptrdiff_t>(last) + 1, basis.end(), 0.0);
    bases.push_back(std::move(basis));
    for (double& v : residual) v /= res_norm;
    ortho.push_back(std::move(residual));
  }

  ChannelFactors f;
  f.rank = bases.size();
  f.bases.reserve(f.rank * n);
  for (const auto& b : bases) f.bases.insert(f.bases.end(), b.begin(), b.end());
  f.coeffs.assign(f.rank * m.rows, 0.0);
  if (f.rank == 0) return f;

  Eigen::MatrixXd basis_t(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f.rank));
  for (std::size_t k = 0; k < f.rank; ++k) {
    for (std::size_t e = 0; e < n; ++e) {
      basis_t(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(k)) = bases[k][e];
    }
  }
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(basis_t);
  for (std::size_t j = 0; j < m.rows; ++j) {
    const double* row = m.data.data() + j * n;
    const double row_norm = norm(row, n);
    if (row_norm == 0.0) continue;
    std::vector<double> c(f.rank);
    if (f.rank == 1) {
      double vb = 0.0;
      double bb = 0.0;
      for (std::size_t e = 0; e < n; ++e) {
        vb += row[e] * bases[0][e];
        bb += bases[0][e] * bases[0][e];
      }
      c[0] = vb / bb;
    } else {
      const Eigen::VectorXd target =
          Eigen::Map<const Eigen::VectorXd>(row, static_cast<Eigen::Index>(n));
      const Eigen::VectorXd sol = qr.solve(target);
      for (std::size_t k = 0; k < f.rank; ++k) c[k] = sol(static_cast<Eigen::Index>(k));
    }
    double err = 0.0;
    for (std::size_t e = 0; e < n; ++e) {
      double rec = 0.0;
      for (std::size_t k = 0; k < f.rank; ++k) rec += c[k] * bases[k][e];
      err += (row[e] - rec) * (row[e] - rec);
    }
    // A little slack over rel_tol for the rounding of the solve itself.
    if (std::sqrt(err) > 2.0 * rel_tol * row_norm) {
      throw InseparableError("channel " + std::to_string(m.channel) + " row " + std::to_string(j) +
                             " is not reconstructed by its basis");
    }
    for (std::size_t k = 0; k < f.rank; ++k) f.coeffs[k * m.rows + j] = c[k];
  }
  return f;
}

std::pair<Layer, SeparationPlan> separate_layer(const Layer& layer, double rel_tol) {
  SeparationPlan plan;
  plan.layer = layer.name;
  if (layer.kind != LayerKind::Conv2D) {
    plan.reason = "not a Conv2D";
    return {layer, plan};
  }
  const std::size_t area = layer.kernel_h * layer.kernel_w;
  plan.original_params = area * layer.n_in * layer.n_out;
  plan.actual_params = plan.original_params;

  std::vector<ChannelFactors> factors(layer.n_in);
  for (std::size_t i = 0; i < layer.n_in; ++i) {
    const ChannelMatrix m = channel_matrix(layer, i);
    const std::size_t rank = numerical_rank(m, rel_tol);
    try {
      factors[i] = extract_basis(m, rank, rel_tol);
    } catch (const InseparableError& e) {
      plan.ranks.push_back(rank);
      plan.reason = "inseparable channel " + std::to_string(i) + ": " + e.what();
      return {layer, plan};
    }
    plan.ranks.push_back(factors[i].rank);
    plan.predicted_params += factors[i].rank * (area + layer.n_out);
  }
  if (plan.predicted_params >= plan.original_params) {
    plan.reason = "no benefit";
    return {layer, plan};
  }

  Layer out;
  out.kind = LayerKind::UnevenDepthwiseConv2D;
  out.name = layer.name;
  out.n_in = layer.n_in;
  out.n_out = layer.n_out;
  out.kernel_h = layer.kernel_h;
  out.kernel_w = layer.kernel_w;
  out.stride = layer.stride;
  out.padding = layer.padding;
  if (layer.has_bias()) out.tensors.emplace("bias", layer.tensor("bias"));
  out.factors = std::move(factors);
  plan.applied = true;
  plan.actual_params = plan.predicted_params;
  plan.reason = "separated";
  return {std::move(out), plan};
}

SeparationResult separate_model(const Model& model, double rel_tol) {
  SeparationResult result;
  result.model = model;
  std::vector<Layer*> convs;
  for_each_layer(result.model, [&](Layer& layer) {
    if (layer.kind == LayerKind::Conv2D) convs.push_back(&layer);
  });
  result.plans.resize(convs.size());
  parallel_for(convs.size(), [&](std::size_t i) {
    auto [layer, plan] = separate_layer(*convs[i], rel_tol);
    *convs[i] = std::move(layer);
    result.plans[i] = std::move(plan);
  });
  return result;
}

Layer expand_to_conv(const Layer& uneven) {
  if (uneven.kind != LayerKind::UnevenDepthwiseConv2D) {
    throw StructureError("expand_to_conv needs an uneven depthwise layer");
  }
  const std::size_t area = uneven.kernel_h * uneven.kernel_w;
  Tensor w(Shape{uneven.kernel_h, uneven.kernel_w, uneven.n_in, uneven.n_out});
  for (std::size_t i = 0; i < uneven.n_in; ++i) {
    const ChannelFactors& f = uneven.factors.at(i);
    for (std::size_t j = 0; j < uneven.n_out; ++j) {
      for (std::size_t e = 0; e < area; ++e) {
        double v = 0.0;
        for (std::size_t k = 0; k < f.rank; ++k) {
          v += f.coeffs[k * uneven.n_out + j] * f.bases[k * area + e];
        }
        w.at({e / uneven.kernel_w, e % uneven.kernel_w, i, j}) = v;
      }
    }
  }
  std::optional<Tensor> bias;
  if (uneven.has_bias()) bias = uneven.tensor("bias");
  return make_conv2d(uneven.name, std::move(w), std::move(bias), uneven.stride, uneven.padding);
}

std::string separation_plans_to_json(const std::vector<SeparationPlan>& plans) {
  nlohmann::json out = nlohmann::json::array();
  for (const SeparationPlan& p : plans) {
    out.push_back({{"layer", p.layer},
                   {"ranks", p.ranks},
                   {"original_params", p.original_params},
                   {"predicted_params", p.predicted_params},
                   {"actual_params", p.actual_params},
                   {"applied", p.applied},
                   {"reason", p.reason}});
  }
  return out.dump(2);
}

}  // namespace red
