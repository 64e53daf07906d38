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

#include "red/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <utility>

#include "json.hpp"
#include "red/error.hpp"

namespace red {

namespace {

using json = nlohmann::json;

constexpr char kMagic[4] = {'R', 'E', 'D', 'M'};
constexpr std::size_t kHeaderBytes = 16;
constexpr std::size_t kAlign = 8;

std::size_t align_up(std::size_t n) { return (n + kAlign - 1) / kAlign * kAlign; }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

float to_f32(double v, const std::string& where) {
  if (!std::isfinite(v) || std::fabs(v) > std::numeric_limits<float>::max()) {
    throw DataError(where + ": value " + std::to_string(v) + " is not representable as f32");
  }
  return static_cast<float>(v);
}

// One tensor scheduled for the payload section.
struct PendingTensor {
  std::string where;
  Shape shape;
  const std::vector<double>* values;
  std::size_t offset;
};

class Writer {
 public:
  json tensor(std::string name, Shape shape, const std::vector<double>& values,
              const std::string& where) {
    const std::size_t offset = cursor_;
    const std::size_t nbytes = values.size() * sizeof(float);
    cursor_ = align_up(cursor_ + nbytes);
    json desc = {{"name", name},
                 {"dtype", "f32"},
                 {"shape", shape},
                 {"offset", offset},
                 {"nbytes", nbytes}};
    pending_.push_back({where + "/" + name, std::move(shape), &values, offset});
    return desc;
  }

  std::vector<std::uint8_t> payload() const {
    std::vector<std::uint8_t> out(cursor_, 0);
    for (const PendingTensor& p : pending_) {
      std::size_t at = p.offset;
      for (double v : *p.values) {
        const auto bits = std::bit_cast<std::uint32_t>(to_f32(v, p.where));
        for (int i = 0; i < 4; ++i) out[at++] = static_cast<std::uint8_t>(bits >> (8 * i));
      }
    }
    return out;
  }

 private:
  std::size_t cursor_ = 0;
  std::vector<PendingTensor> pending_;
};

json layer_manifest(const Layer& layer, Writer& writer) {
  json attrs = {{"n_in", layer.n_in},         {"n_out", layer.n_out},
                {"kernel_h", layer.kernel_h}, {"kernel_w", layer.kernel_w},
                {"stride", layer.stride},     {"padding", layer.padding}};
  json tensors = json::array();
  for (const auto& [name, t] : layer.tensors) {
    tensors.push_back(writer.tensor(name, t.shape(), t.storage(), layer.name));
  }
  if (layer.kind == LayerKind::UnevenDepthwiseConv2D) {
    json ranks = json::array();
    for (std::size_t i = 0; i < layer.factors.size(); ++i) {
      const ChannelFactors& f = layer.factors[i];
      ranks.push_back(f.rank);
      if (f.rank == 0) continue;
      tensors.push_back(writer.tensor("basis." + std::to_string(i),
                                      {f.rank, layer.kernel_h, layer.kernel_w}, f.bases,
                                      layer.name));
      tensors.push_back(
          writer.tensor("coeff." + std::to_string(i), {f.rank, layer.n_out}, f.coeffs, layer.name));
    }
    attrs["ranks"] = std::move(ranks);
  }
  return {{"name", layer.name},
          {"kind", std::string(to_string(layer.kind))},
          {"attrs", std::move(attrs)},
          {"tensors", std::move(tensors)}};
}

// Reads one tensor descriptor and its payload, enforcing the layout rules.
struct PayloadReader {
  std::span<const std::uint8_t> payload;
  std::vector<std::pair<std::size_t, std::size_t>> extents;

  std::pair<Shape, std::vector<double>> read(const json& desc, const std::string& where) {
    const std::string name = desc.at("name").get<std::string>();
    const std::string at = where + "/" + name;
    if (desc.at("dtype").get<std::string>() != "f32") {
      throw FormatError(at + ": unsupported dtype '" + desc.at("dtype").get<std::string>() +
                        "' (supported: f32)");
    }
    Shape shape = desc.at("shape").get<Shape>();
    const auto offset = desc.at("offset").get<std::uint64_t>();
    const auto nbytes = desc.at("nbytes").get<std::uint64_t>();
    if (shape.empty() || std::any_of(shape.begin(), shape.end(), [](auto d) { return d == 0; })) {
      throw ValidationError(at + ": shape entries must be positive");
    }
    // Guard the product against overflow before trusting it.
    std::uint64_t numel = 1;
    for (std::size_t d : shape) {
      if (numel > std::numeric_limits<std::uint64_t>::max() / 4 / d) {
        throw ValidationError(at + ": shape too large");
      }
      numel *= d;
    }
    if (nbytes != numel * sizeof(float)) {
      throw ValidationError(at + ": manifest declares " + std::to_string(numel) +
                            " values but nbytes covers " + std::to_string(nbytes / sizeof(float)));
    }
    if (offset % kAlign != 0) {
      throw ValidationError(at + ": offset " + std::to_string(offset) + " is not 8-byte aligned");
    }
    if (offset > payload.size() || nbytes > payload.size() - offset) {
      throw ValidationError(at + ": payload holds " +
                            std::to_string(offset > payload.size()
                                               ? 0
                                               : (payload.size() - offset) / sizeof(float)) +
                            " values past offset, manifest declares " + std::to_string(numel));
    }
    extents.emplace_back(offset, offset + nbytes);
    std::vector<double> values(numel);
    const std::uint8_t* p = payload.data() + offset;
    for (std::size_t i = 0; i < numel; ++i, p += 4) {
      const float f = std::bit_cast<float>(get_u32(p));
      if (!std::isfinite(f)) throw DataError(at + ": non-finite value at index " + std::to_string(i));
      values[i] = f;
    }
    return {std::move(shape), std::move(values)};
  }

  void check_overlap() {
    std::sort(extents.begin(), extents.end());
    for (std::size_t i = 1; i < extents.size(); ++i) {
      if (extents[i].first < extents[i - 1].second) {
        throw ValidationError("tensor payloads overlap at offset " +
                              std::to_string(extents[i].first));
      }
    }
    const std::size_t end = extents.empty() ? 0 : align_up(extents.back().second);
    if (payload.size() != end) {
      throw FormatError("payload is " + std::to_string(payload.size()) +
                        " bytes, manifest tensors span " + std::to_string(end));
    }
  }
};

Layer parse_layer(const json& j, PayloadReader& reader, const std::string& fallback_name) {
  Layer layer;
  const std::string kind_name = j.at("kind").get<std::string>();
  const auto kind = layer_kind_from_string(kind_name);
  if (!kind) throw FormatError("unknown layer kind '" + kind_name + "'");
  layer.kind = *kind;
  layer.name = j.value("name", fallback_name);
  if (layer.name.empty()) layer.name = fallback_name;
  const json& attrs = j.at("attrs");
  layer.n_in = attrs.at("n_in").get<std::size_t>();
  layer.n_out = attrs.at("n_out").get<std::size_t>();
  layer.kernel_h = attrs.at("kernel_h").get<std::size_t>();
  layer.kernel_w = attrs.at("kernel_w").get<std::size_t>();
  layer.stride = attrs.at("stride").get<std::size_t>();
  layer.padding = attrs.at("padding").get<std::size_t>();

  std::map<std::string, std::pair<Shape, std::vector<double>>> raw;
  for (const json& desc : j.at("tensors")) {
    const std::string name = desc.at("name").get<std::string>();
    if (raw.count(name)) throw ValidationError(layer.name + ": duplicate tensor '" + name + "'");
    raw.emplace(name, reader.read(desc, layer.name));
  }

  if (layer.kind == LayerKind::UnevenDepthwiseConv2D) {
    const auto ranks = attrs.at("ranks").get<std::vector<std::size_t>>();
    layer.factors.resize(ranks.size());
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      ChannelFactors& f = layer.factors[i];
      f.rank = ranks[i];
      if (f.rank == 0) continue;
      const std::string basis = "basis." + std::to_string(i);
      const std::string coeff = "coeff." + std::to_string(i);
      auto b = raw.find(basis);
      auto c = raw.find(coeff);
      if (b == raw.end() || c == raw.end()) {
        throw ValidationError(layer.name + ": missing factors for channel " + std::to_string(i));
      }
      if (b->second.first != Shape{f.rank, layer.kernel_h, layer.kernel_w} ||
          c->second.first != Shape{f.rank, layer.n_out}) {
        throw ValidationError(layer.name + ": factor shapes for channel " + std::to_string(i) +
                              " do not match rank and kernel");
      }
      f.bases = std::move(b->second.second);
      f.coeffs = std::move(c->second.second);
      raw.erase(b);
      raw.erase(c);
    }
  }
  for (auto& [name, payload] : raw) {
    layer.tensors.emplace(name, Tensor(std::move(payload.first), std::move(payload.second)));
  }
  return layer;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const Model& model) {
  require_valid(model);
  Writer writer;
  json blocks = json::array();
  for (const Block& block : model.blocks) {
    json layers = json::array();
    for (const Layer& layer : block.layers) layers.push_back(layer_manifest(layer, writer));
    blocks.push_back({{"kind", block.kind == BlockKind::Plain ? "plain" : "residual"},
                      {"layers", std::move(layers)}});
  }
  const json manifest = {{"name", model.name},
                         {"metadata", model.metadata},
                         {"blocks", std::move(blocks)}};
  const std::string text = manifest.dump();
  const std::vector<std::uint8_t> payload = writer.payload();

  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + text.size() + payload.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, kRedmVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Model deserialize_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) {
    throw FormatError("truncated header: " + std::to_string(bytes.size()) + " bytes");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic, expected \"REDM\"");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kRedmVersion) {
    throw FormatError("unsupported REDM version " + std::to_string(version) +
                      " (supported versions: " + std::to_string(kRedmVersion) + ")");
  }
  const std::uint64_t manifest_len = get_u64(bytes.data() + 8);
  if (manifest_len > bytes.size() - kHeaderBytes) {
    throw FormatError("manifest length " + std::to_string(manifest_len) + " exceeds file size");
  }
  const auto* text = reinterpret_cast<const char*>(bytes.data() + kHeaderBytes);
  PayloadReader reader{bytes.subspan(kHeaderBytes + manifest_len), {}};

  Model model;
  try {
    const json manifest = json::parse(text, text + manifest_len);
    model.name = manifest.value("name", std::string());
    if (manifest.contains("metadata")) {
      model.metadata = manifest.at("metadata").get<std::map<std::string, std::string>>();
    }
    std::size_t counter = 0;
    for (const json& jb : manifest.at("blocks")) {
      Block block;
      const std::string kind = jb.at("kind").get<std::string>();
      if (kind == "plain") {
        block.kind = BlockKind::Plain;
      } else if (kind == "residual") {
        block.kind = BlockKind::Residual;
      } else {
        throw FormatError("unknown block kind '" + kind + "'");
      }
      for (const json& jl : jb.at("layers")) {
        block.layers.push_back(parse_layer(jl, reader, "layer" + std::to_string(counter++)));
      }
      model.blocks.push_back(std::move(block));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed manifest: ") + e.what());
  }
  reader.check_overlap();
  require_valid(model);
  return model;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return deserialize_model(bytes);
}

Model round_to_storage_precision(Model model) {
  auto round = [](std::vector<double>& values) {
    for (double& v : values) v = static_cast<float>(v);
  };
  for_each_layer(model, [&](Layer& layer) {
    for (auto& [name, t] : layer.tensors) round(t.storage());
    for (ChannelFactors& f : layer.factors) {
      round(f.bases);
      round(f.coeffs);
    }
  });
  return model;
}

}  // namespace red
