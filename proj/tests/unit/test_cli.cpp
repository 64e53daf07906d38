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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "red/metrics.hpp"
#include "red/model_io.hpp"
#include "red/synth.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "red");
  std::ostringstream out, err;
  const int code = red::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("red_cli_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("synth, run and verify a duplicate model") {
    TempDir dir;
    const auto in = dir / "in.redm";
    const auto out = dir / "out.redm";
    const auto report = dir / "report.json";
    REQUIRE(cli({"synth", "duplicates", in, "--seed", "3"}).code == 0);
    const auto r = cli({"run", in, out, "--tau", "0", "--alpha", "0", "--resolution", "1",
                        "--report", report, "--json"});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["params"]["removed_pct"].get<double>() > 0.0);
    CHECK(fs::exists(report));
    CHECK(cli({"verify", in, out, "--tol", "1e-6"}).code == 0);
  }

  TEST_CASE("stages hash keeps the architecture") {
    TempDir dir;
    const auto in = dir / "in.redm";
    const auto out = dir / "out.redm";
    REQUIRE(cli({"synth", "multimodal", in}).code == 0);
    REQUIRE(cli({"run", in, out, "--stages", "hash", "--bandwidth", "0.005"}).code == 0);
    const auto a = red::load_model(in);
    const auto b = red::load_model(out);
    CHECK(red::total_params(a) == red::total_params(b));
    CHECK(red::layer_refs(a) == red::layer_refs(b));
  }

  TEST_CASE("separate-first gives the same parameter count") {
    TempDir dir;
    const auto in = dir / "in.redm";
    REQUIRE(cli({"synth", "convnet", in, "--seed", "2"}).code == 0);
    REQUIRE(cli({"run", in, dir / "a.redm", "--stages", "merge,separate"}).code == 0);
    REQUIRE(cli({"run", in, dir / "b.redm", "--stages", "merge,separate", "--order",
                 "separate-first"})
                .code == 0);
    CHECK(red::total_params(red::load_model(dir / "a.redm")) ==
          red::total_params(red::load_model(dir / "b.redm")));
  }

  TEST_CASE("verify exit codes") {
    TempDir dir;
    const auto a = dir / "a.redm";
    REQUIRE(cli({"synth", "multimodal", a}).code == 0);
    const auto same = cli({"verify", a, a});
    CHECK(same.code == 0);
    CHECK(same.out.find("max |delta| 0 ") != std::string::npos);

    REQUIRE(cli({"hash", a, dir / "h.redm", "--tau", "50"}).code == 0);
    const auto diff = cli({"verify", a, dir / "h.redm", "--tol", "1e-9"});
    CHECK(diff.code == 1);
    CHECK(diff.out.find("different") != std::string::npos);

    red::Model other;
    other.blocks.push_back(red::Block::plain(red::make_dense("x", red::Tensor::filled({3, 32}, 1.0))));
    red::save_model(other, dir / "o.redm");
    CHECK(cli({"verify", a, dir / "o.redm"}).code == 2);
  }

  TEST_CASE("report") {
    TempDir dir;
    const auto a = dir / "a.redm";
    REQUIRE(cli({"synth", "convnet", a}).code == 0);
    const auto self = cli({"report", a, "--baseline", a, "--json", "--resolution", "8"});
    REQUIRE(self.code == 0);
    const auto j = nlohmann::json::parse(self.out);
    CHECK(j["params"]["removed_pct"] == 0.0);
    CHECK(j["zip_ratio"] == 1.0);
    const auto plain = cli({"report", a});
    CHECK(plain.code == 0);
    CHECK(plain.out.find("removed") == std::string::npos);

    REQUIRE(cli({"merge", a, dir / "m.redm", "--alpha", "0.3", "--resolution", "8"}).code == 0);
    const auto cmp = cli({"report", dir / "m.redm", "--baseline", a, "--json", "--resolution", "8"});
    const auto jc = nlohmann::json::parse(cmp.out);
    const auto expect = red::make_report(red::load_model(dir / "m.redm"), nullptr, 8, 8);
    CHECK(jc["params"]["after"] == expect.params_after);
    CHECK(jc["params"]["removed_pct"].get<double>() > 0.0);
  }

  TEST_CASE("errors are reported with a kind") {
    TempDir dir;
    const auto bad = dir / "bad.redm";
    {
      std::ofstream f(bad);
      f << "not a model";
    }
    const auto r = cli({"report", bad});
    CHECK(r.code == 2);
    CHECK(r.err.find("error: format") != std::string::npos);
    CHECK(cli({"report", dir / "missing.redm"}).code == 2);
    CHECK(cli({"synth", "nothing", dir / "x.redm"}).code == 2);
    CHECK(cli({"run", bad}).code == 2);
    CHECK(cli({"run", bad, dir / "y.redm", "--tau", "100"}).code == 2);
    CHECK(cli({}).code != 0);
  }

  TEST_CASE("help exits cleanly") { CHECK(cli({"--help"}).code == 0); }
}
