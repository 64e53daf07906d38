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

#include "cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "red/error.hpp"
#include "red/inference.hpp"
#include "red/metrics.hpp"
#include "red/model_io.hpp"
#include "red/pipeline.hpp"
#include "red/synth.hpp"

namespace red::cli {

namespace {

struct Options {
  std::string input;
  std::string output;
  double tau_pct = 0.0;
  std::string tau_strategy = "constant";
  double alpha = 0.0;
  std::string alpha_strategy = "block";
  double rel_tol = kDefaultRelTol;
  bool no_fold_bn = false;
  bool hash_bias = true;
  bool distance_no_bias = false;
  std::size_t grid_size = kDefaultGridSize;
  double bandwidth = 0.0;
  std::string stages = "all";
  std::string order = "merge-first";
  std::uint64_t seed = 0;
  bool json = false;
  std::string resolution = "32";
  std::string report_path;
  std::size_t inputs = 100;
  double tol = 1e-6;
  std::string baseline;
  std::string kind;
};

struct Resolution {
  std::size_t h = 32;
  std::size_t w = 32;
};

Resolution parse_resolution(const std::string& s) {
  Resolution r;
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) {
      r.h = r.w = std::stoul(s);
    } else {
      r.h = std::stoul(s.substr(0, x));
      r.w = std::stoul(s.substr(x + 1));
    }
  } catch (const std::exception&) {
    throw ValidationError("bad resolution '" + s + "', expected N or HxW");
  }
  if (r.h == 0 || r.w == 0) throw ValidationError("resolution must be positive");
  return r;
}

Strategy parse_strategy(const std::string& s) {
  const auto v = strategy_from_string(s);
  if (!v) throw ValidationError("unknown strategy '" + s + "'");
  return *v;
}

PipelineConfig make_config(const Options& o, std::vector<Stage> stages) {
  if (!(o.tau_pct >= 0.0 && o.tau_pct < 100.0)) {
    throw ValidationError("--tau is a percentage in [0, 100)");
  }
  PipelineConfig cfg;
  cfg.hash.tau = o.tau_pct / 100.0;
  cfg.hash.tau_strategy = parse_strategy(o.tau_strategy);
  cfg.hash.grid_size = o.grid_size;
  cfg.hash.hash_bias = o.hash_bias;
  if (o.bandwidth > 0.0) cfg.hash.bandwidth = o.bandwidth;
  cfg.merge.alpha = o.alpha;
  cfg.merge.alpha_strategy = parse_strategy(o.alpha_strategy);
  cfg.merge.fold_bn = !o.no_fold_bn;
  cfg.merge.distance_bias = !o.distance_no_bias;
  cfg.merge.rel_tol = o.rel_tol;
  cfg.rel_tol = o.rel_tol;
  cfg.stages = std::move(stages);
  const auto order = stage_order_from_string(o.order);
  if (!order) throw ValidationError("unknown order '" + o.order + "'");
  cfg.order = *order;
  cfg.seed = o.seed;
  return cfg;
}

void add_pipeline_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--tau", o.tau_pct, "Mean contrast in percent of each layer's weight range");
  cmd->add_option("--tau-strategy", o.tau_strategy,
                  "constant, block, linear_ascending or linear_descending");
  cmd->add_option("--alpha", o.alpha, "Mean merge percentile in [0, 1)");
  cmd->add_option("--alpha-strategy", o.alpha_strategy,
                  "constant, block, linear_ascending or linear_descending");
  cmd->add_option("--rel-tol", o.rel_tol, "Relative tolerance of the rank test");
  cmd->add_flag("--no-fold-bn", o.no_fold_bn, "Keep batch norms instead of folding them");
  cmd->add_flag("--hash-bias,!--no-hash-bias", o.hash_bias, "Hash biases with their weights");
  cmd->add_flag("--distance-no-bias", o.distance_no_bias,
                "Leave biases out of neuron distances");
  cmd->add_option("--grid-size", o.grid_size, "Density grid points");
  cmd->add_option("--bandwidth", o.bandwidth, "Fixed density bandwidth for every layer");
  cmd->add_option("--order", o.order, "merge-first or separate-first");
  cmd->add_option("--seed", o.seed, "Seed of the synthetic evaluation inputs");
  cmd->add_option("--resolution", o.resolution, "Input resolution N or HxW");
  cmd->add_option("--report", o.report_path, "Write the JSON report to this file");
  cmd->add_flag("--json", o.json, "Print the report as JSON");
}

int do_pipeline(const Options& o, std::vector<Stage> stages, std::ostream& out) {
  const Resolution res = parse_resolution(o.resolution);
  const PipelineConfig cfg = make_config(o, std::move(stages));
  const Model original = load_model(o.input);
  const PipelineResult r = run_pipeline(original, cfg);
  save_model(r.model, o.output);

  CompressionReport report = make_report(r.model, &original, res.h, res.w);
  for (const StageSnapshot& s : r.snapshots) {
    report.stages.push_back({s.stage, s.params, total_flops(s.model, res.h, res.w).flops});
  }
  for (const MergeEntry& e : r.merge_plan.entries) {
    if (e.skipped) continue;
    report.merges.push_back({e.producers.front(), e.gamma(), e.alpha, e.realized_alpha()});
  }
  const auto inputs = random_inputs(original, o.inputs, o.seed, res.h, res.w);
  report.delta = logit_delta(original, r.model, inputs);

  const std::string json = report_to_json(report);
  if (!o.report_path.empty()) {
    std::ofstream f(o.report_path);
    if (!f) throw IoError("cannot write " + o.report_path);
    f << json << "\n";
  }
  out << (o.json ? json + "\n" : report_to_text(report));
  return kOk;
}

int do_verify(const Options& o, const std::string& other, std::ostream& out) {
  const Resolution res = parse_resolution(o.resolution);
  const Model a = load_model(o.input);
  const Model b = load_model(other);
  const auto inputs = random_inputs(a, o.inputs, o.seed, res.h, res.w);
  const LogitDelta d = logit_delta(a, b, inputs);
  const bool same = d.max_abs_delta <= o.tol;
  char line[256];
  std::snprintf(line, sizeof line,
                "max |delta| %.6g  mean |delta| %.6g  gap %.6g +- %.6g  inputs %zu  tol %.3g\n",
                d.max_abs_delta, d.mean_abs_delta, d.gap_mean, d.gap_stddev, d.inputs, o.tol);
  out << line << (same ? "equivalent" : "different") << "\n";
  return same ? kOk : kMismatch;
}

int do_report(const Options& o, std::ostream& out) {
  const Resolution res = parse_resolution(o.resolution);
  const Model m = load_model(o.input);
  std::optional<Model> base;
  if (!o.baseline.empty()) base = load_model(o.baseline);
  const CompressionReport r = make_report(m, base ? &*base : nullptr, res.h, res.w);
  out << (o.json ? report_to_json(r) + "\n" : report_to_text(r));
  return kOk;
}

int do_synth(const Options& o, std::ostream& out) {
  Model m;
  if (o.kind == "duplicates") {
    DuplicateSpec spec;
    spec.seed = o.seed;
    spec.widths = {16, 32, 32, 32, 32, 32, 32, 32, 10};
    spec.planted = {0, 2, 4, 6};
    m = gen_model_with_duplicates(spec).model;
  } else if (o.kind == "residual") {
    m = gen_residual_with_duplicates(o.seed, 8, 2).model;
  } else if (o.kind == "separable") {
    SeparableSpec spec;
    spec.seed = o.seed;
    spec.padding = 1;
    m.name = "separable";
    m.blocks.push_back(Block::plain(gen_separable_conv(spec)));
  } else if (o.kind == "multimodal") {
    m = gen_multimodal_model(o.seed, {32, 64, 64, 10}, spaced_modes(8, 0.1), 0.005);
  } else if (o.kind == "convnet") {
    ConvNetSpec spec;
    spec.seed = o.seed;
    spec.channels = {8, 8, 16, 16, 16};
    spec.residual_after = {1, 3};
    spec.batchnorm = true;
    m = gen_conv_net(spec);
  } else {
    throw ValidationError("unknown synth kind '" + o.kind +
                          "' (duplicates, residual, separable, multimodal, convnet)");
  }
  save_model(m, o.output);
  out << "wrote " << o.output << " (" << total_params(m) << " params)\n";
  return kOk;
}

std::string error_kind(const Error& e) {
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const DataError*>(&e)) return "data";
  if (dynamic_cast<const ValidationError*>(&e)) return "validation";
  if (dynamic_cast<const IoError*>(&e)) return "io";
  if (dynamic_cast<const EvaluationError*>(&e)) return "evaluation";
  if (dynamic_cast<const StructureError*>(&e)) return "structure";
  if (dynamic_cast<const EstimationError*>(&e)) return "estimation";
  if (dynamic_cast<const InseparableError*>(&e)) return "inseparable";
  return "error";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Data-free structured compression of neural networks", "red"};
  app.require_subcommand(1);
  Options o;
  std::string other;

  auto* run_cmd = app.add_subcommand("run", "Run the configured stages and write the result");
  run_cmd->add_option("input", o.input, "Input REDM model")->required();
  run_cmd->add_option("output", o.output, "Output REDM model")->required();
  add_pipeline_options(run_cmd, o);
  run_cmd->add_option("--stages", o.stages, "Comma-separated subset of hash,merge,separate");

  CLI::App* single[3];
  const char* names[3] = {"hash", "merge", "separate"};
  const char* help[3] = {"Hash weights onto density modes", "Merge similar neurons",
                         "Separate convolutions into uneven depthwise form"};
  for (int i = 0; i < 3; ++i) {
    single[i] = app.add_subcommand(names[i], help[i]);
    single[i]->add_option("input", o.input, "Input REDM model")->required();
    single[i]->add_option("output", o.output, "Output REDM model")->required();
    add_pipeline_options(single[i], o);
  }

  auto* verify = app.add_subcommand("verify", "Compare two models on seeded random inputs");
  verify->add_option("a", o.input, "Reference model")->required();
  verify->add_option("b", other, "Candidate model")->required();
  verify->add_option("--inputs", o.inputs, "Number of random inputs");
  verify->add_option("--seed", o.seed, "Input seed");
  verify->add_option("--tol", o.tol, "Maximum absolute output difference");
  verify->add_option("--resolution", o.resolution, "Input resolution N or HxW");

  auto* report = app.add_subcommand("report", "Parameter, FLOPs and zip-size report");
  report->add_option("model", o.input, "Model to report")->required();
  report->add_option("--baseline", o.baseline, "Baseline model for removed percentages");
  report->add_option("--resolution", o.resolution, "Input resolution N or HxW");
  report->add_flag("--json", o.json, "Print JSON");

  auto* synth = app.add_subcommand("synth", "Write a synthetic planted model");
  synth->add_option("kind", o.kind, "duplicates, residual, separable, multimodal or convnet")
      ->required();
  synth->add_option("output", o.output, "Output REDM model")->required();
  synth->add_option("--seed", o.seed, "Generator seed");

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kError;
  }

  try {
    if (run_cmd->parsed()) return do_pipeline(o, parse_stages(o.stages), out);
    for (int i = 0; i < 3; ++i) {
      if (single[i]->parsed()) return do_pipeline(o, {*stage_from_string(names[i])}, out);
    }
    if (verify->parsed()) return do_verify(o, other, out);
    if (report->parsed()) return do_report(o, out);
    if (synth->parsed()) return do_synth(o, out);
  } catch (const Error& e) {
    err << "error: " << error_kind(e) << ": " << e.what() << "\n";
    return kError;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return kError;
  }
  return kError;
}

}  // namespace red::cli
