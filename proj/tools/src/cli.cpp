// Copyright 2026 The MITKD Lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mitkd_cli/cli.hpp"

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "mitkd/errors.hpp"
#include "mitkd/pipeline/experiment.hpp"

namespace mitkd::cli {

namespace {

struct Arguments {
  std::string config;
  std::string variant;
  std::size_t threads = 1;
  bool force = false;
  bool quiet = false;
};

void add_common(CLI::App& sub, Arguments& a) {
  sub.add_option("--config", a.config, "Experiment config (JSON)")->required();
  sub.add_option("--threads", a.threads, "Worker threads for evaluation cells")->check(CLI::PositiveNumber);
  sub.add_flag("--force", a.force, "Recompute outputs that already exist");
  sub.add_flag("--quiet", a.quiet, "No progress output");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"mitkd: multi-task infused task-agnostic distillation laboratory", "mitkd"};
  app.require_subcommand(1);
  Arguments a;
  const std::vector<std::string> variants{pipeline::kVariantVanilla, pipeline::kVariantSingleTask, pipeline::kVariantMtl,
                                          pipeline::kVariantVanillaLarge};

  auto* pretrain = app.add_subcommand("pretrain", "Pretrain the teacher(s) with masked language modeling");
  auto* prepare = app.add_subcommand("prepare-teacher", "Finetune a pretrained teacher for one variant");
  auto* distill = app.add_subcommand("distill", "Distill students from one teacher variant");
  auto* evaluate = app.add_subcommand("evaluate", "Finetune and evaluate every student");
  auto* report = app.add_subcommand("report", "Render the comparison report");
  auto* run_all = app.add_subcommand("run-all", "Run every stage in order");
  for (auto* sub : {pretrain, prepare, distill, evaluate, report, run_all}) add_common(*sub, a);
  for (auto* sub : {prepare, distill}) {
    sub->add_option("--variant", a.variant, "Teacher variant")->required()->check(CLI::IsMember(variants));
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInvalidConfig;
  }

  try {
    pipeline::Experiment experiment(pipeline::load_config(a.config));
    pipeline::StageOptions options;
    options.force = a.force;
    options.threads = a.threads;
    options.verbose = !a.quiet;
    if (*pretrain) experiment.pretrain(options);
    if (*prepare) experiment.prepare_teacher(a.variant, options);
    if (*distill) experiment.distill(a.variant, options);
    if (*evaluate) experiment.evaluate(options);
    if (*report) experiment.report(options);
    if (*run_all) experiment.run_all(options);
    if (*report || *run_all) out << (experiment.report_dir() / "report.txt").string() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const MissingPrerequisite& e) {
    err << e.what() << "\n";
    return kExitMissingPrerequisite;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace mitkd::cli
