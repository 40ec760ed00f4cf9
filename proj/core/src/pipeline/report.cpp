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

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "mitkd/errors.hpp"
#include "mitkd/pipeline/experiment.hpp"

namespace mitkd::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(const char* pattern, double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, value);
  return buf;
}

void write_csv(const std::vector<eval::RunResult>& runs, const fs::path& path) {
  std::ofstream out(path);
  out << "variant,task,protocol,fraction,seed,dev_accuracy,majority_baseline,train_size,epochs,batch_size,"
         "learning_rate,at_floor,seconds\n";
  for (const auto& r : runs) {
    out << r.variant << ',' << r.task_id << ',' << eval::to_string(r.protocol) << ',' << fmt("%.17g", r.fraction) << ','
        << r.seed << ',' << fmt("%.17g", r.dev_accuracy) << ',' << fmt("%.17g", r.majority_baseline) << ','
        << r.train_size << ',';
    if (r.selected) {
      out << r.selected->epochs << ',' << r.selected->batch_size << ',' << fmt("%.17g", r.selected->learning_rate);
    } else {
      out << ",,";
    }
    out << ',' << (r.at_floor() ? 1 : 0) << ',' << fmt("%.3f", r.seconds) << '\n';
  }
}

std::string render_text(const eval::Summary& summary, const std::vector<eval::Comparison>& comparisons,
                        const std::vector<std::pair<std::string, std::string>>& floors, const std::string& hash) {
  std::ostringstream out;
  out << "config " << hash << "\n";
  out << summary.runs.size() << " runs\n\n";
  const auto protocols = summary.protocols();

  char buf[256];
  std::snprintf(buf, sizeof buf, "%-16s", "variant");
  out << buf;
  for (const auto& p : protocols) {
    std::snprintf(buf, sizeof buf, " %24s", p.c_str());
    out << buf;
  }
  out << "\n";
  for (const auto& v : summary.ordering) {
    std::snprintf(buf, sizeof buf, "%-16s", v.c_str());
    out << buf;
    for (const auto& p : protocols) {
      const eval::SummaryCell* c = summary.find(v, p);
      if (c == nullptr) {
        std::snprintf(buf, sizeof buf, " %24s", "-");
      } else {
        std::snprintf(buf, sizeof buf, " %14.2f +/- %5.2f", 100.0 * c->mean, 100.0 * c->sd);
      }
      out << buf;
    }
    out << "\n";
  }
  out << "\naccuracy in percent, mean +/- sd over seeds and tasks; rows ordered by out-domain mean\n\n";

  out << "pairwise differences (first - second)\n";
  for (const auto& c : comparisons) {
    std::snprintf(buf, sizeof buf, "  %-22s %-14s vs %-14s %+7.2f  pooled sd %5.2f  %s\n", c.protocol.c_str(),
                  c.first.c_str(), c.second.c_str(), 100.0 * c.difference, 100.0 * c.pooled_sd,
                  c.conclusive ? "" : "(inconclusive)");
    out << buf;
  }
  out << "\n";
  if (floors.empty()) {
    out << "no cell sits at the constant-predictor floor for every variant\n";
  } else {
    out << "cells at the constant-predictor floor for every variant and seed:\n";
    for (const auto& [task, protocol] : floors) out << "  " << task << " " << protocol << "\n";
  }
  return out.str();
}

}  // namespace

void render_report(const fs::path& experiment_dir) {
  const fs::path results = experiment_dir / "eval" / "run_results.jsonl";
  if (!fs::exists(results)) throw MissingPrerequisite("missing prerequisite " + results.string() + " (run `evaluate` first)");
  std::vector<eval::RunResult> runs;
  std::set<std::string> hashes;
  for (const auto& doc : read_jsonl(results)) {
    hashes.insert(doc.value("config_hash", std::string()));
    runs.push_back(run_result_from_json(doc));
  }
  if (runs.empty()) throw MissingPrerequisite(results.string() + " holds no results (run `evaluate` first)");
  if (hashes.size() != 1) throw FormatError(results.string() + " mixes results of several config hashes");
  const std::string hash = *hashes.begin();

  // Canonical cell order, independent of completion order in the jsonl.
  std::sort(runs.begin(), runs.end(), [](const eval::RunResult& a, const eval::RunResult& b) {
    return std::tie(a.variant, a.task_id, a.fraction, a.seed) < std::tie(b.variant, b.task_id, b.fraction, b.seed);
  });

  const eval::Summary summary = eval::summarize(runs);
  const auto comparisons = summary.ordering.size() >= 2 ? eval::compare_variants(summary) : std::vector<eval::Comparison>{};
  const auto floors = eval::floor_cells(summary);

  const fs::path dir = experiment_dir / "report";
  fs::create_directories(dir);
  write_csv(runs, dir / "results.csv");
  std::ofstream(dir / "report.txt") << render_text(summary, comparisons, floors, hash);

  json doc = {{"config_hash", hash}, {"runs", runs.size()}, {"ordering", summary.ordering}};
  json cells = json::array();
  for (const auto& c : summary.cells) {
    cells.push_back({{"variant", c.variant}, {"protocol", c.protocol}, {"runs", c.runs}, {"mean", c.mean}, {"sd", c.sd},
                     {"seed_sd", c.seed_sd}});
  }
  doc["cells"] = cells;
  json cmp = json::array();
  for (const auto& c : comparisons) {
    cmp.push_back({{"protocol", c.protocol}, {"first", c.first}, {"second", c.second}, {"difference", c.difference},
                   {"pooled_sd", c.pooled_sd}, {"conclusive", c.conclusive}});
  }
  doc["comparisons"] = cmp;
  json fl = json::array();
  for (const auto& [task, protocol] : floors) fl.push_back({{"task", task}, {"protocol", protocol}});
  doc["floor_cells"] = fl;
  std::ofstream(dir / "summary.json") << doc.dump(2) << "\n";
}

}  // namespace mitkd::pipeline
