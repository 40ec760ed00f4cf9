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

#include "mitkd/eval/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <set>
#include <thread>

#include "mitkd/errors.hpp"
#include "mitkd/model/training.hpp"
#include "mitkd/numerics/adam.hpp"
#include "mitkd/numerics/ops.hpp"
#include "mitkd/numerics/tape.hpp"

namespace mitkd::eval {

void FinetuneHparams::validate() const {
  if (epochs.empty() || batch_sizes.empty() || learning_rates.empty()) {
    throw ConfigError("finetune grid: epochs, batch_sizes and learning_rates must all be non-empty");
  }
  for (auto e : epochs) {
    if (e == 0) throw ConfigError("finetune grid: epochs must be positive");
  }
  for (auto b : batch_sizes) {
    if (b == 0) throw ConfigError("finetune grid: batch sizes must be positive");
  }
  for (double lr : learning_rates) {
    if (!(lr > 0.0)) throw ConfigError("finetune grid: learning rates must be positive");
  }
}

std::vector<GridPoint> FinetuneHparams::grid() const {
  std::vector<GridPoint> out;
  for (auto e : epochs) {
    for (auto b : batch_sizes) {
      for (double lr : learning_rates) out.push_back({e, b, lr});
    }
  }
  return out;
}

const char* to_string(Protocol protocol) {
  switch (protocol) {
    case Protocol::kInDomain: return "in-domain";
    case Protocol::kOutDomain: return "out-domain";
    case Protocol::kLowResource: return "low-resource";
  }
  return "unknown";
}

Protocol protocol_from_string(const std::string& name) {
  if (name == "in-domain") return Protocol::kInDomain;
  if (name == "out-domain") return Protocol::kOutDomain;
  if (name == "low-resource") return Protocol::kLowResource;
  throw ConfigError("unknown protocol '" + name + "'");
}

std::string protocol_label(Protocol protocol, double fraction) {
  if (protocol != Protocol::kLowResource) return to_string(protocol);
  char buf[32];
  std::snprintf(buf, sizeof buf, "low-resource@%.2f", fraction);
  return buf;
}

double finetune_at(const model::EncoderModel& student, const corpus::TaskSpec& task,
                   const corpus::DatasetSplit& train, const corpus::DatasetSplit& dev, const GridPoint& point,
                   std::uint64_t seed) {
  if (train.examples.empty()) throw ConfigError("finetune: task '" + task.id + "' has an empty training split");
  model::EncoderModel m = student.clone();
  m.remove_heads();
  m.add_classification_head(task.id, task.n_classes, num::derive_seed(seed, "finetune-head"));

  const std::size_t n = train.size();
  const std::size_t batch_size = std::min(point.batch_size, n);
  const std::size_t steps = point.epochs * ((n + batch_size - 1) / batch_size);
  model::EpochCursor cursor(n, num::derive_seed(seed, "finetune-order"));
  num::Rng dropout_rng(num::derive_seed(seed, "finetune-dropout"));
  model::ForwardOptions options;
  options.dropout_rng = &dropout_rng;
  num::AdamState state;
  std::vector<int> labels;
  for (std::size_t step = 0; step < steps; ++step) {
    const auto idx = cursor.next(batch_size);
    const model::Batch batch = model::collate(train.examples, idx, &labels);
    m.zero_grad();
    num::Tape tape;
    num::Tensor loss;
    {
      num::Tape::Scope scope(tape);
      loss = num::cross_entropy_loss(model::classification_logits(m, task.id, batch, options), labels);
    }
    tape.backward(loss);
    num::adam_step(m.all_parameters(), state, num::lr_schedule(step, steps, point.learning_rate));
  }
  m.zero_grad();
  return model::accuracy(m, task.id, dev.examples);
}

RunResult finetune_student(const model::EncoderModel& student, const corpus::TaskSpec& task,
                           const corpus::DatasetSplit& train, const corpus::DatasetSplit& dev,
                           const FinetuneHparams& hparams, std::uint64_t seed) {
  hparams.validate();
  if (dev.examples.empty()) throw ConfigError("finetune: task '" + task.id + "' has an empty dev split");
  RunResult result;
  result.task_id = task.id;
  result.seed = seed;
  result.train_size = train.size();
  result.majority_baseline = corpus::majority_baseline(dev, task.n_classes);

  bool have = false;
  for (const GridPoint& point : hparams.grid()) {
    const double acc = finetune_at(student, task, train, dev, point, seed);
    if (!have || acc > result.dev_accuracy) {
      result.dev_accuracy = acc;
      result.selected = point;
      have = true;
    }
  }
  const auto train_hist = corpus::label_histogram(train, task.n_classes);
  const int majority = static_cast<int>(std::max_element(train_hist.begin(), train_hist.end()) - train_hist.begin());
  const auto constant_hits = std::count_if(dev.examples.begin(), dev.examples.end(),
                                           [&](const corpus::Example& e) { return e.label == majority; });
  const double constant_acc = static_cast<double>(constant_hits) / static_cast<double>(dev.size());
  if (constant_acc > result.dev_accuracy) {
    result.dev_accuracy = constant_acc;
    result.selected.reset();
  }
  return result;
}

std::vector<RunResult> run_protocol(const StudentMap& students, std::span<const ProtocolTask> tasks,
                                    const ProtocolOptions& options) {
  if (students.empty()) throw ConfigError("protocol: no student variants");
  if (tasks.empty()) throw ConfigError("protocol: no tasks");
  if (options.fractions.empty()) throw ConfigError("protocol: no fractions");
  if (options.seeds.empty()) throw ConfigError("protocol: no seeds");
  options.hparams.validate();
  for (double f : options.fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("protocol: fractions must lie in (0, 1]");
  }
  const model::ModelConfig* reference = nullptr;
  for (const auto& [variant, models] : students) {
    if (models.size() != 1 && models.size() != options.seeds.size()) {
      throw ConfigError("protocol: variant '" + variant + "' has " + std::to_string(models.size()) +
                        " students; expected 1 or one per seed (" + std::to_string(options.seeds.size()) + ")");
    }
    for (const auto& m : models) {
      if (reference == nullptr) reference = &m.config();
      if (!(m.config() == *reference)) {
        throw ConfigError("protocol: student of variant '" + variant + "' has config " + model::describe(m.config()) +
                          ", expected " + model::describe(*reference) + " (fair comparison)");
      }
    }
  }
  for (const auto& t : tasks) {
    if (!t.spec || !t.train || !t.dev) throw ConfigError("protocol: task entry without spec or data");
  }

  struct Cell {
    const model::EncoderModel* student;
    const ProtocolTask* task;
    RunResult key;
  };
  std::vector<Cell> cells;
  for (const auto& [variant, models] : students) {
    for (const auto& task : tasks) {
      for (double fraction : options.fractions) {
        for (std::size_t s = 0; s < options.seeds.size(); ++s) {
          RunResult key;
          key.variant = variant;
          key.task_id = task.spec->id;
          key.fraction = fraction;
          key.seed = options.seeds[s];
          key.protocol = fraction < 1.0 ? Protocol::kLowResource
                                        : (task.out_family ? Protocol::kOutDomain : Protocol::kInDomain);
          cells.push_back({&models[models.size() == 1 ? 0 : s], &task, std::move(key)});
        }
      }
    }
  }

  std::vector<RunResult> results(cells.size());
  std::mutex report_mutex;
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& cell = cells[i];
      if (options.resume) {
        if (auto cached = options.resume(cell.key)) {
          results[i] = std::move(*cached);
          continue;
        }
      }
      const auto& spec = *cell.task->spec;
      const std::uint64_t seed = cell.key.seed;
      const auto started = std::chrono::steady_clock::now();
      const corpus::DatasetSplit train =
          corpus::subsample(*cell.task->train, cell.key.fraction, num::derive_seed(seed, "subsample:" + spec.id));
      RunResult r = finetune_student(*cell.student, spec, train, *cell.task->dev, options.hparams,
                                     num::derive_seed(seed, "finetune:" + spec.id));
      r.variant = cell.key.variant;
      r.protocol = cell.key.protocol;
      r.fraction = cell.key.fraction;
      r.seed = seed;
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      results[i] = r;
      if (options.on_result) {
        std::lock_guard lock(report_mutex);
        options.on_result(r);
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(options.threads, cells.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return results;
}

void check_out_domain_hygiene(const corpus::TaskSuite& suite,
                              const std::map<std::string, std::vector<std::string>>& teacher_tasks) {
  for (const auto& [teacher, ids] : teacher_tasks) {
    for (const auto& id : ids) {
      if (suite.is_out_family(id)) {
        throw ConfigError("out-domain hygiene: teacher '" + teacher + "' was finetuned on held-out task '" + id + "'");
      }
    }
  }
}

namespace {

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double sample_sd(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

const SummaryCell* Summary::find(const std::string& variant, const std::string& protocol) const {
  for (const auto& c : cells) {
    if (c.variant == variant && c.protocol == protocol) return &c;
  }
  return nullptr;
}

std::vector<std::string> Summary::protocols() const {
  std::vector<std::string> out;
  for (const auto& c : cells) {
    if (std::find(out.begin(), out.end(), c.protocol) == out.end()) out.push_back(c.protocol);
  }
  return out;
}

Summary summarize(std::span<const RunResult> runs) {
  Summary summary;
  summary.runs.assign(runs.begin(), runs.end());
  // Protocol groups in a fixed order: in-domain, out-domain, then low-resource by fraction.
  const auto group_rank = [](const RunResult& r) {
    return std::make_pair(static_cast<int>(r.protocol), r.protocol == Protocol::kLowResource ? r.fraction : 0.0);
  };
  std::map<std::pair<int, double>, std::string> labels;
  std::set<std::string> variants;
  for (const auto& r : runs) {
    labels.emplace(group_rank(r), protocol_label(r.protocol, r.fraction));
    variants.insert(r.variant);
  }
  for (const auto& variant : variants) {
    for (const auto& [rank, label] : labels) {
      std::vector<double> accs;
      std::map<std::uint64_t, std::vector<double>> by_seed;
      for (const auto& r : runs) {
        if (r.variant != variant || group_rank(r) != rank) continue;
        accs.push_back(r.dev_accuracy);
        by_seed[r.seed].push_back(r.dev_accuracy);
      }
      if (accs.empty()) continue;
      std::vector<double> seed_means;
      for (const auto& [seed, xs] : by_seed) seed_means.push_back(mean_of(xs));
      summary.cells.push_back({variant, label, accs.size(), mean_of(accs), sample_sd(accs), sample_sd(seed_means)});
    }
  }
  summary.ordering.assign(variants.begin(), variants.end());
  const auto out_mean = [&](const std::string& v) {
    const SummaryCell* c = summary.find(v, to_string(Protocol::kOutDomain));
    return c ? c->mean : -1.0;
  };
  std::stable_sort(summary.ordering.begin(), summary.ordering.end(),
                   [&](const std::string& a, const std::string& b) { return out_mean(a) > out_mean(b); });
  return summary;
}

std::vector<Comparison> compare_variants(const Summary& summary) {
  if (summary.ordering.size() < 2) throw ConfigError("compare_variants: needs at least two variants");
  std::vector<Comparison> out;
  for (const auto& protocol : summary.protocols()) {
    for (std::size_t i = 0; i < summary.ordering.size(); ++i) {
      for (std::size_t j = i + 1; j < summary.ordering.size(); ++j) {
        const SummaryCell* a = summary.find(summary.ordering[i], protocol);
        const SummaryCell* b = summary.find(summary.ordering[j], protocol);
        if (!a || !b) continue;
        Comparison c;
        c.protocol = protocol;
        c.first = a->variant;
        c.second = b->variant;
        c.difference = a->mean - b->mean;
        c.pooled_sd = std::sqrt((a->seed_sd * a->seed_sd + b->seed_sd * b->seed_sd) / 2.0);
        c.conclusive = c.difference != 0.0 && std::abs(c.difference) >= c.pooled_sd;
        out.push_back(c);
      }
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> floor_cells(const Summary& summary) {
  std::map<std::pair<std::string, std::string>, bool> all_floor;
  for (const auto& r : summary.runs) {
    const auto key = std::make_pair(r.task_id, protocol_label(r.protocol, r.fraction));
    auto [it, inserted] = all_floor.emplace(key, true);
    it->second = it->second && r.at_floor();
  }
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [key, floor] : all_floor) {
    if (floor) out.push_back(key);
  }
  return out;
}

}  // namespace mitkd::eval
