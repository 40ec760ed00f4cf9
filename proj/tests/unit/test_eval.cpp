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

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "mitkd/corpus/markov.hpp"
#include "mitkd/corpus/suite.hpp"
#include "mitkd/errors.hpp"
#include "mitkd/eval/eval.hpp"

namespace mitkd::eval {
namespace {

RunResult result(const std::string& variant, const std::string& task, Protocol protocol, double fraction,
                 std::uint64_t seed, double acc, double majority = 0.5) {
  RunResult r;
  r.variant = variant;
  r.task_id = task;
  r.protocol = protocol;
  r.fraction = fraction;
  r.seed = seed;
  r.dev_accuracy = acc;
  r.majority_baseline = majority;
  r.selected = GridPoint{3, 16, 1e-3};
  return r;
}

TEST(FinetuneHparams, GridIsTheCartesianProduct) {
  const FinetuneHparams h;
  const auto grid = h.grid();
  ASSERT_EQ(grid.size(), 12u);
  EXPECT_EQ(grid.front(), (GridPoint{3, 16, 1e-4}));
  EXPECT_EQ(grid[1], (GridPoint{3, 16, 3e-4}));
  EXPECT_EQ(grid.back(), (GridPoint{5, 32, 1e-3}));
}

TEST(FinetuneHparams, EmptyAxisIsAConfigError) {
  FinetuneHparams h;
  h.learning_rates.clear();
  EXPECT_THROW(h.validate(), ConfigError);
}

TEST(ProtocolLabel, NamesFractions) {
  EXPECT_EQ(protocol_label(Protocol::kInDomain, 1.0), "in-domain");
  EXPECT_EQ(protocol_label(Protocol::kOutDomain, 1.0), "out-domain");
  EXPECT_EQ(protocol_label(Protocol::kLowResource, 0.1), "low-resource@0.10");
  EXPECT_EQ(protocol_from_string(to_string(Protocol::kLowResource)), Protocol::kLowResource);
}

TEST(Summarize, SingleRunGivesThatAccuracy) {
  const std::vector<RunResult> runs{result("v", "t", Protocol::kInDomain, 1.0, 1, 0.8125)};
  const Summary s = summarize(runs);
  ASSERT_EQ(s.cells.size(), 1u);
  EXPECT_EQ(s.cells[0].mean, 0.8125);
  EXPECT_EQ(s.cells[0].runs, 1u);
}

// Property: every cell mean equals the arithmetic mean of its stored runs.
TEST(SummarizeProperty, MeansRecomputeFromRuns) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> acc(0.3, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<RunResult> runs;
    for (const char* v : {"a", "b", "c"}) {
      for (const char* t : {"t1", "t2", "t3"}) {
        for (std::uint64_t seed = 1; seed <= 4; ++seed) {
          runs.push_back(result(v, t, Protocol::kOutDomain, 1.0, seed, acc(rng)));
          runs.push_back(result(v, t, Protocol::kLowResource, 0.1, seed, acc(rng)));
        }
      }
    }
    const Summary s = summarize(runs);
    EXPECT_EQ(s.cells.size(), 6u);
    for (const auto& cell : s.cells) {
      double total = 0.0, sq = 0.0;
      std::size_t n = 0;
      for (const auto& r : runs) {
        if (r.variant == cell.variant && protocol_label(r.protocol, r.fraction) == cell.protocol) {
          total += r.dev_accuracy;
          ++n;
        }
      }
      const double mean = total / n;
      for (const auto& r : runs) {
        if (r.variant == cell.variant && protocol_label(r.protocol, r.fraction) == cell.protocol) {
          sq += (r.dev_accuracy - mean) * (r.dev_accuracy - mean);
        }
      }
      EXPECT_EQ(cell.runs, n);
      EXPECT_NEAR(cell.mean, mean, 1e-12);
      EXPECT_NEAR(cell.sd, std::sqrt(sq / (n - 1)), 1e-12);
    }
  }
}

TEST(Summarize, OrderingFollowsOutDomainMean) {
  const std::vector<RunResult> runs{result("low", "t", Protocol::kOutDomain, 1.0, 1, 0.6),
                                    result("high", "t", Protocol::kOutDomain, 1.0, 1, 0.9),
                                    result("mid", "t", Protocol::kOutDomain, 1.0, 1, 0.7)};
  EXPECT_EQ(summarize(runs).ordering, (std::vector<std::string>{"high", "mid", "low"}));
}

TEST(Summarize, SeedSdUsesTaskAveragedSeedMeans) {
  const std::vector<RunResult> runs{result("v", "t1", Protocol::kOutDomain, 1.0, 1, 0.6),
                                    result("v", "t2", Protocol::kOutDomain, 1.0, 1, 0.8),
                                    result("v", "t1", Protocol::kOutDomain, 1.0, 2, 0.9),
                                    result("v", "t2", Protocol::kOutDomain, 1.0, 2, 0.9)};
  const auto* cell = summarize(runs).find("v", "out-domain");
  ASSERT_NE(cell, nullptr);
  // Seed means 0.7 and 0.9.
  EXPECT_NEAR(cell->seed_sd, std::sqrt(0.02), 1e-12);
}

TEST(CompareVariants, HandBuiltDifferenceIsConclusive) {
  std::vector<RunResult> runs;
  for (std::uint64_t seed = 1; seed <= 2; ++seed) {
    runs.push_back(result("a", "t", Protocol::kOutDomain, 1.0, seed, seed == 1 ? 0.68 : 0.72));
    runs.push_back(result("b", "t", Protocol::kOutDomain, 1.0, seed, seed == 1 ? 0.58 : 0.62));
  }
  const auto cmp = compare_variants(summarize(runs));
  ASSERT_EQ(cmp.size(), 1u);
  EXPECT_EQ(cmp[0].first, "a");
  EXPECT_NEAR(cmp[0].difference, 0.10, 1e-12);
  // sd of {0.68, 0.72} is 0.02 * sqrt 2 for both, so the pooled sd is the same.
  EXPECT_NEAR(cmp[0].pooled_sd, 0.02 * std::sqrt(2.0), 1e-12);
  EXPECT_TRUE(cmp[0].conclusive);
}

TEST(CompareVariants, PooledSdIgnoresSpreadAcrossTasks) {
  // Easy and hard tasks differ by 0.4, but every seed has the same task-averaged score.
  std::vector<RunResult> runs;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    runs.push_back(result("a", "easy", Protocol::kOutDomain, 1.0, seed, 0.9));
    runs.push_back(result("a", "hard", Protocol::kOutDomain, 1.0, seed, 0.5));
    runs.push_back(result("b", "easy", Protocol::kOutDomain, 1.0, seed, 0.88));
    runs.push_back(result("b", "hard", Protocol::kOutDomain, 1.0, seed, 0.5));
  }
  const auto cmp = compare_variants(summarize(runs));
  ASSERT_EQ(cmp.size(), 1u);
  EXPECT_NEAR(cmp[0].difference, 0.01, 1e-12);
  EXPECT_NEAR(cmp[0].pooled_sd, 0.0, 1e-12);
  EXPECT_TRUE(cmp[0].conclusive);
}

TEST(CompareVariants, IdenticalVariantsAreInconclusive) {
  std::vector<RunResult> runs;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (const char* v : {"x", "y"}) {
      runs.push_back(result(v, "t", Protocol::kInDomain, 1.0, seed, 0.5 + 0.1 * seed));
      runs.push_back(result(v, "u", Protocol::kOutDomain, 1.0, seed, 0.4 + 0.1 * seed));
    }
  }
  for (const auto& c : compare_variants(summarize(runs))) {
    EXPECT_EQ(c.difference, 0.0);
    EXPECT_FALSE(c.conclusive);
  }
}

TEST(CompareVariants, NeedsTwoVariants) {
  const std::vector<RunResult> runs{result("v", "t", Protocol::kInDomain, 1.0, 1, 0.5)};
  EXPECT_ANY_THROW(compare_variants(summarize(runs)));
}

TEST(FloorCells, FlagsCellsWhereEveryVariantSitsAtTheFloor) {
  std::vector<RunResult> runs;
  for (const char* v : {"a", "b"}) {
    runs.push_back(result(v, "hard", Protocol::kLowResource, 0.01, 1, 0.5, 0.5));
    runs.push_back(result(v, "easy", Protocol::kLowResource, 0.01, 1, std::string(v) == "a" ? 0.5 : 0.7, 0.5));
  }
  const auto cells = floor_cells(summarize(runs));
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].first, "hard");
  EXPECT_EQ(cells[0].second, "low-resource@0.01");
}

TEST(Hygiene, TeacherTrainedOnHeldOutTaskIsRejected) {
  corpus::TaskSuite suite;
  corpus::TaskSpec in, out;
  in.id = "in";
  out.id = "out";
  suite.in_family.push_back(in);
  suite.out_family.push_back(out);
  EXPECT_NO_THROW(check_out_domain_hygiene(suite, {{"mtl", {"in"}}, {"vanilla", {}}}));
  EXPECT_THROW(check_out_domain_hygiene(suite, {{"mtl", {"in", "out"}}}), ConfigError);
}

class ProtocolFixture : public ::testing::Test {
 protected:
  static model::ModelConfig student_config() { return {1, 8, 2, 16, 12, 24, 0.1}; }

  void SetUp() override {
    const corpus::MarkovSource source(5, corpus::Vocab{20});
    suite_ = corpus::make_default_suite(source, 6, {1, 1, 3});
    for (const auto& spec : {suite_.in_family[0], suite_.out_family[1]}) {
      data_.push_back(corpus::generate_task_data(source, spec, 60, 30, 12));
    }
    for (const auto& d : data_) tasks_.push_back({&d.spec, &d.train, &d.dev, suite_.is_out_family(d.spec.id)});
    options_.hparams = FinetuneHparams{{1}, {16}, {1e-3}};
    options_.fractions = {0.5, 1.0};
    options_.seeds = {1, 2};
  }

  corpus::TaskSuite suite_;
  std::vector<corpus::TaskData> data_;
  std::vector<ProtocolTask> tasks_;
  ProtocolOptions options_;
};

TEST_F(ProtocolFixture, FinetuneNeverReportsBelowTheConstantPredictor) {
  const auto student = model::init_model(student_config(), 7);
  for (const auto& d : data_) {
    const RunResult r = finetune_student(student, d.spec, d.train, d.dev, options_.hparams, 8);
    EXPECT_GE(r.dev_accuracy + 1e-12, corpus::majority_baseline(d.dev, d.spec.n_classes));
    EXPECT_GE(r.dev_accuracy, 0.0);
    EXPECT_LE(r.dev_accuracy, 1.0);
    EXPECT_EQ(r.train_size, d.train.size());
  }
}

TEST_F(ProtocolFixture, FinetuneIsDeterministic) {
  const auto student = model::init_model(student_config(), 7);
  const auto& d = data_[0];
  const RunResult a = finetune_student(student, d.spec, d.train, d.dev, options_.hparams, 9);
  const RunResult b = finetune_student(student, d.spec, d.train, d.dev, options_.hparams, 9);
  EXPECT_EQ(a.dev_accuracy, b.dev_accuracy);
  EXPECT_EQ(a.selected, b.selected);
}

TEST_F(ProtocolFixture, FinetuneDoesNotModifyTheStudent) {
  const auto student = model::init_model(student_config(), 7);
  const auto snapshot = student.clone();
  finetune_at(student, data_[0].spec, data_[0].train, data_[0].dev, {1, 16, 1e-3}, 10);
  for (std::size_t i = 0; i < student.parameters().size(); ++i) {
    const auto& a = student.parameters()[i].tensor;
    const auto& b = snapshot.parameters()[i].tensor;
    EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  }
  EXPECT_TRUE(student.heads().empty());
}

TEST_F(ProtocolFixture, SeedAccountingAndProtocolAssignment) {
  StudentMap students;
  students["vanilla"].push_back(model::init_model(student_config(), 11));
  students["mtl"] = {model::init_model(student_config(), 12), model::init_model(student_config(), 13)};
  const auto runs = run_protocol(students, tasks_, options_);
  ASSERT_EQ(runs.size(), 2u * tasks_.size() * 2u * 2u);
  for (const auto& r : runs) {
    if (r.fraction < 1.0) {
      EXPECT_EQ(r.protocol, Protocol::kLowResource);
      EXPECT_EQ(r.train_size, corpus::subsample_count(60, r.fraction));
    } else {
      EXPECT_EQ(r.protocol, suite_.is_out_family(r.task_id) ? Protocol::kOutDomain : Protocol::kInDomain);
    }
  }
  EXPECT_EQ(runs.front().variant, "mtl");
}

TEST_F(ProtocolFixture, ThreadedRunMatchesSequentialRun) {
  StudentMap students;
  students["a"].push_back(model::init_model(student_config(), 14));
  students["b"].push_back(model::init_model(student_config(), 15));
  const auto sequential = run_protocol(students, tasks_, options_);
  ProtocolOptions threaded = options_;
  threaded.threads = 3;
  const auto parallel = run_protocol(students, tasks_, threaded);
  ASSERT_EQ(sequential.size(), parallel.size());
  for (std::size_t i = 0; i < sequential.size(); ++i) {
    EXPECT_EQ(sequential[i].task_id, parallel[i].task_id);
    EXPECT_EQ(sequential[i].dev_accuracy, parallel[i].dev_accuracy);
  }
}

TEST_F(ProtocolFixture, ResumeSkipsComputedCells) {
  StudentMap students;
  students["a"].push_back(model::init_model(student_config(), 16));
  std::size_t fresh = 0;
  ProtocolOptions opts = options_;
  opts.resume = [](const RunResult& key) -> std::optional<RunResult> {
    if (key.fraction < 1.0) return std::nullopt;
    RunResult r = key;
    r.dev_accuracy = 0.25;
    return r;
  };
  opts.on_result = [&](const RunResult&) { ++fresh; };
  const auto runs = run_protocol(students, tasks_, opts);
  EXPECT_EQ(fresh, runs.size() / 2);
  for (const auto& r : runs) {
    if (r.fraction == 1.0) {
      EXPECT_EQ(r.dev_accuracy, 0.25);
    }
  }
}

TEST_F(ProtocolFixture, MixedStudentConfigsAreRefused) {
  StudentMap students;
  students["a"].push_back(model::init_model(student_config(), 17));
  model::ModelConfig other = student_config();
  other.ffn_size = 24;
  students["b"].push_back(model::init_model(other, 18));
  EXPECT_THROW(run_protocol(students, tasks_, options_), ConfigError);
}

TEST_F(ProtocolFixture, WrongStudentCountIsRefused) {
  StudentMap students;
  students["a"] = {model::init_model(student_config(), 1), model::init_model(student_config(), 2),
                   model::init_model(student_config(), 3)};
  EXPECT_THROW(run_protocol(students, tasks_, options_), ConfigError);
  EXPECT_THROW(run_protocol({}, tasks_, options_), ConfigError);
}

}  // namespace
}  // namespace mitkd::eval
