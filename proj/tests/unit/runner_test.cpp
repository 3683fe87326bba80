#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <random>
#include <stdexcept>

#include "lsgc/errors.hpp"
#include "lsgc/parallel.hpp"
#include "lsgc/runner.hpp"

using namespace lsgc;

namespace {

train::TrainConfig tiny_cfg() {
  train::TrainConfig cfg;
  cfg.model.n_layers = 1;
  cfg.model.n_heads = 2;
  cfg.model.d_model = 16;
  cfg.model.d_ff = 32;
  cfg.model.max_seq_len = 512;
  cfg.lora = LoraConfig::with_rank(2);
  cfg.batch_size = 4;
  cfg.epochs = 1;
  cfg.seed = 11;
  cfg.adam.lr = 1e-3;
  cfg.budget.max_new_tokens = 2;
  return cfg;
}

data::Splits toy_splits() {
  std::mt19937_64 rng(5);
  auto make = [&](std::size_t n) {
    std::vector<data::LabeledExample> out;
    for (std::size_t i = 0; i < n; ++i) {
      const bool stego = i % 2 == 1;
      std::string s(20, ' ');
      for (char& c : s) c = static_cast<char>((stego ? 'A' : 'a') + rng() % 26);
      out.push_back({s, stego ? Label::kStego : Label::kCover, "toy", stego ? 1.0 : 0.0});
    }
    return out;
  };
  data::Splits s;
  s.train = make(12);
  s.val = make(4);
  s.test = make(6);
  return s;
}

}  // namespace

TEST(Parallel, CoversEveryIndexOnce) {
  for (std::size_t n : {0u, 1u, 7u, 1000u}) {
    std::vector<std::atomic<int>> hits(n);
    parallel_for(n, [&](std::size_t i) { hits[i].fetch_add(1); });
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(hits[i].load(), 1) << i;
  }
}

TEST(Parallel, RethrowsWorkerException) {
  EXPECT_THROW(parallel_for(100, [](std::size_t i) {
                 if (i == 57) throw DataError("bad record 57");
               }),
               DataError);
}

TEST(Parallel, WorkerCountHonoursEnvironment) {
  const char* old = std::getenv("LSGC_THREADS");
  const std::string saved = old ? old : "";
  setenv("LSGC_THREADS", "3", 1);
  EXPECT_EQ(worker_count(), 3u);
  setenv("LSGC_THREADS", "junk", 1);
  EXPECT_GE(worker_count(), 1u);
  if (old) setenv("LSGC_THREADS", saved.c_str(), 1);
  else unsetenv("LSGC_THREADS");
}

TEST(Runner, RepeatTrainingReportsSpreadOverSeeds) {
  const auto splits = toy_splits();
  std::size_t hooked = 0;
  const auto r = runner::repeat_training(tiny_cfg(), splits, 3,
                                         [&](std::size_t, Model&, const train::TrainRunStats&) { ++hooked; });
  EXPECT_EQ(hooked, 3u);
  EXPECT_EQ(r.seeds, (std::vector<std::uint64_t>{11, 12, 13}));
  ASSERT_EQ(r.tests.size(), 3u);
  EXPECT_EQ(r.acc.n, 3u);
  EXPECT_LE(r.acc.min, r.acc.mean);
  EXPECT_GE(r.acc.max, r.acc.mean);
  for (const auto& t : r.tests) EXPECT_EQ(t.confusion.total(), splits.test.size());
  const auto report = runner::repeat_report(r, "toy", Mode::kClassification);
  EXPECT_EQ(report.results.size(), 3u);
  EXPECT_NE(metrics::render(report, metrics::ReportFormat::kText).find("±"), std::string::npos);
}

TEST(Runner, RankAblationCountsScaleLinearly) {
  const auto rows = runner::ablate_rank(tiny_cfg(), {2, 4}, {Mode::kGeneration, Mode::kClassification}, toy_splits());
  ASSERT_EQ(rows.size(), 4u);
  std::size_t gen2 = 0, gen4 = 0, cls2 = 0, cls4 = 0;
  for (const auto& row : rows) {
    auto& slot = row.mode == Mode::kGeneration ? (row.r == 2 ? gen2 : gen4) : (row.r == 2 ? cls2 : cls4);
    slot = row.trainable_params;
  }
  EXPECT_EQ(gen4, 2 * gen2);
  EXPECT_EQ(cls4 - cls2, gen4 - gen2);
  EXPECT_FALSE(runner::ablation_report(rows).results.empty());
}

TEST(Runner, BenchReportCarriesReduction) {
  train::BenchResult b;
  b.t_gen = 33.72;
  b.t_cls = 14.34;
  b.reduction = metrics::reduction(b.t_gen, b.t_cls);
  const auto text = metrics::render(runner::bench_report(b, 100, 5), metrics::ReportFormat::kText);
  EXPECT_NE(text.find("57.47"), std::string::npos) << text;
}
