#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lsgc/datapipe.hpp"
#include "lsgc/metrics.hpp"
#include "lsgc/trainer.hpp"

namespace lsgc::runner {

struct RepeatResult {
  std::vector<std::uint64_t> seeds;
  std::vector<train::TrainRunStats> runs;
  std::vector<train::EvalResult> tests;
  metrics::Spread acc, f1;
};

using RunHook = std::function<void(std::size_t run, Model& model, const train::TrainRunStats& stats)>;

// Trains `repeats` fresh models with seeds cfg.seed, cfg.seed + 1, ... and
// evaluates each on the test split.
RepeatResult repeat_training(const train::TrainConfig& cfg, const data::Splits& splits, std::size_t repeats,
                             const RunHook& hook = {});

// One row per run plus the mean ± half-range line.
metrics::Report repeat_report(const RepeatResult& result, const std::string& dataset, Mode mode);

struct AblationRow {
  int r = 0;
  Mode mode = Mode::kClassification;
  std::size_t trainable_params = 0;
  metrics::Confusion confusion;
};

std::vector<AblationRow> ablate_rank(const train::TrainConfig& base, const std::vector<int>& ranks,
                                     const std::vector<Mode>& modes, const data::Splits& splits);
// Rows are ranks, columns are mode x {Acc, F1}, plus parameter counts.
metrics::Report ablation_report(const std::vector<AblationRow>& rows);
std::string ablation_table(const std::vector<AblationRow>& rows);

metrics::Report bench_report(const train::BenchResult& bench, std::size_t examples, std::size_t epochs);

// Reference 7B-scale timings in minutes, shown next to measured ones.
struct ReferenceTiming {
  double gs_llama = 33.72;
  double lsgc_g = 28.95;
  double lsgc_c = 14.34;
};
std::string reference_timing_line(const ReferenceTiming& ref = {});

}  // namespace lsgc::runner
