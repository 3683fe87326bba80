#include "lsgc/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "lsgc/errors.hpp"

namespace lsgc::runner {
namespace {

std::string short_mode(Mode m) { return m == Mode::kGeneration ? "gen" : "cls"; }

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

RepeatResult repeat_training(const train::TrainConfig& cfg, const data::Splits& splits, std::size_t repeats,
                             const RunHook& hook) {
  if (repeats < 1) throw ConfigError("repeats must be at least 1");
  if (splits.test.empty()) throw DataError("test split is empty");
  RepeatResult out;
  std::vector<double> accs, f1s;
  for (std::size_t k = 0; k < repeats; ++k) {
    auto run_cfg = cfg;
    run_cfg.seed = cfg.seed + k;
    auto model = train::build_model(run_cfg);
    auto stats = train::train(model, splits.train, splits.val, run_cfg);
    auto test = train::evaluate(model, splits.test, run_cfg);
    stats.final_eval = test;
    accs.push_back(metrics::accuracy(test.confusion));
    f1s.push_back(metrics::f1(test.confusion));
    if (hook) hook(k, model, stats);
    out.seeds.push_back(run_cfg.seed);
    out.runs.push_back(std::move(stats));
    out.tests.push_back(std::move(test));
  }
  out.acc = metrics::spread(accs);
  out.f1 = metrics::spread(f1s);
  return out;
}

metrics::Report repeat_report(const RepeatResult& result, const std::string& dataset, Mode mode) {
  metrics::Report rep;
  rep.title = "Detection results, " + std::to_string(result.runs.size()) + " run(s)";
  for (std::size_t k = 0; k < result.runs.size(); ++k) {
    metrics::ResultRow row;
    row.dataset = dataset;
    row.mode = short_mode(mode);
    row.confusion = result.tests[k].confusion;
    row.extra["seed"] = std::to_string(result.seeds[k]);
    row.extra["best_epoch"] = std::to_string(result.runs[k].best_epoch);
    if (mode == Mode::kGeneration) row.extra["parse_rate"] = metrics::percent(result.tests[k].parse_rate());
    rep.results.push_back(row);
    rep.timings.push_back({short_mode(mode), result.runs[k].total_seconds, result.runs[k].epoch_loss.size()});
  }
  rep.notes.push_back("mean ± half-range over runs: Acc " + result.acc.render_percent() + ", F1 " +
                      result.f1.render_percent());
  rep.notes.push_back("F1 is the stego (positive) class F1; unparseable outputs count as wrong.");
  return rep;
}

std::vector<AblationRow> ablate_rank(const train::TrainConfig& base, const std::vector<int>& ranks,
                                     const std::vector<Mode>& modes, const data::Splits& splits) {
  std::vector<AblationRow> rows;
  for (int r : ranks) {
    for (Mode mode : modes) {
      auto cfg = base;
      cfg.mode = mode;
      const auto targets = cfg.lora.targets;
      const auto dropout = cfg.lora.lora_dropout;
      cfg.lora = LoraConfig::with_rank(r);
      cfg.lora.targets = targets;
      cfg.lora.lora_dropout = dropout;
      cfg.validate();
      auto model = train::build_model(cfg);
      train::train(model, splits.train, splits.val, cfg);
      const auto ev = train::evaluate(model, splits.test, cfg);
      rows.push_back({r, mode, trainable_param_count(model, mode), ev.confusion});
    }
  }
  return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
  std::vector<int> ranks;
  std::vector<Mode> modes;
  for (const auto& row : rows) {
    if (std::find(ranks.begin(), ranks.end(), row.r) == ranks.end()) ranks.push_back(row.r);
    if (std::find(modes.begin(), modes.end(), row.mode) == modes.end()) modes.push_back(row.mode);
  }
  std::ostringstream out;
  out << pad("r", 6);
  for (Mode m : modes) out << pad(short_mode(m) + " Acc", 10) << pad(short_mode(m) + " F1", 10) << pad(short_mode(m) + " params", 12);
  out << "\n";
  for (int r : ranks) {
    out << pad(std::to_string(r), 6);
    for (Mode m : modes) {
      const auto it = std::find_if(rows.begin(), rows.end(), [&](const AblationRow& a) { return a.r == r && a.mode == m; });
      if (it == rows.end()) {
        out << pad("-", 10) << pad("-", 10) << pad("-", 12);
        continue;
      }
      out << pad(metrics::percent(metrics::accuracy(it->confusion)), 10) << pad(metrics::percent(metrics::f1(it->confusion)), 10)
          << pad(std::to_string(it->trainable_params), 12);
    }
    out << "\n";
  }
  return out.str();
}

metrics::Report ablation_report(const std::vector<AblationRow>& rows) {
  metrics::Report rep;
  rep.title = "LoRA rank ablation";
  for (const auto& a : rows) {
    metrics::ResultRow row;
    row.dataset = "r=" + std::to_string(a.r);
    row.mode = short_mode(a.mode);
    row.confusion = a.confusion;
    row.extra["r"] = std::to_string(a.r);
    row.extra["trainable_params"] = std::to_string(a.trainable_params);
    rep.results.push_back(row);
  }
  rep.notes.push_back(ablation_table(rows));
  return rep;
}

std::string reference_timing_line(const ReferenceTiming& ref) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "reference (7B-scale, minutes): GS-Llama %.2f, LSGC-G %.2f, LSGC-C %.2f; "
                "reduction vs GS-Llama %s%%",
                ref.gs_llama, ref.lsgc_g, ref.lsgc_c, metrics::percent(metrics::reduction(ref.gs_llama, ref.lsgc_c)).c_str());
  return buf;
}

metrics::Report bench_report(const train::BenchResult& bench, std::size_t examples, std::size_t epochs) {
  metrics::Report rep;
  rep.title = "Training time by mode";
  rep.timings.push_back({"gen", bench.t_gen, epochs});
  rep.timings.push_back({"cls", bench.t_cls, epochs});
  rep.provenance["examples"] = std::to_string(examples);
  rep.notes.push_back("T_gen " + std::to_string(bench.t_gen) + " s, T_cls " + std::to_string(bench.t_cls) +
                      " s, reduction " + metrics::percent(bench.reduction) + "%");
  rep.notes.push_back(reference_timing_line());
  return rep;
}

}  // namespace lsgc::runner
