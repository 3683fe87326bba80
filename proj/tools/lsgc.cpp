#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lsgc/checkpoint.hpp"
#include "lsgc/config.hpp"
#include "lsgc/gradcheck.hpp"
#include "lsgc/runner.hpp"

#ifndef LSGC_BUILD_ID
#define LSGC_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lsgc;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4, kIo = 5, kOther = 6 };

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kConfig: return kUsage;
    case ErrorKind::kData:
    case ErrorKind::kSequenceLength:
    case ErrorKind::kVocabulary:
    case ErrorKind::kExtraction: return kData;
    case ErrorKind::kNumeric: return kNumeric;
    case ErrorKind::kIo: return kIo;
    default: return kOther;
  }
}

std::string timestamp() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string mode;
  std::string data_dir;
  std::string corpus_dir;
  std::string pool;
  std::string checkpoint;
  std::string split = "test";
  std::vector<std::string> inputs;
  std::vector<int> ranks;
  std::string fault_op;
  double fault_factor = 1.5;
};

struct Context {
  config::Config cfg;
  fs::path base;  // relative config paths resolve here
  std::string command;
  std::string started;
  fs::path out;
  const Options* opts = nullptr;

  Mode mode(Mode fallback) const { return opts->mode.empty() ? fallback : mode_from_string(opts->mode); }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(cfg.get_int("train.seed", 0)); }

  // Config-relative path, falling back to the source tree for bundled files.
  fs::path locate(const std::string& key, const std::string& fallback) const {
    const auto value = cfg.get(key, fallback);
    const auto p = config::resolve(base, value);
    if (fs::exists(p) || cfg.has(key)) return p;
    return config::resolve(LSGC_SOURCE_DIR, value);
  }

  train::TrainConfig train_config(Mode m) const {
    auto c = cfg;
    if (!c.has("prompt.template")) c.set("prompt.template", locate("prompt.template", "templates/default_prompt.txt").string());
    return config::train_config(c, m, base);
  }

  void write_manifest(const std::string& status) const {
    if (out.empty() || !fs::is_directory(out)) return;
    json j;
    j["command"] = command;
    j["status"] = status;
    j["config_path"] = opts->config_path;
    j["config_hash"] = cfg.hash();
    j["seed"] = seed();
    j["build_id"] = LSGC_BUILD_ID;
    j["out_dir"] = out.string();
    j["started"] = started;
    j["finished"] = timestamp();
    std::ofstream f(out / "manifest.json");
    if (!f) throw IoError("cannot write manifest in " + out.string());
    f << j.dump(2) << "\n";
  }

  metrics::Report report(const std::string& title) const {
    metrics::Report r;
    r.title = title;
    r.provenance["seed"] = std::to_string(seed());
    r.provenance["config_hash"] = cfg.hash();
    r.provenance["build_id"] = LSGC_BUILD_ID;
    return r;
  }
};

json stats_json(const train::TrainRunStats& s) {
  json j;
  j["epoch_loss"] = s.epoch_loss;
  j["epoch_seconds"] = s.epoch_seconds;
  j["val_accuracy"] = s.val_accuracy;
  j["total_seconds"] = s.total_seconds;
  j["train_forward_passes"] = s.train_forward_passes;
  j["steps"] = s.steps;
  j["best_epoch"] = s.best_epoch;
  if (s.final_eval) {
    const auto& e = *s.final_eval;
    j["test"] = {{"tp", e.confusion.tp}, {"tn", e.confusion.tn}, {"fp", e.confusion.fp}, {"fn", e.confusion.fn},
                 {"forward_passes", e.forward_passes}, {"parse_rate", e.parse_rate()}};
  }
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

int cmd_synth(Context& ctx) {
  const auto corpus = ctx.locate("synth.corpus", "data/seed_corpus.txt");
  const auto lm = stego::MarkovLM::from_file(corpus, static_cast<int>(ctx.cfg.get_int("synth.order", 3)),
                                             ctx.cfg.get_double("synth.smoothing", 2.0));
  const auto pools = config::synth_pools(ctx.cfg);
  const auto base_spec = config::synth_spec(ctx.cfg, pools.front());
  const std::string head = "synth seed=" + std::to_string(base_spec.seed) + " order=" + std::to_string(lm.order()) +
                           " length=" + std::to_string(base_spec.length);
  const auto covers = data::synthesize(lm, base_spec, Label::kCover);
  data::write_jsonl(ctx.out / "covers.jsonl", covers, {head + " label=cover count=" + std::to_string(covers.size())});
  std::cout << "covers: " << covers.size() << " -> " << (ctx.out / "covers.jsonl").string() << "\n";
  for (const auto& pool : pools) {
    const auto spec = config::synth_spec(ctx.cfg, pool);
    const auto stegos = data::synthesize(lm, spec, Label::kStego);
    double bpw = 0.0;
    for (const auto& s : stegos) bpw += s.bpw;
    const auto name = "stego_pool-" + pool.label() + ".jsonl";
    data::write_jsonl(ctx.out / name, stegos,
                      {head + " label=stego pool=" + pool.label() + " count=" + std::to_string(stegos.size())});
    std::cout << "stegos pool=" << pool.label() << ": " << stegos.size() << ", mean bpw "
              << (stegos.empty() ? 0.0 : bpw / static_cast<double>(stegos.size())) << " -> " << (ctx.out / name).string()
              << "\n";
  }
  return kOk;
}

int cmd_prepare(Context& ctx) {
  if (ctx.opts->corpus_dir.empty()) throw ConfigError("prepare needs --corpus DIR (the synth output)");
  const fs::path dir = ctx.opts->corpus_dir;
  const std::string pool = ctx.opts->pool.empty() ? config::synth_pools(ctx.cfg).front().label() : ctx.opts->pool;
  const auto rules = config::filter_rules(ctx.cfg);
  const auto covers = data::filter(data::read_jsonl(dir / "covers.jsonl"), rules);
  const auto stegos = data::filter(data::read_jsonl(dir / ("stego_pool-" + pool + ".jsonl")), rules);
  std::ostringstream log;
  for (const auto& [name, res] : {std::pair{"covers", &covers}, std::pair{"stegos", &stegos}}) {
    for (const auto& r : res->rejections) log << name << " " << r.index << " " << data::to_string(r.rule) << "\n";
  }
  write_text(ctx.out / "filter_log.txt", log.str());
  const auto n_default = std::min(covers.accepted.size(), stegos.accepted.size());
  const auto n = static_cast<std::size_t>(ctx.cfg.get_int("data.n_per_class", static_cast<std::int64_t>(n_default)));
  const auto spec = config::split_spec(ctx.cfg);
  const auto balanced = data::balance(covers.accepted, stegos.accepted, n, spec.seed);
  const auto splits = data::split(balanced, spec);
  data::write_splits(ctx.out, splits, spec);
  std::cout << "pool " << pool << ": " << covers.rejections.size() + stegos.rejections.size() << " rejected, " << n
            << " per class, split " << splits.train.size() << "/" << splits.val.size() << "/" << splits.test.size()
            << " (" << spec.ratio_string() << ")\n";
  return kOk;
}

data::Splits load_splits(const Context& ctx) {
  if (ctx.opts->data_dir.empty()) throw DataError("this command needs --data DIR with prepared splits");
  return data::read_splits(ctx.opts->data_dir);
}

int cmd_train(Context& ctx) {
  const auto splits = load_splits(ctx);
  const auto mode = ctx.mode(Mode::kClassification);
  const auto cfg = ctx.train_config(mode);
  const auto repeats = static_cast<std::size_t>(ctx.cfg.get_int("train.repeats", 1));
  const auto result = runner::repeat_training(cfg, splits, repeats, [&](std::size_t k, Model& model, const train::TrainRunStats& s) {
    const auto suffix = repeats > 1 ? "-" + std::to_string(k) : std::string{};
    save_checkpoint(ctx.out / ("checkpoint" + suffix + ".bin"), model, mode,
                    {{"seed", cfg.seed + k}, {"config_hash", ctx.cfg.hash()}, {"best_epoch", s.best_epoch}});
    write_text(ctx.out / ("stats" + suffix + ".json"), stats_json(s).dump(2) + "\n");
    for (std::size_t e = 0; e < s.epoch_loss.size(); ++e) {
      std::cout << "run " << k << " epoch " << e + 1 << " loss " << s.epoch_loss[e];
      if (e < s.val_accuracy.size()) std::cout << " val_acc " << metrics::percent(s.val_accuracy[e]);
      std::cout << " time " << s.epoch_seconds[e] << "s\n";
    }
    const auto& t = *s.final_eval;
    std::cout << "run " << k << " test Acc " << metrics::percent(metrics::accuracy(t.confusion)) << " F1 "
              << metrics::percent(metrics::f1(t.confusion));
    if (mode == Mode::kGeneration) std::cout << " parse_rate " << metrics::percent(t.parse_rate());
    std::cout << "\n";
  });
  auto rep = runner::repeat_report(result, fs::path(ctx.opts->data_dir).filename().string(), mode);
  const auto prov = ctx.report("").provenance;
  rep.provenance.insert(prov.begin(), prov.end());
  metrics::emit_report(rep, ctx.out / "report");
  std::cout << rep.notes.front() << "\n";
  return kOk;
}

int cmd_eval(Context& ctx) {
  if (ctx.opts->checkpoint.empty()) throw ConfigError("eval needs --checkpoint PATH");
  auto ckpt = load_checkpoint(ctx.opts->checkpoint);
  const auto mode = ctx.mode(ckpt.mode);
  if (mode != ckpt.mode) {
    throw ContractError("checkpoint was trained in " + to_string(ckpt.mode) + " mode, evaluation asked for " +
                        to_string(mode));
  }
  const auto splits = load_splits(ctx);
  const std::vector<data::LabeledExample>* set = nullptr;
  if (ctx.opts->split == "train") set = &splits.train;
  else if (ctx.opts->split == "val") set = &splits.val;
  else if (ctx.opts->split == "test") set = &splits.test;
  else throw ConfigError("--split must be train, val or test");
  auto cfg = ctx.train_config(mode);
  cfg.model = ckpt.model.config();
  const auto ev = train::evaluate(ckpt.model, *set, cfg);
  auto rep = ctx.report("Evaluation of " + ctx.opts->checkpoint);
  metrics::ResultRow row;
  row.dataset = fs::path(ctx.opts->data_dir).filename().string() + "/" + ctx.opts->split;
  row.mode = mode == Mode::kGeneration ? "gen" : "cls";
  row.confusion = ev.confusion;
  row.extra["forward_passes"] = std::to_string(ev.forward_passes);
  if (mode == Mode::kGeneration) row.extra["parse_rate"] = metrics::percent(ev.parse_rate());
  rep.results.push_back(row);
  metrics::emit_report(rep, ctx.out / "report");
  std::cout << metrics::render(rep, metrics::ReportFormat::kText);
  return kOk;
}

int cmd_bench(Context& ctx) {
  const auto splits = load_splits(ctx);
  const auto gen = ctx.train_config(Mode::kGeneration);
  const auto cls = ctx.train_config(Mode::kClassification);
  const auto bench = train::benchmark_modes(splits.train, gen, cls);
  auto rep = runner::bench_report(bench, splits.train.size(), gen.epochs);
  const auto prov = ctx.report("").provenance;
  rep.provenance.insert(prov.begin(), prov.end());
  metrics::emit_report(rep, ctx.out / "bench");
  std::cout << metrics::render(rep, metrics::ReportFormat::kText);
  return kOk;
}

int cmd_ablate(Context& ctx) {
  const auto splits = load_splits(ctx);
  std::vector<int> ranks = ctx.opts->ranks;
  if (ranks.empty()) {
    for (const auto& r : ctx.cfg.get_list("ablate.ranks", {"2", "4", "8"})) {
      try {
        ranks.push_back(std::stoi(r));
      } catch (const std::exception&) {
        throw ConfigError("bad rank '" + r + "' in ablate.ranks");
      }
    }
  }
  std::vector<Mode> modes;
  if (ctx.opts->mode.empty()) modes = {Mode::kGeneration, Mode::kClassification};
  else modes = {mode_from_string(ctx.opts->mode)};
  const auto base = ctx.train_config(modes.front());
  for (int r : ranks) {
    auto lc = LoraConfig::with_rank(r);
    lc.validate(static_cast<std::size_t>(base.model.d_model), static_cast<std::size_t>(base.model.d_model));
  }
  const auto rows = runner::ablate_rank(base, ranks, modes, splits);
  auto rep = runner::ablation_report(rows);
  const auto prov = ctx.report("").provenance;
  rep.provenance.insert(prov.begin(), prov.end());
  metrics::emit_report(rep, ctx.out / "ablation");
  std::cout << runner::ablation_table(rows);
  return kOk;
}

int cmd_gradcheck(Context& ctx) {
  if (!ctx.opts->fault_op.empty()) num::testing::set_adjoint_fault(ctx.opts->fault_op, ctx.opts->fault_factor);
  const auto rep = gradcheck::run();
  num::testing::clear_adjoint_fault();
  std::ostringstream text;
  for (const auto& c : rep.cases) {
    text << (c.ok ? "PASS " : "FAIL ") << c.name << " max_rel_error " << c.max_rel_error << " at " << c.worst_param
         << " (" << c.checked << " entries)\n";
  }
  text << (rep.ok() ? "gradcheck passed" : "gradcheck FAILED") << " in " << rep.seconds << " s\n";
  std::cout << text.str();
  write_text(ctx.out / "gradcheck.txt", text.str());
  return rep.ok() ? kOk : kNumeric;
}

metrics::Report read_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read report " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("bad report " + path.string() + ": " + e.what());
  }
  metrics::Report r;
  r.title = j.value("title", "");
  for (const auto& row : j.value("results", json::array())) {
    metrics::ResultRow rr;
    rr.dataset = row.value("dataset", "");
    rr.mode = row.value("mode", "");
    rr.confusion = {row.value("tp", 0ull), row.value("tn", 0ull), row.value("fp", 0ull), row.value("fn", 0ull)};
    r.results.push_back(rr);
  }
  for (const auto& t : j.value("timings", json::array())) {
    r.timings.push_back({t.value("mode", ""), std::stod(t.value("seconds", "0")), t.value("epochs", 0ul)});
  }
  return r;
}

int cmd_report(Context& ctx) {
  auto rep = ctx.report("Combined report");
  for (const auto& in : ctx.opts->inputs) {
    fs::path p = in;
    if (fs::is_directory(p)) {
      for (const char* name : {"report.json", "bench.json", "ablation.json"}) {
        if (fs::exists(p / name)) {
          p = p / name;
          break;
        }
      }
    }
    const auto part = read_report(p);
    rep.results.insert(rep.results.end(), part.results.begin(), part.results.end());
    rep.timings.insert(rep.timings.end(), part.timings.begin(), part.timings.end());
  }
  double t_gen = 0.0, t_cls = 0.0;
  for (const auto& t : rep.timings) (t.mode == "gen" ? t_gen : t_cls) += t.seconds;
  if (t_gen > 0.0 && t_cls > 0.0) rep.notes.push_back("measured reduction " + metrics::percent(metrics::reduction(t_gen, t_cls)) + "%");
  rep.notes.push_back(runner::reference_timing_line());
  metrics::emit_report(rep, ctx.out / "report");
  std::cout << metrics::render(rep, metrics::ReportFormat::kText);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-mode steganalysis on a tiny LoRA-adapted transformer"};
  app.require_subcommand(1);
  Options opts;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opts.seed, "seed for synthesis, splitting and training");
    sub->add_option("--out", opts.out, "output directory");
  };
  auto with_mode = [&](CLI::App* sub) {
    sub->add_option("--mode", opts.mode, "gen or cls")->check(CLI::IsMember({"gen", "cls", "generation", "classification"}));
  };
  auto* synth = app.add_subcommand("synth", "synthesize cover and stego corpora");
  common(synth);
  auto* prepare = app.add_subcommand("prepare", "filter, balance and split a synthesized corpus");
  common(prepare);
  prepare->add_option("--corpus", opts.corpus_dir, "synth output directory");
  prepare->add_option("--pool", opts.pool, "candidate pool of the stego corpus (e.g. 1, 3, full)");
  auto* trn = app.add_subcommand("train", "train one mode, repeated train.repeats times");
  common(trn);
  with_mode(trn);
  trn->add_option("--data", opts.data_dir, "directory with train/val/test splits");
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  common(ev);
  with_mode(ev);
  ev->add_option("--checkpoint", opts.checkpoint, "checkpoint file")->check(CLI::ExistingFile);
  ev->add_option("--data", opts.data_dir, "directory with splits");
  ev->add_option("--split", opts.split, "train, val or test");
  auto* bench = app.add_subcommand("bench", "time training in both modes");
  common(bench);
  bench->add_option("--data", opts.data_dir, "directory with splits");
  auto* ablate = app.add_subcommand("ablate-r", "LoRA rank ablation");
  common(ablate);
  with_mode(ablate);
  ablate->add_option("--data", opts.data_dir, "directory with splits");
  ablate->add_option("--ranks", opts.ranks, "ranks to try (default from ablate.ranks)");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every op, in double precision");
  common(gc);
  gc->add_option("--inject-fault", opts.fault_op, "scale the adjoint of this op (self-test of the checker)");
  gc->add_option("--fault-factor", opts.fault_factor, "scale applied by --inject-fault");
  auto* report = app.add_subcommand("report", "merge report files and add the reference timings");
  common(report);
  report->add_option("--in", opts.inputs, "run directories or report.json files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  Context ctx;
  auto fail = [&](const std::string& what, int code) {
    std::cerr << "error: " << what << "\n";
    try {
      ctx.write_manifest("error: " + what);
    } catch (const std::exception&) {
    }
    return code;
  };
  try {
    ctx.opts = &opts;
    ctx.command = sub->get_name();
    ctx.started = timestamp();
    if (!opts.config_path.empty()) {
      ctx.cfg = config::Config::load(opts.config_path);
      ctx.base = fs::path(opts.config_path).parent_path();
    } else {
      ctx.base = fs::current_path();
    }
    ctx.cfg.check_known(config::known_keys());
    if (opts.seed) {
      for (const char* key : {"train.seed", "synth.seed", "data.seed"}) ctx.cfg.set(key, std::to_string(*opts.seed));
    }
    ctx.out = opts.out.empty() ? fs::path("runs") / ctx.command : fs::path(opts.out);
    fs::create_directories(ctx.out);

    int rc = kOk;
    if (ctx.command == "synth") rc = cmd_synth(ctx);
    else if (ctx.command == "prepare") rc = cmd_prepare(ctx);
    else if (ctx.command == "train") rc = cmd_train(ctx);
    else if (ctx.command == "eval") rc = cmd_eval(ctx);
    else if (ctx.command == "bench") rc = cmd_bench(ctx);
    else if (ctx.command == "ablate-r") rc = cmd_ablate(ctx);
    else if (ctx.command == "gradcheck") rc = cmd_gradcheck(ctx);
    else if (ctx.command == "report") rc = cmd_report(ctx);
    ctx.write_manifest(rc == kOk ? "ok" : "failed");
    return rc;
  } catch (const Error& e) {
    return fail(e.what(), exit_code(e));
  } catch (const fs::filesystem_error& e) {
    return fail(e.what(), kIo);
  } catch (const std::exception& e) {
    return fail(e.what(), kOther);
  }
}
